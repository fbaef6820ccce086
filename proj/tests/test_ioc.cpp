#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <sstream>

#include "ioclab/ioc.hpp"

using namespace ioclab;

namespace {

Trajectory one_step(double x, double u) {
  Trajectory t;
  t.states.push_back(Eigen::VectorXd::Constant(1, x));
  t.actions.push_back(Eigen::VectorXd::Constant(1, u));
  return t;
}

// Network computing exactly ||u||^2 per step (state part zeroed out).
CostNetwork action_cost_net() {
  CostNetwork net = init_identity(1, {2}, 2);
  net.head_A = Eigen::MatrixXd::Zero(2, 2);
  net.head_b = Eigen::VectorXd::Zero(2);
  net.torque_weight = 1.0;
  return net;
}

CostNetwork small_random_net(int d_x, Rng& rng) {
  CostNetConfig cfg;
  cfg.hidden = {5};
  cfg.feature_dim = 4;
  cfg.identity_init = false;
  cfg.head_init_scale = 0.7;
  cfg.torque_weight = 0.05;
  return make_cost_network(d_x, cfg, rng);
}

Eigen::VectorXd fd_loss_gradient(CostNetwork net,
                                 const std::function<double(const CostNetwork&)>& f,
                                 double h = 1e-5) {
  Eigen::VectorXd p = flatten_params(net);
  Eigen::VectorXd g(p.size());
  for (long i = 0; i < p.size(); ++i) {
    Eigen::VectorXd pp = p;
    pp[i] += h;
    unflatten_params(pp, net);
    double fp = f(net);
    pp[i] -= 2.0 * h;
    unflatten_params(pp, net);
    double fm = f(net);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("fusion weights: single proposal inverts its density") {
  Eigen::MatrixXd log_q(3, 1);
  log_q << std::log(0.2), std::log(0.7), std::log(1.3);
  Eigen::VectorXd log_z = fusion_log_weights_from_log_densities(log_q);
  CHECK(std::exp(log_z[0]) == doctest::Approx(1.0 / 0.2).epsilon(1e-12));
  CHECK(std::exp(log_z[1]) == doctest::Approx(1.0 / 0.7).epsilon(1e-12));
  CHECK(std::exp(log_z[2]) == doctest::Approx(1.0 / 1.3).epsilon(1e-12));
}

TEST_CASE("fusion weights: two proposals average in density space") {
  Eigen::MatrixXd log_q(1, 2);
  log_q << std::log(0.2), std::log(0.3);
  Eigen::VectorXd log_z = fusion_log_weights_from_log_densities(log_q);
  CHECK(std::exp(log_z[0]) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("fusion weights: no proposals is an error") {
  SampleSet s;
  CHECK_THROWS_AS(fusion_log_weights(s), NumericError);
}

TEST_CASE("fusion estimator integrates exp(-c) on a 1-D toy") {
  // proposal N(0, 1.5^2), target integral of exp(-u^2/2) = sqrt(2 pi)
  SampleSet s;
  LinearGaussianController q = LinearGaussianController::zeros(1, 1, 1, 2.25);
  int pidx = s.register_proposal(q);
  Rng rng(7);
  const int n = 20000;
  for (int i = 0; i < n; ++i) s.add(one_step(0.0, 1.5 * rng.gaussian()), pidx);

  Eigen::VectorXd log_z = fusion_log_weights(s);
  Eigen::VectorXd expo(n);
  for (int j = 0; j < n; ++j)
    expo[j] = log_z[j] - 0.5 * s.trajectories[j].actions[0].squaredNorm();
  double estimate = std::exp(logsumexp(expo) - std::log(double(n)));
  CHECK(estimate == doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(0.02));

  // dropping the weights estimates a different (biased) quantity
  Eigen::VectorXd plain(n);
  for (int j = 0; j < n; ++j) plain[j] = -0.5 * s.trajectories[j].actions[0].squaredNorm();
  double biased = std::exp(logsumexp(plain) - std::log(double(n)));
  CHECK(std::abs(biased - std::sqrt(2.0 * M_PI)) / std::sqrt(2.0 * M_PI) > 0.05);
}

TEST_CASE("ioc_loss: hand-computed value") {
  CostNetwork net = action_cost_net();
  std::vector<Trajectory> demos = {one_step(0.0, std::sqrt(2.0))};           // cost 2
  std::vector<Trajectory> samples = {one_step(0.0, 1.0), one_step(0.0, std::sqrt(3.0))};
  Eigen::VectorXd log_z = Eigen::VectorXd::Zero(2);

  IocObjectiveConfig obj;
  obj.use_lcr = false;
  obj.use_mono = false;
  IocTerms t = ioc_loss(net, demos, samples, log_z, obj);
  const double expected = 2.0 + std::log(0.5 * (std::exp(-1.0) + std::exp(-3.0)));
  CHECK(t.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(t.loss == doctest::Approx(0.433781).epsilon(1e-4));
  CHECK(t.demo_term == doctest::Approx(2.0));
}

TEST_CASE("ioc nll is invariant to constant cost shifts") {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd dc = rng.gaussian_vec(4).array() + 3.0;
    Eigen::VectorXd sc = rng.gaussian_vec(6).array() + 3.0;
    Eigen::VectorXd lz = rng.gaussian_vec(6);
    double kappa = 10.0 * rng.gaussian();
    double a = ioc_nll_from_costs(dc, sc, lz);
    double b = ioc_nll_from_costs(dc.array() + kappa, sc.array() + kappa, lz);
    CHECK(a == doctest::Approx(b).epsilon(1e-8));
  }
}

TEST_CASE("ioc nll stays finite for very large per-step costs") {
  Eigen::VectorXd dc = Eigen::VectorXd::Constant(3, 1e4 * 100.0);
  Eigen::VectorXd sc = Eigen::VectorXd::Constant(5, 1e4 * 100.0);
  Eigen::VectorXd lz = Eigen::VectorXd::Zero(5);
  CHECK(std::isfinite(ioc_nll_from_costs(dc, sc, lz)));
}

TEST_CASE("sample softmax weights form a probability vector") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    Eigen::VectorXd sc = 50.0 * rng.gaussian_vec(8);
    Eigen::VectorXd lz = 5.0 * rng.gaussian_vec(8);
    Eigen::VectorXd w = sample_softmax_weights(sc, lz);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ioc_gradient: demo equal to the only sample cancels exactly") {
  CostNetwork net = action_cost_net();
  std::vector<Trajectory> demos = {one_step(0.4, 0.8)};
  std::vector<Trajectory> samples = {one_step(0.4, 0.8)};
  Eigen::VectorXd log_z = Eigen::VectorXd::Zero(1);
  IocObjectiveConfig obj;
  obj.use_lcr = false;
  obj.use_mono = false;
  CostGradient g = ioc_gradient(net, demos, samples, log_z, obj);
  CHECK(flatten_gradient(g).norm() == 0.0);
}

TEST_CASE("ioc_gradient: matches finite differences of ioc_loss") {
  Rng rng(23);
  for (int rep = 0; rep < 8; ++rep) {
    CostNetwork net = small_random_net(2, rng);
    std::vector<Trajectory> demos, samples;
    auto mk_traj = [&](double spread) {
      Trajectory t;
      for (int s = 0; s < 4; ++s) {
        t.states.push_back(spread * rng.gaussian_vec(2));
        t.actions.push_back(rng.gaussian_vec(1));
      }
      return t;
    };
    for (int i = 0; i < 2; ++i) demos.push_back(mk_traj(0.5));
    for (int i = 0; i < 3; ++i) samples.push_back(mk_traj(1.5));
    Eigen::VectorXd log_z = 0.3 * rng.gaussian_vec(3);

    IocObjectiveConfig obj;
    obj.lambda_lcr = 0.8;
    obj.lambda_mono = 0.6;
    obj.mono_margin = 0.25;

    CostGradient g = ioc_gradient(net, demos, samples, log_z, obj);
    Eigen::VectorXd fd = fd_loss_gradient(net, [&](const CostNetwork& n) {
      return ioc_loss(n, demos, samples, log_z, obj).loss;
    });
    double rel = (flatten_gradient(g) - fd).norm() / std::max(1e-8, fd.norm());
    CHECK(rel < 1e-3);
  }
}

TEST_CASE("ioc_update: zero iterations leaves parameters untouched") {
  Rng rng(31);
  CostNetwork net = small_random_net(1, rng);
  Eigen::VectorXd before = flatten_params(net);

  SampleSet samples;
  int p = samples.register_proposal(LinearGaussianController::zeros(3, 1, 1, 1.0));
  Rng roll(3);
  for (int i = 0; i < 4; ++i) {
    Trajectory t;
    for (int s = 0; s < 3; ++s) {
      t.states.push_back(roll.gaussian_vec(1));
      t.actions.push_back(roll.gaussian_vec(1));
    }
    samples.add(t, p);
  }
  std::vector<Trajectory> demos(samples.trajectories.begin(), samples.trajectories.begin() + 2);

  IocConfig cfg;
  cfg.inner_iters = 0;
  Rng rng_u(1);
  auto trace = ioc_update(net, demos, samples, cfg, rng_u);
  CHECK(trace.empty());
  CHECK((flatten_params(net) - before).norm() == 0.0);
}

TEST_CASE("ioc_update: full batch step equals one manual step on the pools") {
  Rng rng(37);
  CostNetwork net_a = small_random_net(1, rng);
  CostNetwork net_b = net_a;

  SampleSet samples;
  int p = samples.register_proposal(LinearGaussianController::zeros(4, 1, 1, 1.0));
  Rng roll(5);
  std::vector<Trajectory> demos;
  for (int i = 0; i < 3; ++i) {
    Trajectory t;
    for (int s = 0; s < 4; ++s) {
      t.states.push_back(roll.gaussian_vec(1));
      t.actions.push_back(roll.gaussian_vec(1));
    }
    if (i < 2) samples.add(t, p);
    else demos.push_back(t);
  }

  IocConfig cfg;
  cfg.inner_iters = 1;
  cfg.demo_batch = 100;   // >= pool, so the batch is the pool
  cfg.sample_batch = 100;
  Rng rng_u(9);
  ioc_update(net_a, demos, samples, cfg, rng_u);

  // manual: gradient on pools with demos appended to the samples
  std::vector<Trajectory> aug = samples.trajectories;
  for (const auto& d : demos) aug.push_back(d);
  Eigen::VectorXd log_z(aug.size());
  log_z << fusion_log_weights(samples),
      fusion_log_weights(samples, std::span<const Trajectory>(demos));
  CostGradient g = ioc_gradient(net_b, demos, aug, log_z, cfg.objective);
  AdamOptimizer opt(net_b.param_count(), cfg.step_size, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
  Eigen::VectorXd params = flatten_params(net_b);
  opt.apply(params, flatten_gradient(g));
  unflatten_params(params, net_b);

  CHECK((flatten_params(net_a) - flatten_params(net_b)).norm() < 1e-14);
}

TEST_CASE("ioc_update: loss trends down when demos are cheap and samples costly") {
  // demos hover near the origin, background samples drift away
  LinearGaussianDynamics dyn;
  const int T = 8;
  dyn.F.assign(T - 1, (Eigen::MatrixXd(1, 2) << 1.0, 1.0).finished());
  dyn.f.assign(T - 1, Eigen::VectorXd::Zero(1));
  dyn.N.assign(T - 1, 1e-4 * Eigen::MatrixXd::Identity(1, 1));
  dyn.init_mean = Eigen::VectorXd::Zero(1);
  dyn.init_cov = 0.01 * Eigen::MatrixXd::Identity(1, 1);

  LinearGaussianController good = LinearGaussianController::zeros(T, 1, 1, 0.01);
  for (auto& K : good.K) K(0, 0) = -0.5;
  LinearGaussianController bad = LinearGaussianController::zeros(T, 1, 1, 0.01);
  for (auto& k : bad.k) k[0] = 0.4;

  Rng roll(11);
  std::vector<Trajectory> demos;
  for (int i = 0; i < 10; ++i) demos.push_back(rollout_lgc(dyn, good, roll));
  SampleSet samples;
  int p = samples.register_proposal(bad);
  samples.register_proposal(good);  // demo proposal for the fusion set
  for (int i = 0; i < 20; ++i) samples.add(rollout_lgc(dyn, bad, roll), p);

  Rng rng(41);
  CostNetwork net = make_cost_network(1, {}, rng);
  IocConfig cfg;
  cfg.inner_iters = 100;
  cfg.step_size = 0.01;
  cfg.objective.lambda_lcr = 0.1;
  cfg.objective.lambda_mono = 0.1;
  Rng rng_u(2);
  auto trace = ioc_update(net, demos, samples, cfg, rng_u);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) head += trace[i].loss;
  for (int i = 90; i < 100; ++i) tail += trace[i].loss;
  CHECK(tail < head);
}

TEST_CASE("ioc_update: demo-append keeps a separated toy bounded below") {
  // demos live at x = +3, background samples at x = -3; without the demo
  // batch in the sample set the log term can be driven to -infinity
  auto make_pool = [](double center, int n, Rng& rng) {
    std::vector<Trajectory> out;
    for (int i = 0; i < n; ++i) {
      Trajectory t;
      for (int s = 0; s < 3; ++s) {
        t.states.push_back(Eigen::VectorXd::Constant(1, center + 0.05 * rng.gaussian()));
        t.actions.push_back(Eigen::VectorXd::Constant(1, 0.1 * rng.gaussian()));
      }
      out.push_back(t);
    }
    return out;
  };
  Rng rng(71);
  std::vector<Trajectory> demos = make_pool(3.0, 4, rng);
  SampleSet samples;
  int p = samples.register_proposal(LinearGaussianController::zeros(3, 1, 1, 4.0));
  for (auto& t : make_pool(-3.0, 6, rng)) samples.add(std::move(t), p);

  IocConfig cfg;
  cfg.inner_iters = 200;
  cfg.step_size = 0.1;
  cfg.objective.use_lcr = false;
  cfg.objective.use_mono = false;

  auto run = [&](bool append) {
    CostNetConfig nc;
    nc.torque_weight = 0.0;
    Rng nr(5);
    CostNetwork net = make_cost_network(1, nc, nr);
    IocConfig c = cfg;
    c.append_demo_batch = append;
    Rng ur(9);
    return ioc_update(net, demos, samples, c, ur);
  };

  auto no_append = run(false);
  auto with_append = run(true);
  double min_no_append = 0.0, min_with_append = 0.0;
  for (const auto& t : no_append) min_no_append = std::min(min_no_append, t.loss);
  for (const auto& t : with_append) min_with_append = std::min(min_with_append, t.loss);
  CHECK(min_no_append < -100.0);
  CHECK(min_with_append > -50.0);
}

TEST_CASE("ioc trace csv header") {
  std::vector<IocTerms> trace(2);
  std::stringstream ss;
  write_ioc_trace_csv(ss, trace);
  std::string first = ss.str().substr(0, ss.str().find('\n'));
  CHECK(first == "iter,loss,demo_term,logZ_term,reg_lcr,reg_mono");
}
