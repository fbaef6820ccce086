#include "ioclab/gcl.hpp"

#include <fstream>
#include <ostream>

namespace ioclab {

namespace {

double mean_distance(const EnvSpec& env, const std::vector<Trajectory>& trajs) {
  if (!env.distance_to_goal || trajs.empty())
    return std::numeric_limits<double>::quiet_NaN();
  double d = 0.0;
  for (const auto& t : trajs) d += env.distance_to_goal(t.states.back());
  return d / static_cast<double>(trajs.size());
}

double mean_net_cost(const CostNetwork& net, const std::vector<Trajectory>& trajs) {
  double c = 0.0;
  for (const auto& t : trajs) c += cost_traj(net, t);
  return c / static_cast<double>(trajs.size());
}

double kl_to_truth(const std::vector<GaussianTrajDist>& truth,
                   const LinearGaussianController& ctrl) {
  if (truth.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& t : truth)
    total += kl_traj(GaussianTrajDist{t.dyn, ctrl}, t.ctrl);
  return total / static_cast<double>(truth.size());
}

LinearGaussianController initial_controller(const EnvSpec& env, InitMode mode,
                                            const GaussianTrajDist& demo_dist,
                                            double random_action_var) {
  if (mode == InitMode::DemoFit) return demo_dist.ctrl;
  return LinearGaussianController::zeros(
      env.horizon, env.dx, env.du,
      random_action_var * env.action_scale * env.action_scale);
}

}  // namespace

GclResult guided_cost_learning(const EnvSpec& env, const std::vector<Trajectory>& demos,
                               CostNetwork net, const GclConfig& cfg, const GclContext& ctx) {
  if (demos.empty()) throw ConfigError("guided_cost_learning: no demonstrations");
  if (cfg.outer_iters < 1 || cfg.samples_per_iter < 1)
    throw ConfigError("guided_cost_learning: iterations and samples per iteration must be >= 1");

  Rng rng_roll = Rng::substream(cfg.seed, "gcl/rollout");
  Rng rng_ioc = Rng::substream(cfg.seed, "gcl/ioc");
  Rng rng_gmm = Rng::substream(cfg.seed, "gcl/gmm");

  const GaussianTrajDist demo_dist = fit_demo_distribution(demos);
  LinearGaussianController ctrl =
      initial_controller(env, cfg.init, demo_dist, cfg.random_init_action_var);

  GclResult out;
  out.init_controller = ctrl;
  out.samples.register_proposal(ctx.demo_proposal_override ? *ctx.demo_proposal_override
                                                           : demo_dist.ctrl);

  IocConfig ioc_cfg = cfg.ioc;
  ioc_cfg.use_importance_weights = cfg.ablation.use_importance_weights;
  ioc_cfg.objective.use_lcr = cfg.ablation.use_lcr;
  ioc_cfg.objective.use_mono = cfg.ablation.use_mono;

  double eps = cfg.polopt.epsilon_init;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  double prev_cost_mean = 0.0;
  CostNetwork cost_snapshot = net;  // cost that produced the previous policy update
  LinearGaussianController prev_ctrl = ctrl;
  std::vector<Eigen::VectorXd> gmm_pool;
  DynamicsProvider exact = exact_dynamics_provider(env);

  for (int iter = 0; iter < cfg.outer_iters; ++iter) {
    const int pidx = out.samples.register_proposal(ctrl);
    std::vector<Trajectory> d_traj;
    d_traj.reserve(cfg.samples_per_iter);
    for (int i = 0; i < cfg.samples_per_iter; ++i)
      d_traj.push_back(rollout_env(env, ctrl, rng_roll));
    for (const auto& t : d_traj) out.samples.add(t, pidx);

    // Both improvements are measured with the cost that made the previous
    // update.
    if (iter > 0 && std::isfinite(predicted)) {
      const double cur_mean = mean_net_cost(cost_snapshot, d_traj);
      eps = adapt_step({eps, prev_ctrl, predicted, prev_cost_mean - cur_mean});
    }

    std::vector<IocTerms> trace = ioc_update(net, demos, out.samples, ioc_cfg, rng_ioc);
    cost_snapshot = net;
    prev_cost_mean = mean_net_cost(cost_snapshot, d_traj);

    // Dynamics from the fresh samples only; the GMM prior sees all data.
    LinearGaussianDynamics dyn;
    if (cfg.polopt.exact_dynamics) {
      std::vector<Eigen::VectorXd> xm(env.horizon, Eigen::VectorXd::Zero(env.dx));
      std::vector<Eigen::VectorXd> um(env.horizon, Eigen::VectorXd::Zero(env.du));
      for (const auto& s : d_traj)
        for (int t = 0; t < env.horizon; ++t) {
          xm[t] += s.states[t] / static_cast<double>(d_traj.size());
          um[t] += s.actions[t] / static_cast<double>(d_traj.size());
        }
      dyn = exact(xm, um);
    } else {
      for (const auto& s : d_traj)
        for (int t = 0; t + 1 < s.horizon(); ++t) {
          Eigen::VectorXd v(2 * env.dx + env.du);
          v << s.states[t], s.actions[t], s.states[t + 1];
          gmm_pool.push_back(std::move(v));
        }
      GmmPrior gmm;
      const GmmPrior* prior = nullptr;
      if (cfg.polopt.use_gmm_prior) {
        int K = std::min<int>(static_cast<int>(gmm_pool.size()) / 40,
                              cfg.polopt.gmm_max_clusters);
        if (K >= 1) {
          gmm = fit_gmm(gmm_pool, K, cfg.polopt.gmm_prior_strength, rng_gmm);
          prior = &gmm;
        }
      }
      dyn = fit_dynamics(d_traj, prior, cfg.polopt.dyn_ridge);
    }

    // Nominal points: mean trajectory of the current controller under the
    // fitted dynamics.
    GaussianTrajDist cur{dyn, ctrl};
    std::vector<StepMarginal> marg = forward_marginals(cur);
    std::vector<Eigen::VectorXd> x_nom(env.horizon), u_nom(env.horizon);
    for (int t = 0; t < env.horizon; ++t) {
      x_nom[t] = marg[t].mean.head(env.dx);
      u_nom[t] = marg[t].mean.tail(env.du);
    }
    std::vector<CostExpansion> exps(env.horizon);
    for (int t = 0; t < env.horizon; ++t) exps[t] = cost_quad_expansion(net, x_nom[t], u_nom[t]);

    KlUpdateResult upd =
        kl_constrained_update(ctrl, dyn, exps, x_nom, u_nom,
                              {eps, cfg.ablation.use_maxent_term, cfg.polopt.fixed_action_var});
    predicted = expected_quad_cost(cur, exps, x_nom, u_nom) -
                expected_quad_cost(GaussianTrajDist{dyn, upd.ctrl}, exps, x_nom, u_nom);
    prev_ctrl = ctrl;
    ctrl = upd.ctrl;

    GclIterRow row;
    row.iter = iter;
    row.ioc_loss =
        trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back().loss;
    row.kl_to_truth = kl_to_truth(ctx.truth, ctrl);
    if (ctx.gt) {
      double c = 0.0;
      for (const auto& t : d_traj) c += traj_ground_truth_cost(*ctx.gt, t);
      row.gt_cost_mean = c / static_cast<double>(d_traj.size());
    }
    row.distance_to_goal = mean_distance(env, d_traj);
    out.report.push_back(row);
  }

  out.cost = std::move(net);
  out.controller = std::move(ctrl);
  return out;
}

void write_gcl_report_csv(std::ostream& os, std::span<const GclIterRow> report) {
  os << "iter,ioc_loss,kl_to_truth,gt_cost_mean,distance_to_goal\n";
  for (const auto& r : report) {
    os << r.iter << ',' << format_double(r.ioc_loss) << ',' << format_double(r.kl_to_truth)
       << ',' << format_double(r.gt_cost_mean) << ',' << format_double(r.distance_to_goal)
       << '\n';
  }
}

BaselineResult baseline_irl(const EnvSpec& env, const std::vector<Trajectory>& demos,
                            CostNetwork net, const BaselineConfig& cfg, const GclContext& ctx) {
  (void)ctx;
  if (demos.empty()) throw ConfigError("baseline_irl: no demonstrations");
  Rng rng_roll = Rng::substream(cfg.seed, "baseline/rollout");
  Rng rng_ioc = Rng::substream(cfg.seed, "baseline/ioc");
  Rng rng_pol = Rng::substream(cfg.seed, "baseline/polopt");

  const GaussianTrajDist demo_dist = fit_demo_distribution(demos);
  BaselineResult out;

  LinearGaussianController proposal =
      initial_controller(env, cfg.proposal, demo_dist, cfg.random_init_action_var);
  // The fitted demo distribution always enters the fusion set; the background
  // proposal is registered separately when distinct.
  out.samples.register_proposal(demo_dist.ctrl);
  int pidx = 0;
  if (cfg.proposal != InitMode::DemoFit) pidx = out.samples.register_proposal(proposal);

  for (int i = 0; i < cfg.n_samples; ++i)
    out.samples.add(rollout_env(env, proposal, rng_roll), pidx);

  IocConfig ioc_cfg = cfg.ioc;
  ioc_cfg.use_importance_weights = cfg.use_importance_weights;
  out.trace = ioc_update(net, demos, out.samples, ioc_cfg, rng_ioc);

  // Optimize a fresh policy against the learned cost.
  PoloptProblem prob;
  prob.sample = env_sampler(env);
  prob.expand = [&net](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return cost_quad_expansion(net, x, u);
  };
  prob.traj_cost = [&net](const Trajectory& t) { return cost_traj(net, t); };
  prob.exact_dynamics = exact_dynamics_provider(env);
  prob.horizon = env.horizon;
  prob.dx = env.dx;
  prob.du = env.du;
  PoloptResult pol = optimize_policy(prob, proposal, cfg.polopt, rng_pol);

  std::vector<Trajectory> eval;
  for (int i = 0; i < 10; ++i) eval.push_back(rollout_env(env, pol.ctrl, rng_roll));
  out.final_distance = mean_distance(env, eval);
  out.controller = std::move(pol.ctrl);
  out.cost = std::move(net);
  return out;
}

// ---- controller checkpoint ----

namespace {
constexpr const char* kCtrlMagic = "ioclab-controller-checkpoint";
constexpr int kCtrlVersion = 1;

void write_mat(std::ostream& os, const Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_mat(std::istream& is, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (!(is >> m(i, j))) throw ConfigError("controller checkpoint: truncated matrix");
  return m;
}
}  // namespace

void save_controller_checkpoint(const std::string& path, const LinearGaussianController& c) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << kCtrlMagic << ' ' << kCtrlVersion << '\n';
  f << "dims " << c.horizon() << ' ' << c.state_dim() << ' ' << c.action_dim() << '\n';
  for (int t = 0; t < c.horizon(); ++t) {
    f << "step " << t << '\n';
    write_mat(f, c.K[t]);
    write_mat(f, c.k[t].transpose());
    write_mat(f, c.sigma[t]);
  }
  f << "end\n";
}

LinearGaussianController load_controller_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != kCtrlMagic) throw ConfigError("not a controller checkpoint: " + path);
  if (version != kCtrlVersion)
    throw ConfigError("unsupported controller checkpoint version " + std::to_string(version));
  std::string tok;
  int T = 0, dx = 0, du = 0;
  if (!(f >> tok >> T >> dx >> du) || tok != "dims")
    throw ConfigError("controller checkpoint: missing dims");
  LinearGaussianController c;
  c.K.resize(T);
  c.k.resize(T);
  c.sigma.resize(T);
  for (int i = 0; i < T; ++i) {
    int t;
    if (!(f >> tok >> t) || tok != "step")
      throw ConfigError("controller checkpoint: missing step record");
    c.K[t] = read_mat(f, du, dx);
    c.k[t] = read_mat(f, 1, du).transpose();
    c.sigma[t] = read_mat(f, du, du);
  }
  f >> tok;
  if (tok != "end") throw ConfigError("controller checkpoint: missing end marker");
  return c;
}

}  // namespace ioclab
