#include "ioclab/ioc.hpp"

#include <algorithm>
#include <ostream>

namespace ioclab {

Eigen::VectorXd fusion_log_weights_from_log_densities(const Eigen::MatrixXd& log_q) {
  const int m = static_cast<int>(log_q.rows());
  const int k = static_cast<int>(log_q.cols());
  if (k < 1) throw NumericError("fusion_log_weights: no proposals registered");
  Eigen::VectorXd log_z(m);
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd row = log_q.row(j).transpose();
    log_z[j] = std::log(static_cast<double>(k)) - logsumexp(row);
  }
  return log_z;
}

Eigen::VectorXd fusion_log_weights(const SampleSet& samples,
                                   std::span<const Trajectory> trajs) {
  const int k = static_cast<int>(samples.proposals.size());
  if (k < 1) throw NumericError("fusion_log_weights: no proposals registered");
  std::vector<ControllerDensity> dens;
  dens.reserve(k);
  for (const auto& p : samples.proposals) dens.emplace_back(p);
  Eigen::MatrixXd log_q(static_cast<int>(trajs.size()), k);
  for (size_t j = 0; j < trajs.size(); ++j)
    for (int c = 0; c < k; ++c) log_q(static_cast<int>(j), c) = dens[c].log_density(trajs[j]);
  return fusion_log_weights_from_log_densities(log_q);
}

Eigen::VectorXd fusion_log_weights(const SampleSet& samples) {
  return fusion_log_weights(samples,
                            std::span<const Trajectory>(samples.trajectories));
}

double ioc_nll_from_costs(const Eigen::VectorXd& demo_costs,
                          const Eigen::VectorXd& sample_costs,
                          const Eigen::VectorXd& log_z) {
  if (demo_costs.size() < 1 || sample_costs.size() < 1)
    throw NumericError("ioc loss: need at least one demo and one sample");
  if (sample_costs.size() != log_z.size())
    throw NumericError("ioc loss: weight/sample count mismatch");
  const Eigen::VectorXd exponents = log_z - sample_costs;
  const double log_m = std::log(static_cast<double>(sample_costs.size()));
  return demo_costs.mean() + logsumexp(exponents) - log_m;
}

Eigen::VectorXd sample_softmax_weights(const Eigen::VectorXd& sample_costs,
                                       const Eigen::VectorXd& log_z) {
  const Eigen::VectorXd exponents = log_z - sample_costs;
  const double lse = logsumexp(exponents);
  return (exponents.array() - lse).exp();
}

namespace {

Eigen::VectorXd traj_costs(const CostNetwork& net, std::span<const Trajectory> trajs) {
  Eigen::VectorXd c(static_cast<int>(trajs.size()));
  for (size_t i = 0; i < trajs.size(); ++i) c[static_cast<int>(i)] = cost_traj(net, trajs[i]);
  return c;
}

IocTerms loss_terms(const CostNetwork& net, std::span<const Trajectory> demos,
                    std::span<const Trajectory> samples, const Eigen::VectorXd& log_z,
                    const IocObjectiveConfig& cfg, Eigen::VectorXd* demo_costs_out,
                    Eigen::VectorXd* sample_costs_out) {
  Eigen::VectorXd demo_costs = traj_costs(net, demos);
  Eigen::VectorXd sample_costs = traj_costs(net, samples);
  IocTerms t;
  t.demo_term = demo_costs.mean();
  t.logz_term = ioc_nll_from_costs(demo_costs, sample_costs, log_z) - t.demo_term;
  if (cfg.use_lcr) {
    double lcr = 0.0;
    for (const auto& tr : demos) lcr += reg_lcr(net, tr);
    for (const auto& tr : samples) lcr += reg_lcr(net, tr);
    t.lcr_term = cfg.lambda_lcr * lcr;
  }
  if (cfg.use_mono) {
    double mono = 0.0;
    for (const auto& tr : demos) mono += reg_mono(net, tr, cfg.mono_margin);
    t.mono_term = cfg.lambda_mono * mono;
  }
  t.loss = t.demo_term + t.logz_term + t.lcr_term + t.mono_term;
  if (demo_costs_out) *demo_costs_out = std::move(demo_costs);
  if (sample_costs_out) *sample_costs_out = std::move(sample_costs);
  return t;
}

}  // namespace

IocTerms ioc_loss(const CostNetwork& net, std::span<const Trajectory> demos,
                  std::span<const Trajectory> samples, const Eigen::VectorXd& log_z,
                  const IocObjectiveConfig& cfg) {
  return loss_terms(net, demos, samples, log_z, cfg, nullptr, nullptr);
}

CostGradient ioc_gradient(const CostNetwork& net, std::span<const Trajectory> demos,
                          std::span<const Trajectory> samples, const Eigen::VectorXd& log_z,
                          const IocObjectiveConfig& cfg, IocTerms* terms) {
  Eigen::VectorXd demo_costs, sample_costs;
  IocTerms t = loss_terms(net, demos, samples, log_z, cfg, &demo_costs, &sample_costs);
  if (terms) *terms = t;

  CostGradient grad = CostGradient::zeros_like(net);
  const double inv_n = 1.0 / static_cast<double>(demos.size());
  for (const auto& tr : demos) grad.add_scaled(cost_param_gradient(net, tr, inv_n), 1.0);

  const Eigen::VectorXd w = sample_softmax_weights(sample_costs, log_z);
  for (size_t j = 0; j < samples.size(); ++j)
    grad.add_scaled(cost_param_gradient(net, samples[j], -w[static_cast<int>(j)]), 1.0);

  if (cfg.use_lcr) {
    for (const auto& tr : demos) add_reg_lcr_gradient(net, tr, cfg.lambda_lcr, grad);
    for (const auto& tr : samples) add_reg_lcr_gradient(net, tr, cfg.lambda_lcr, grad);
  }
  if (cfg.use_mono)
    for (const auto& tr : demos)
      add_reg_mono_gradient(net, tr, cfg.mono_margin, cfg.lambda_mono, grad);
  return grad;
}

AdamOptimizer::AdamOptimizer(long dim, double step, double beta1, double beta2, double eps)
    : step_(step), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

void AdamOptimizer::apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params -= (step_ / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
}

namespace {

// Partial Fisher-Yates draw of n distinct indices from [0, pool).
std::vector<int> draw_batch(int pool, int n, Rng& rng) {
  n = std::min(n, pool);
  std::vector<int> idx(pool);
  for (int i = 0; i < pool; ++i) idx[i] = i;
  for (int i = 0; i < n; ++i) {
    int j = i + rng.index(pool - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

std::vector<IocTerms> ioc_update(CostNetwork& net, const std::vector<Trajectory>& demo_pool,
                                 const SampleSet& samples, const IocConfig& cfg, Rng& rng) {
  if (demo_pool.empty() || samples.trajectories.empty())
    throw NumericError("ioc_update: empty demo or sample pool");

  // Fusion weights are fixed for the duration of the update: the pools and
  // the proposal set do not change inside the inner loop.
  Eigen::VectorXd log_z_samples, log_z_demos;
  if (cfg.use_importance_weights) {
    log_z_samples = fusion_log_weights(samples);
    log_z_demos = fusion_log_weights(samples, std::span<const Trajectory>(demo_pool));
  } else {
    log_z_samples = Eigen::VectorXd::Zero(samples.size());
    log_z_demos = Eigen::VectorXd::Zero(static_cast<int>(demo_pool.size()));
  }

  AdamOptimizer opt(net.param_count(), cfg.step_size, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
  std::vector<IocTerms> trace;
  trace.reserve(cfg.inner_iters);

  for (int it = 0; it < cfg.inner_iters; ++it) {
    std::vector<int> di = draw_batch(static_cast<int>(demo_pool.size()), cfg.demo_batch, rng);
    std::vector<int> si = draw_batch(samples.size(), cfg.sample_batch, rng);

    std::vector<Trajectory> demo_batch;
    demo_batch.reserve(di.size());
    for (int i : di) demo_batch.push_back(demo_pool[i]);

    std::vector<Trajectory> sample_batch;
    Eigen::VectorXd log_z(static_cast<int>(si.size()) +
                          (cfg.append_demo_batch ? static_cast<int>(di.size()) : 0));
    int at = 0;
    for (int j : si) {
      sample_batch.push_back(samples.trajectories[j]);
      log_z[at++] = log_z_samples[j];
    }
    if (cfg.append_demo_batch) {
      for (int i : di) {
        sample_batch.push_back(demo_pool[i]);
        log_z[at++] = log_z_demos[i];
      }
    }

    IocTerms terms;
    CostGradient grad = ioc_gradient(net, demo_batch, sample_batch, log_z, cfg.objective,
                                     &terms);
    Eigen::VectorXd params = flatten_params(net);
    opt.apply(params, flatten_gradient(grad));
    unflatten_params(params, net);
    trace.push_back(terms);
  }
  return trace;
}

void write_ioc_trace_csv(std::ostream& os, std::span<const IocTerms> trace) {
  os << "iter,loss,demo_term,logZ_term,reg_lcr,reg_mono\n";
  for (size_t i = 0; i < trace.size(); ++i) {
    os << i << ',' << format_double(trace[i].loss) << ',' << format_double(trace[i].demo_term)
       << ',' << format_double(trace[i].logz_term) << ',' << format_double(trace[i].lcr_term)
       << ',' << format_double(trace[i].mono_term) << '\n';
  }
}

}  // namespace ioclab
