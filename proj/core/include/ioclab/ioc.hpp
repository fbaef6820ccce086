#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

#include "ioclab/costmodel.hpp"
#include "ioclab/trajmath.hpp"

namespace ioclab {

/// Growing pool of background trajectories. Each trajectory records which
/// proposal controller snapshot generated it; proposals are immutable once
/// registered and jointly define the fusion distribution.
struct SampleSet {
  std::vector<Trajectory> trajectories;
  std::vector<int> proposal_index;
  std::vector<LinearGaussianController> proposals;

  int register_proposal(LinearGaussianController p) {
    proposals.push_back(std::move(p));
    return static_cast<int>(proposals.size()) - 1;
  }
  void add(Trajectory t, int proposal) {
    if (proposal < 0 || proposal >= static_cast<int>(proposals.size()))
      throw NumericError("SampleSet::add: unknown proposal index");
    trajectories.push_back(std::move(t));
    proposal_index.push_back(proposal);
  }
  int size() const { return static_cast<int>(trajectories.size()); }
};

/// log z_j = -log( (1/k) sum_kappa q_kappa(tau_j) ) from an M x k matrix of
/// per-proposal log densities, stabilized with log-sum-exp.
Eigen::VectorXd fusion_log_weights_from_log_densities(const Eigen::MatrixXd& log_q);

/// Fusion log-weights for arbitrary trajectories under the set's proposals.
Eigen::VectorXd fusion_log_weights(const SampleSet& samples,
                                   std::span<const Trajectory> trajs);
/// Fusion log-weights of the set's own trajectories.
Eigen::VectorXd fusion_log_weights(const SampleSet& samples);

struct IocObjectiveConfig {
  double lambda_lcr = 10.0;
  double lambda_mono = 1.0;
  double mono_margin = 1.0;
  bool use_lcr = true;
  bool use_mono = true;
};

/// Loss decomposition: loss = demo_term + logz_term + lcr_term + mono_term.
struct IocTerms {
  double loss = 0.0;
  double demo_term = 0.0;
  double logz_term = 0.0;
  double lcr_term = 0.0;
  double mono_term = 0.0;
};

/// Unregularized negative log-likelihood as a pure function of trajectory
/// costs: mean demo cost plus log (1/M) sum_j z_j exp(-c_j). Invariant to
/// shifting every cost by a constant.
double ioc_nll_from_costs(const Eigen::VectorXd& demo_costs,
                          const Eigen::VectorXd& sample_costs,
                          const Eigen::VectorXd& log_z);

/// Normalized sample weights w_j / Z with w_j = z_j exp(-c_j), computed as a
/// softmax in log space. Sums to one.
Eigen::VectorXd sample_softmax_weights(const Eigen::VectorXd& sample_costs,
                                       const Eigen::VectorXd& log_z);

/// Full objective on explicit demo and sample lists. The lcr regularizer runs
/// over every trajectory in both lists as given, mono over demos only.
IocTerms ioc_loss(const CostNetwork& net, std::span<const Trajectory> demos,
                  std::span<const Trajectory> samples, const Eigen::VectorXd& log_z,
                  const IocObjectiveConfig& cfg);

/// Parameter gradient of ioc_loss; optionally reports the loss terms.
CostGradient ioc_gradient(const CostNetwork& net, std::span<const Trajectory> demos,
                          std::span<const Trajectory> samples, const Eigen::VectorXd& log_z,
                          const IocObjectiveConfig& cfg, IocTerms* terms = nullptr);

struct IocConfig {
  int inner_iters = 100;  // K
  int demo_batch = 5;
  int sample_batch = 10;
  double step_size = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool use_importance_weights = true;
  bool append_demo_batch = true;  // keeps the objective bounded below
  IocObjectiveConfig objective;
};

/// K iterations of stochastic cost updates: sample a demo batch and a
/// background batch, append the demo batch to the background batch, take one
/// adaptive first-order step. Returns the per-iteration loss trace.
std::vector<IocTerms> ioc_update(CostNetwork& net, const std::vector<Trajectory>& demo_pool,
                                 const SampleSet& samples, const IocConfig& cfg, Rng& rng);

/// Trace CSV: iter,loss,demo_term,logZ_term,reg_lcr,reg_mono
void write_ioc_trace_csv(std::ostream& os, std::span<const IocTerms> trace);

/// Adam state for the flattened cost parameters, fresh per ioc_update call.
class AdamOptimizer {
 public:
  AdamOptimizer(long dim, double step, double beta1, double beta2, double eps);
  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double step_, beta1_, beta2_, eps_;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

}  // namespace ioclab
