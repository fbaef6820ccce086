#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "ioclab/envs.hpp"
#include "ioclab/ioc.hpp"
#include "ioclab/polopt.hpp"

namespace ioclab {

struct AblationFlags {
  bool use_importance_weights = true;
  bool use_maxent_term = true;
  bool use_lcr = true;
  bool use_mono = true;
};

enum class InitMode { Random, DemoFit };

struct GclConfig {
  InitMode init = InitMode::DemoFit;
  int outer_iters = 20;
  int samples_per_iter = 5;
  IocConfig ioc;
  PoloptConfig polopt;
  AblationFlags ablation;
  uint64_t seed = 0;
  double random_init_action_var = 1.0;  // scaled by action_scale^2
};

struct GclIterRow {
  int iter = 0;
  double ioc_loss = 0.0;
  double kl_to_truth = std::numeric_limits<double>::quiet_NaN();
  double gt_cost_mean = std::numeric_limits<double>::quiet_NaN();
  double distance_to_goal = std::numeric_limits<double>::quiet_NaN();
};

/// Optional extras threaded through a run: a ground-truth cost for report
/// columns, known generating distributions for ground-truth demo importance
/// weights and for the KL-to-truth report column.
struct GclContext {
  const GroundTruthCost* gt = nullptr;
  const LinearGaussianController* demo_proposal_override = nullptr;
  std::vector<GaussianTrajDist> truth;  // KL averaged over these when nonempty
};

struct GclResult {
  CostNetwork cost;
  LinearGaussianController controller;
  LinearGaussianController init_controller;
  std::vector<GclIterRow> report;
  SampleSet samples;
};

/// Alternate policy optimization and cost updates: each outer iteration rolls
/// samples from the current controller, appends them to the growing sample
/// set with a proposal snapshot, runs the stochastic cost update on the whole
/// pool, then refits dynamics from the fresh samples alone and takes one
/// KL-constrained policy step with an adaptive step size.
GclResult guided_cost_learning(const EnvSpec& env, const std::vector<Trajectory>& demos,
                               CostNetwork net, const GclConfig& cfg,
                               const GclContext& ctx = {});

/// Report CSV: iter,ioc_loss,kl_to_truth,gt_cost_mean,distance_to_goal
void write_gcl_report_csv(std::ostream& os, std::span<const GclIterRow> report);

struct BaselineConfig {
  InitMode proposal = InitMode::DemoFit;
  bool use_importance_weights = true;
  int n_samples = 40;
  IocConfig ioc;        // inner_iters here is the total optimization budget
  PoloptConfig polopt;  // for reoptimizing a policy against the learned cost
  uint64_t seed = 0;
  double random_init_action_var = 1.0;
};

struct BaselineResult {
  CostNetwork cost;
  LinearGaussianController controller;
  std::vector<IocTerms> trace;
  SampleSet samples;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
};

/// Fixed-proposal sample-based IRL: draw every background sample up front
/// from one proposal (no adaptation), optimize the cost to convergence, then
/// optimize a fresh policy against the learned cost.
BaselineResult baseline_irl(const EnvSpec& env, const std::vector<Trajectory>& demos,
                            CostNetwork net, const BaselineConfig& cfg,
                            const GclContext& ctx = {});

// ---- controller checkpoint (versioned text format, see README) ----
void save_controller_checkpoint(const std::string& path, const LinearGaussianController& c);
LinearGaussianController load_controller_checkpoint(const std::string& path);

}  // namespace ioclab
