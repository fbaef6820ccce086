#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ioclab/config.hpp"
#include "ioclab/gcl.hpp"

namespace ioclab {

/// SHA-1 of a byte string, lowercase hex.
std::string sha1_hex(std::string_view data);
/// Content hash of a file the way git hashes blobs: sha1("blob <len>\0" + data).
std::string git_blob_hash(const std::string& path);

/// Minimal SVG line chart; one polyline per series over a shared x axis.
struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series);

/// Environment plus its ground-truth cost as described by a config.
struct BuiltEnv {
  EnvSpec env;
  GroundTruthCost gt;
};
BuiltEnv build_env(const ExperimentConfig& cfg);

/// Demo initial conditions for an env (32 starts for the planar tasks,
/// 12 joint configurations for the reacher), drawn from the config seed.
std::vector<Eigen::VectorXd> demo_initial_conditions(const ExperimentConfig& cfg,
                                                     const EnvSpec& env);

/// Generate demos per config (or load them from cfg.demo_path).
std::vector<Trajectory> obtain_demos(const ExperimentConfig& cfg, const BuiltEnv& built);

CostNetwork build_cost_network(const ExperimentConfig& cfg, const EnvSpec& env);
GclConfig build_gcl_config(const ExperimentConfig& cfg);
PoloptConfig build_polopt_config(const ExperimentConfig& cfg);

// ---- experiment cores (no filesystem side effects) ----

struct ConsistencyOutcome {
  double kl_full = 0.0;        // ground-truth demo importance weights
  double kl_empirical = 0.0;   // empirically estimated demo weights
  double kl_no_maxent = 0.0;
  double kl_no_iw = 0.0;
  std::vector<GclIterRow> report_full, report_empirical, report_no_maxent, report_no_iw;
};
ConsistencyOutcome run_consistency_core(const ExperimentConfig& cfg);

struct BaselineSamplesOutcome {
  std::vector<int> sample_counts;
  std::vector<double> baseline_distance;
  std::vector<double> gcl_distance;
};
BaselineSamplesOutcome run_baseline_samples_core(const ExperimentConfig& cfg);

struct AblationRow {
  std::string env;
  uint64_t seed = 0;
  std::string variant;  // full | no-lcr | no-mono
  double final_distance = 0.0;
};
std::vector<AblationRow> run_ablate_reg_core(const ExperimentConfig& cfg);

struct TrainOutcome {
  GclResult result;
  std::vector<Trajectory> demos;
};
TrainOutcome run_train_core(const ExperimentConfig& cfg);

/// Load a cost checkpoint and optimize a fresh policy on the given env
/// instance; returns the mean final distance-to-goal over eval rollouts.
double eval_cost_on_instance(const CostNetwork& net, const EnvSpec& env,
                             const PoloptConfig& cfg, uint64_t seed,
                             const LinearGaussianController* init = nullptr);

/// Run the named experiment, writing the manifest and every artifact under
/// the resolved output directory. The IOCLAB_OUTPUT_ROOT environment
/// variable, when set, prefixes relative output paths.
std::filesystem::path run_experiment(const ExperimentConfig& cfg);
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace ioclab
