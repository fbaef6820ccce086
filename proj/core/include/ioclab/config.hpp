#pragma once

#include <string>
#include <vector>

#include "ioclab/common.hpp"

namespace ioclab {

/// Resolved experiment configuration. The on-disk format is flat-key text
/// with [section] headers, one `key = value` per line, '#' comments. Unknown
/// sections or keys are rejected with a line diagnostic; serialization is
/// canonical, so parse -> serialize -> parse is the identity.
struct ExperimentConfig {
  // [experiment]
  std::string name = "train";  // train | consistency | ablate-reg | baseline-samples
  uint64_t seed = 0;
  std::string output_dir = "runs/out";
  std::string demo_source = "generate";  // generate | load
  std::string demo_path;
  int n_demos = 40;
  bool plots = false;

  // [env]
  std::string env_name = "pointmass";  // pointmass | nav2d | reacher2link
  int horizon = 100;
  double dt = 0.05;
  double process_noise_std = 1e-3;
  double goal_x = 0.0, goal_y = 0.0;
  double start_x = 1.0, start_y = 1.0;
  double start_halfwidth = 0.25;
  double target_x = 0.5, target_y = 0.5;  // reacher end-effector target

  // [cost]
  std::vector<int> hidden;  // empty -> 2*d_in twice
  int features = 0;         // 0 -> 2*d_in
  double torque_weight = 1e-2;
  double lambda_lcr = 10.0;
  double lambda_mono = 1.0;
  double mono_margin = 1.0;
  double head_init_scale = 0.1;

  // [ioc]
  int ioc_iters = 100;
  int demo_batch = 5;
  int sample_batch = 10;
  double step_size = 1e-3;

  // [gcl]
  int gcl_iters = 20;
  int samples_per_iter = 5;
  std::string init = "demo";  // demo | random
  bool use_importance_weights = true;
  bool use_maxent = true;
  bool use_lcr = true;
  bool use_mono = true;

  // [polopt]
  double epsilon_init = 1.0;
  bool use_gmm_prior = true;
  int gmm_max_clusters = 20;
  double gmm_prior_strength = 1.0;
  double dyn_ridge = 1e-6;
  std::string dynamics = "fitted";  // fitted | exact
  int polopt_iters = 20;            // for demo generation and cost reoptimization
  int polopt_samples = 5;
};

ExperimentConfig parse_experiment_config(const std::string& text);
std::string serialize_experiment_config(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace ioclab
