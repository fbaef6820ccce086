// Command-line experiment runner. Exit codes: 0 success, 2 configuration
// error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "ioclab/experiments.hpp"

namespace {

using namespace ioclab;

Eigen::VectorXd parse_start(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
  Eigen::VectorXd v(static_cast<int>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) v[static_cast<int>(i)] = vals[i];
  return v;
}

// Expand a short start vector (positions or joint angles) to a full state.
Eigen::VectorXd expand_start(const EnvSpec& env, const Eigen::VectorXd& s) {
  if (s.size() == env.dx) return s;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(env.dx);
  if (env.name == "reacher2link" && s.size() == 2) {
    ReacherParams p;
    x.head<2>() = s;
    x.tail<4>() = reacher_ee(p, s.head<2>(), Eigen::Vector2d::Zero());
    return x;
  }
  if (s.size() == 2 && env.dx == 4) {
    x.head<2>() = s;
    return x;
  }
  throw ConfigError("--start: expected 2 or " + std::to_string(env.dx) + " values");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"ioclab: cost learning from demonstrations on analytic benchmarks"};
  app.require_subcommand(1);

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "generate demonstration trajectories");
  std::string gen_env = "pointmass", gen_out = "runs/demos";
  int gen_n = 40, gen_horizon = 100;
  uint64_t gen_seed = 0;
  gen->add_option("--env", gen_env, "pointmass | nav2d | reacher2link");
  gen->add_option("--n", gen_n, "number of demos");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--horizon", gen_horizon, "timesteps per rollout");

  // train
  auto* train = app.add_subcommand("train", "run cost learning from a config file");
  std::string train_config, train_out;
  int64_t train_seed = -1;
  train->add_option("--config", train_config, "experiment config file")->required();
  train->add_option("--out", train_out, "override output directory");
  train->add_option("--seed", train_seed, "override seed");

  // eval
  auto* eval = app.add_subcommand("eval", "reoptimize a policy against a saved cost");
  std::string eval_cost, eval_env = "nav2d", eval_start, eval_dynamics = "fitted";
  uint64_t eval_seed = 0;
  eval->add_option("--cost", eval_cost, "cost checkpoint file")->required();
  eval->add_option("--env", eval_env, "pointmass | nav2d | reacher2link");
  eval->add_option("--start", eval_start, "initial state, comma separated")->required();
  eval->add_option("--seed", eval_seed, "rng seed");
  eval->add_option("--dynamics", eval_dynamics, "fitted | exact");

  // consistency
  auto* cons = app.add_subcommand("consistency", "point-mass consistency experiment");
  std::string cons_out = "runs/consistency";
  uint64_t cons_seed = 7;
  int cons_iters = 20;
  bool cons_plots = false;
  cons->add_option("--seed", cons_seed, "rng seed");
  cons->add_option("--out", cons_out, "output directory");
  cons->add_option("--iters", cons_iters, "outer iterations per variant");
  cons->add_flag("--plots", cons_plots, "emit svg plots");

  // ablate
  auto* abl = app.add_subcommand("ablate", "regularizer or sample-count ablations");
  std::string abl_mode = "reg", abl_out = "runs/ablate";
  uint64_t abl_seed = 7;
  int abl_iters = 12;
  abl->add_option("--mode", abl_mode, "reg | samples");
  abl->add_option("--seed", abl_seed, "rng seed");
  abl->add_option("--out", abl_out, "output directory");
  abl->add_option("--iters", abl_iters, "outer iterations per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    ExperimentConfig cfg;
    cfg.env_name = gen_env;
    cfg.n_demos = gen_n;
    cfg.seed = gen_seed;
    cfg.horizon = gen_horizon;
    cfg.output_dir = gen_out;
    BuiltEnv built = build_env(cfg);
    std::vector<Trajectory> demos = obtain_demos(cfg, built);
    // save_demos writes the per-file hashes into the demo manifest
    ExperimentConfig manifest_cfg = cfg;
    std::filesystem::path dir = resolve_output_dir(cfg);
    std::filesystem::create_directories(dir);
    std::ostringstream m;
    m << "env " << cfg.env_name << "\nseed " << cfg.seed << "\nhorizon " << cfg.horizon
      << "\ncount " << demos.size() << "\n";
    for (size_t i = 0; i < demos.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "demo_%03zu.csv", i);
      save_trajectory_csv((dir / name).string(), demos[i]);
      m << "file " << name << ' ' << git_blob_hash((dir / name).string()) << "\n";
    }
    std::ofstream f(dir / "manifest.txt");
    f << m.str();
    std::cout << "wrote " << demos.size() << " demos to " << dir.string() << "\n";
    return 0;
  }
  if (train->parsed()) {
    ExperimentConfig cfg = load_experiment_config(train_config);
    if (!train_out.empty()) cfg.output_dir = train_out;
    if (train_seed >= 0) cfg.seed = static_cast<uint64_t>(train_seed);
    std::filesystem::path dir = run_experiment(cfg);
    std::cout << "artifacts in " << dir.string() << "\n";
    return 0;
  }
  if (eval->parsed()) {
    ExperimentConfig cfg;
    cfg.env_name = eval_env;
    cfg.seed = eval_seed;
    cfg.dynamics = eval_dynamics;
    BuiltEnv built = build_env(cfg);
    EnvSpec env = built.env;
    env.init_mean = expand_start(env, parse_start(eval_start));
    env.init_cov = 1e-6 * Eigen::MatrixXd::Identity(env.dx, env.dx);
    CostNetwork net = load_cost_checkpoint(eval_cost);
    double d = eval_cost_on_instance(net, env, build_polopt_config(cfg), eval_seed);
    std::cout << "final distance_to_goal " << format_double(d) << "\n";
    return 0;
  }
  if (cons->parsed()) {
    ExperimentConfig cfg;
    cfg.name = "consistency";
    cfg.env_name = "pointmass";
    cfg.seed = cons_seed;
    cfg.output_dir = cons_out;
    cfg.gcl_iters = cons_iters;
    cfg.plots = cons_plots;
    run_experiment(cfg);
    return 0;
  }
  if (abl->parsed()) {
    ExperimentConfig cfg;
    cfg.name = abl_mode == "samples" ? "baseline-samples" : "ablate-reg";
    cfg.env_name = "reacher2link";
    cfg.seed = abl_seed;
    cfg.output_dir = abl_out;
    cfg.gcl_iters = abl_iters;
    cfg.n_demos = 20;
    run_experiment(cfg);
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ioclab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ioclab::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
