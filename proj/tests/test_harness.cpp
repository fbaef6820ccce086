#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ioclab/experiments.hpp"

using namespace ioclab;
namespace fs = std::filesystem;

namespace {

std::string tiny_train_config(const std::string& outdir) {
  return "[experiment]\n"
         "name = train\n"
         "seed = 12\n"
         "output_dir = " + outdir + "\n"
         "n_demos = 6\n"
         "[env]\n"
         "name = pointmass\n"
         "horizon = 30\n"
         "[ioc]\n"
         "inner_iters = 10\n"
         "[gcl]\n"
         "iterations = 2\n"
         "samples_per_iter = 3\n"
         "[polopt]\n"
         "dynamics = exact\n"
         "max_iters = 5\n";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: parse -> serialize -> parse is the identity") {
  ExperimentConfig cfg = parse_experiment_config(tiny_train_config("runs/x"));
  std::string s1 = serialize_experiment_config(cfg);
  ExperimentConfig cfg2 = parse_experiment_config(s1);
  std::string s2 = serialize_experiment_config(cfg2);
  CHECK(s1 == s2);
  CHECK(cfg2.horizon == 30);
  CHECK(cfg2.seed == 12);
  CHECK(cfg2.dynamics == "exact");
}

TEST_CASE("config: unknown keys and sections are rejected with a line number") {
  CHECK_THROWS_WITH_AS(parse_experiment_config("[env]\nnam = pointmass\n"),
                       doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[envy]\n"), doctest::Contains("unknown section"),
                       ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[env]\nhorizon == 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[env]\nhorizon = abc\n"), ConfigError);
}

TEST_CASE("config: semantic validation") {
  CHECK_THROWS_AS(parse_experiment_config("[env]\nname = lunar\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[experiment]\nname = nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[experiment]\ndemo_source = load\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[env]\nhorizon = 1\n"), ConfigError);
}

TEST_CASE("sha1: known vectors and git-style blob hashing") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");

  fs::path p = fs::temp_directory_path() / "ioclab_empty_blob";
  std::ofstream(p).close();
  CHECK(git_blob_hash(p.string()) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  fs::remove(p);
}

TEST_CASE("build_env: dimensions per environment") {
  ExperimentConfig cfg;
  cfg.env_name = "pointmass";
  CHECK(build_env(cfg).env.dx == 4);
  cfg.env_name = "nav2d";
  CHECK(build_env(cfg).env.dx == 4);
  cfg.env_name = "reacher2link";
  CHECK(build_env(cfg).env.dx == 8);
}

TEST_CASE("demo initial conditions: 32 planar starts, 12 reacher joint configurations") {
  ExperimentConfig cfg;
  cfg.n_demos = 40;
  cfg.env_name = "nav2d";
  BuiltEnv nav = build_env(cfg);
  CHECK(demo_initial_conditions(cfg, nav.env).size() == 32);

  cfg.env_name = "reacher2link";
  cfg.n_demos = 20;
  BuiltEnv re = build_env(cfg);
  auto conds = demo_initial_conditions(cfg, re.env);
  CHECK(conds.size() == 12);
  for (const auto& c : conds) CHECK(c.size() == 8);
}

TEST_CASE("run_experiment: train writes its artifacts and is byte-reproducible") {
  fs::path root = fs::temp_directory_path() / "ioclab_harness_test";
  fs::remove_all(root);
  ExperimentConfig cfg = parse_experiment_config(tiny_train_config((root / "a").string()));

  fs::path dir = run_experiment(cfg);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "cost_checkpoint.txt"));
  CHECK(fs::exists(dir / "controller_checkpoint.txt"));
  CHECK(fs::exists(dir / "demos" / "demo_000.csv"));
  CHECK(fs::exists(dir / "demos" / "manifest.txt"));

  std::string report1 = slurp(dir / "report.csv");
  CHECK(report1.substr(0, report1.find('\n')) ==
        "iter,ioc_loss,kl_to_truth,gt_cost_mean,distance_to_goal");

  ExperimentConfig cfg2 = cfg;
  cfg2.output_dir = (root / "b").string();
  fs::path dir2 = run_experiment(cfg2);
  CHECK(slurp(dir2 / "report.csv") == report1);
  CHECK(slurp(dir2 / "cost_checkpoint.txt") == slurp(dir / "cost_checkpoint.txt"));

  // reload the checkpoint and reoptimize on a shifted instance
  CostNetwork net = load_cost_checkpoint((dir / "cost_checkpoint.txt").string());
  BuiltEnv built = build_env(cfg);
  EnvSpec inst = built.env;
  inst.init_mean << 0.6, 1.1, 0.0, 0.0;
  PoloptConfig pcfg = build_polopt_config(cfg);
  double d = eval_cost_on_instance(net, inst, pcfg, 3);
  CHECK(std::isfinite(d));
  fs::remove_all(root);
}

TEST_CASE("run_experiment: output root environment override") {
  fs::path root = fs::temp_directory_path() / "ioclab_root_override";
  fs::remove_all(root);
  setenv("IOCLAB_OUTPUT_ROOT", root.string().c_str(), 1);
  ExperimentConfig cfg;
  cfg.output_dir = "nested/run";
  fs::path resolved = resolve_output_dir(cfg);
  unsetenv("IOCLAB_OUTPUT_ROOT");
  CHECK(resolved == root / "nested" / "run");
}

TEST_CASE("obtain_demos: load mode reads back generated csvs") {
  fs::path root = fs::temp_directory_path() / "ioclab_demo_roundtrip";
  fs::remove_all(root);
  fs::create_directories(root);

  ExperimentConfig cfg = parse_experiment_config(tiny_train_config((root / "gen").string()));
  BuiltEnv built = build_env(cfg);
  std::vector<Trajectory> demos = obtain_demos(cfg, built);
  for (size_t i = 0; i < demos.size(); ++i)
    save_trajectory_csv((root / ("d" + std::to_string(i) + ".csv")).string(), demos[i]);

  ExperimentConfig lcfg = cfg;
  lcfg.demo_source = "load";
  lcfg.demo_path = root.string();
  std::vector<Trajectory> back = obtain_demos(lcfg, built);
  REQUIRE(back.size() == demos.size());
  CHECK(back[0].horizon() == demos[0].horizon());
  CHECK((back[0].states[5] - demos[0].states[5]).norm() == 0.0);

  lcfg.demo_path = (root / "missing").string();
  CHECK_THROWS_AS(obtain_demos(lcfg, built), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("svg plot writer emits a polyline per series") {
  fs::path p = fs::temp_directory_path() / "ioclab_plot_test.svg";
  write_svg_plot(p.string(), "losses",
                 {{"a", {0, 1, 2}, {3.0, 2.0, 1.0}}, {"b", {0, 1, 2}, {1.0, 1.5, 2.5}}});
  std::string svg = slurp(p);
  fs::remove(p);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("losses") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
  size_t n = 0;
  for (size_t at = svg.find("<polyline"); at != std::string::npos;
       at = svg.find("<polyline", at + 1))
    ++n;
  CHECK(n == 2);
}
