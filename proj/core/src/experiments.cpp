#include "ioclab/experiments.hpp"

#include <array>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ioclab {

// ------------------------------------------------------------------- sha1

namespace {

class Sha1 {
 public:
  void update(const unsigned char* data, size_t len) {
    total_bits_ += static_cast<uint64_t>(len) * 8;
    while (len > 0) {
      size_t take = std::min(len, size_t(64) - fill_);
      std::memcpy(buf_.data() + fill_, data, take);
      fill_ += take;
      data += take;
      len -= take;
      if (fill_ == 64) {
        process();
        fill_ = 0;
      }
    }
  }

  std::string hex_digest() {
    // pad: 0x80, zeros, 64-bit big-endian bit length
    uint64_t bits = total_bits_;
    unsigned char pad = 0x80;
    update(&pad, 1);
    total_bits_ -= 8;
    unsigned char zero = 0;
    while (fill_ != 56) {
      update(&zero, 1);
      total_bits_ -= 8;
    }
    std::array<unsigned char, 8> len_be;
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len_be.data(), 8);

    char out[41];
    for (int i = 0; i < 5; ++i) std::snprintf(out + 8 * i, 9, "%08x", h_[i]);
    return std::string(out, 40);
  }

 private:
  static uint32_t rol(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

  void process() {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (uint32_t(buf_[4 * i]) << 24) | (uint32_t(buf_[4 * i + 1]) << 16) |
             (uint32_t(buf_[4 * i + 2]) << 8) | uint32_t(buf_[4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

    uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | ((~b) & d);
        k = 0x5A827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDC;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6;
      }
      uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<unsigned char, 64> buf_{};
  size_t fill_ = 0;
  uint64_t total_bits_ = 0;
  std::array<uint32_t, 5> h_{0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
};

}  // namespace

std::string sha1_hex(std::string_view data) {
  Sha1 h;
  h.update(reinterpret_cast<const unsigned char*>(data.data()), data.size());
  return h.hex_digest();
}

std::string git_blob_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for hashing: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  std::string data = buf.str();
  std::string blob = "blob " + std::to_string(data.size());
  blob.push_back('\0');
  blob += data;
  return sha1_hex(blob);
}

// ---------------------------------------------------------------- svg plot

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series) {
  const int W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
    << "</text>\n";
  f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  f << "<text x='" << ml << "' y='" << H - mb + 16 << "' font-size='11'>" << format_double(xmin)
    << "</text>\n";
  f << "<text x='" << W - mr << "' y='" << H - mb + 16
    << "' text-anchor='end' font-size='11'>" << format_double(xmax) << "</text>\n";
  f << "<text x='" << ml - 4 << "' y='" << H - mb << "' text-anchor='end' font-size='11'>"
    << format_double(ymin) << "</text>\n";
  f << "<text x='" << ml - 4 << "' y='" << mt + 10 << "' text-anchor='end' font-size='11'>"
    << format_double(ymax) << "</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    f << "<polyline fill='none' stroke='" << colors[s % 5] << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      f << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    }
    f << "'/>\n";
    f << "<text x='" << W - mr - 4 << "' y='" << mt + 14 + 14 * s
      << "' text-anchor='end' font-size='12' fill='" << colors[s % 5] << "'>"
      << series[s].label << "</text>\n";
  }
  f << "</svg>\n";
}

// -------------------------------------------------------------- env builders

BuiltEnv build_env(const ExperimentConfig& cfg) {
  BuiltEnv out;
  if (cfg.env_name == "pointmass" || cfg.env_name == "nav2d") {
    PointMassParams p;
    p.dt = cfg.dt;
    p.horizon = cfg.horizon;
    p.noise_std = cfg.process_noise_std;
    p.goal = {cfg.goal_x, cfg.goal_y};
    p.init_mean << cfg.start_x, cfg.start_y, 0.0, 0.0;
    if (cfg.env_name == "pointmass") {
      out.env = make_pointmass(p);
      out.gt = make_pointmass_cost(p);
    } else {
      Nav2dParams np;
      np.base = p;
      out.env = make_nav2d(np);
      out.gt = make_nav2d_cost(np);
    }
  } else if (cfg.env_name == "reacher2link") {
    ReacherParams p;
    p.dt = cfg.dt;
    p.horizon = cfg.horizon;
    p.noise_std = cfg.process_noise_std;
    p.target = {cfg.target_x, cfg.target_y};
    out.env = make_reacher(p);
    out.gt = make_reacher_cost(p);
  } else {
    throw ConfigError("unknown env: " + cfg.env_name);
  }
  return out;
}

std::vector<Eigen::VectorXd> demo_initial_conditions(const ExperimentConfig& cfg,
                                                     const EnvSpec& env) {
  Rng rng = Rng::substream(cfg.seed, "demos/starts");
  std::vector<Eigen::VectorXd> out;
  if (env.name == "reacher2link") {
    const int n = std::min(12, cfg.n_demos);
    ReacherParams p;  // link geometry defaults; only kinematics are needed here
    for (int i = 0; i < n; ++i) {
      Eigen::Vector2d theta(M_PI * rng.uniform(), -0.5 * M_PI + M_PI * rng.uniform());
      Eigen::VectorXd x0(8);
      x0 << theta, 0.0, 0.0, reacher_ee(p, theta, Eigen::Vector2d::Zero());
      out.push_back(x0);
    }
  } else {
    const int n = std::min(32, cfg.n_demos);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(4);
      x0[0] = cfg.start_x + cfg.start_halfwidth * (2.0 * rng.uniform() - 1.0);
      x0[1] = cfg.start_y + cfg.start_halfwidth * (2.0 * rng.uniform() - 1.0);
      out.push_back(x0);
    }
  }
  return out;
}

std::vector<Trajectory> obtain_demos(const ExperimentConfig& cfg, const BuiltEnv& built) {
  if (cfg.demo_source == "load") {
    namespace fs = std::filesystem;
    if (!fs::exists(cfg.demo_path))
      throw ConfigError("demo_path does not exist: " + cfg.demo_path);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg.demo_path))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no trajectory csv files in " + cfg.demo_path);
    std::vector<Trajectory> demos;
    for (const auto& f : files) demos.push_back(load_trajectory_csv(f.string()));
    return demos;
  }
  Rng rng = Rng::substream(cfg.seed, "demos/generate");
  PoloptConfig pcfg = build_polopt_config(cfg);
  pcfg.exact_dynamics = true;  // the generator owns the true environment
  return generate_demos(built.env, built.gt, demo_initial_conditions(cfg, built.env),
                        cfg.n_demos, pcfg, rng);
}

CostNetwork build_cost_network(const ExperimentConfig& cfg, const EnvSpec& env) {
  CostNetConfig nc;
  nc.hidden = cfg.hidden;
  nc.feature_dim = cfg.features;
  nc.torque_weight = cfg.torque_weight;
  nc.head_init_scale = cfg.head_init_scale;
  Rng rng = Rng::substream(cfg.seed, "cost/init");
  return make_cost_network(env.dx, nc, rng);
}

PoloptConfig build_polopt_config(const ExperimentConfig& cfg) {
  PoloptConfig p;
  p.max_iters = cfg.polopt_iters;
  p.samples_per_iter = cfg.polopt_samples;
  p.epsilon_init = cfg.epsilon_init;
  p.use_gmm_prior = cfg.use_gmm_prior;
  p.gmm_max_clusters = cfg.gmm_max_clusters;
  p.gmm_prior_strength = cfg.gmm_prior_strength;
  p.dyn_ridge = cfg.dyn_ridge;
  p.exact_dynamics = cfg.dynamics == "exact";
  return p;
}

GclConfig build_gcl_config(const ExperimentConfig& cfg) {
  GclConfig g;
  g.init = cfg.init == "random" ? InitMode::Random : InitMode::DemoFit;
  g.outer_iters = cfg.gcl_iters;
  g.samples_per_iter = cfg.samples_per_iter;
  g.seed = cfg.seed;
  g.ioc.inner_iters = cfg.ioc_iters;
  g.ioc.demo_batch = cfg.demo_batch;
  g.ioc.sample_batch = cfg.sample_batch;
  g.ioc.step_size = cfg.step_size;
  g.ioc.objective.lambda_lcr = cfg.lambda_lcr;
  g.ioc.objective.lambda_mono = cfg.lambda_mono;
  g.ioc.objective.mono_margin = cfg.mono_margin;
  g.polopt = build_polopt_config(cfg);
  g.ablation.use_importance_weights = cfg.use_importance_weights;
  g.ablation.use_maxent_term = cfg.use_maxent;
  g.ablation.use_lcr = cfg.use_lcr;
  g.ablation.use_mono = cfg.use_mono;
  return g;
}

// ------------------------------------------------------------ train core

TrainOutcome run_train_core(const ExperimentConfig& cfg) {
  BuiltEnv built = build_env(cfg);
  TrainOutcome out;
  out.demos = obtain_demos(cfg, built);
  CostNetwork net = build_cost_network(cfg, built.env);
  GclContext ctx;
  ctx.gt = &built.gt;
  out.result = guided_cost_learning(built.env, out.demos, std::move(net),
                                    build_gcl_config(cfg), ctx);
  return out;
}

// ------------------------------------------------------ consistency core

ConsistencyOutcome run_consistency_core(const ExperimentConfig& cfg) {
  PointMassParams p;
  p.dt = cfg.dt;
  p.horizon = cfg.horizon;
  p.noise_std = cfg.process_noise_std;
  p.goal = {cfg.goal_x, cfg.goal_y};
  // The toy sits in the regime where the action variance Q_uu^{-1} is set by
  // the value curvature rather than the torque term, so a mis-scaled learned
  // cost shows up directly in the recovered variance.
  p.w_pos = 10.0;
  p.w_vel = 1.0;
  p.w_u = 1e-3;

  // Training rollouts start from the same four conditions the demos use: a
  // uniform mixture over the corner starts. The moment-matched Gaussian is
  // kept in init_mean/init_cov for the fitted-dynamics path.
  p.init_mean << 0.0, 0.0, 0.0, 0.0;
  EnvSpec env = make_pointmass(p);
  env.init_cov = Eigen::MatrixXd::Zero(4, 4);
  env.init_cov.diagonal() << 1.0, 1.0, 1e-8, 1e-8;
  const std::vector<Eigen::Vector2d> starts = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  const double start_std = p.init_pos_std;
  env.init_sampler = [starts, start_std](Rng& rng) {
    const Eigen::Vector2d& c = starts[rng.index(4)];
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    x.head<2>() = c + start_std * rng.gaussian_vec(2);
    return x;
  };
  GroundTruthCost gt = make_pointmass_cost(p);

  // The true controller: MaxEnt LQR against the true cost under the exact
  // dynamics. It is shared by all four generating distributions (quadratic
  // cost about the goal makes the feedback law start-independent).
  DynamicsProvider exact = exact_dynamics_provider(env);
  std::vector<Eigen::VectorXd> zx(cfg.horizon, Eigen::VectorXd::Zero(4));
  std::vector<Eigen::VectorXd> zu(cfg.horizon, Eigen::VectorXd::Zero(2));
  LinearGaussianDynamics dyn0 = exact(zx, zu);
  std::vector<CostExpansion> exps(cfg.horizon);
  for (int t = 0; t < cfg.horizon; ++t) exps[t] = gt.expand(zx[t], zu[t]);
  LinearGaussianController true_ctrl = maxent_lqr_backward(dyn0, exps, zx, zu);

  std::vector<GaussianTrajDist> truth;
  for (const auto& s : starts) {
    LinearGaussianDynamics d = dyn0;
    d.init_mean << s[0], s[1], 0.0, 0.0;
    d.init_cov = Eigen::MatrixXd::Zero(4, 4);
    d.init_cov.diagonal() << 1e-4, 1e-4, 1e-8, 1e-8;
    truth.push_back(GaussianTrajDist{d, true_ctrl});
  }

  // 40 demos, 10 from each known distribution.
  Rng rng_demo = Rng::substream(cfg.seed, "consistency/demos");
  std::vector<Trajectory> demos;
  for (const auto& t : truth)
    for (int i = 0; i < cfg.n_demos / 4; ++i)
      demos.push_back(rollout_lgc(t.dyn, t.ctrl, rng_demo));

  ExperimentConfig base = cfg;
  // The toy fixes the torque weight to the true one so the network family
  // contains the generating cost, and runs unregularized: the episodic
  // regularizers are a separate study and would bias a cost that is exactly
  // representable here.
  base.torque_weight = p.w_u;

  auto run_variant = [&](bool gt_weights, bool maxent, bool iw) {
    CostNetwork net = build_cost_network(base, env);
    GclConfig g = build_gcl_config(base);
    g.ablation.use_maxent_term = maxent;
    g.ablation.use_importance_weights = iw;
    GclContext ctx;
    ctx.gt = &gt;
    ctx.truth = truth;
    if (gt_weights) ctx.demo_proposal_override = &true_ctrl;
    return guided_cost_learning(env, demos, std::move(net), g, ctx);
  };

  ConsistencyOutcome out;
  GclResult full = run_variant(true, true, true);
  GclResult empirical = run_variant(false, true, true);
  GclResult no_maxent = run_variant(false, false, true);
  GclResult no_iw = run_variant(false, true, false);
  out.kl_full = full.report.back().kl_to_truth;
  out.kl_empirical = empirical.report.back().kl_to_truth;
  out.kl_no_maxent = no_maxent.report.back().kl_to_truth;
  out.kl_no_iw = no_iw.report.back().kl_to_truth;
  out.report_full = std::move(full.report);
  out.report_empirical = std::move(empirical.report);
  out.report_no_maxent = std::move(no_maxent.report);
  out.report_no_iw = std::move(no_iw.report);
  return out;
}

// ------------------------------------------------- baseline samples core

namespace {

double trailing_distance(const std::vector<GclIterRow>& report) {
  double d = 0.0;
  int n = 0;
  for (size_t i = report.size() >= 3 ? report.size() - 3 : 0; i < report.size(); ++i) {
    d += report[i].distance_to_goal;
    ++n;
  }
  return d / std::max(1, n);
}

}  // namespace

BaselineSamplesOutcome run_baseline_samples_core(const ExperimentConfig& cfg) {
  BuiltEnv built = build_env(cfg);
  std::vector<Trajectory> demos = obtain_demos(cfg, built);

  BaselineSamplesOutcome out;
  out.sample_counts = {20, 60, 100};
  for (int n : out.sample_counts) {
    BaselineConfig bc;
    bc.proposal = InitMode::DemoFit;
    bc.n_samples = n;
    bc.ioc.inner_iters = cfg.ioc_iters * 4;  // fixed-proposal method trains once
    bc.ioc.demo_batch = cfg.demo_batch;
    bc.ioc.sample_batch = cfg.sample_batch;
    bc.ioc.step_size = cfg.step_size;
    bc.ioc.objective.lambda_lcr = cfg.lambda_lcr;
    bc.ioc.objective.lambda_mono = cfg.lambda_mono;
    bc.polopt = build_polopt_config(cfg);
    bc.seed = cfg.seed;
    CostNetwork net = build_cost_network(cfg, built.env);
    GclContext ctx;
    ctx.gt = &built.gt;
    BaselineResult res = baseline_irl(built.env, demos, std::move(net), bc, ctx);
    out.baseline_distance.push_back(res.final_distance);
  }
  for (int n : out.sample_counts) {
    ExperimentConfig c = cfg;
    c.gcl_iters = std::max(1, n / cfg.samples_per_iter);
    CostNetwork net = build_cost_network(c, built.env);
    GclContext ctx;
    ctx.gt = &built.gt;
    GclResult res =
        guided_cost_learning(built.env, demos, std::move(net), build_gcl_config(c), ctx);
    out.gcl_distance.push_back(trailing_distance(res.report));
  }
  return out;
}

// ------------------------------------------------------- ablate-reg core

std::vector<AblationRow> run_ablate_reg_core(const ExperimentConfig& cfg) {
  std::vector<AblationRow> rows;
  struct EnvPlan {
    const char* env;
    int n_seeds;
  };
  const EnvPlan plan[] = {{"reacher2link", 4}, {"nav2d", 2}};
  const char* variants[] = {"full", "no-lcr", "no-mono"};

  for (const auto& pl : plan) {
    ExperimentConfig c = cfg;
    c.env_name = pl.env;
    BuiltEnv built = build_env(c);
    for (int s = 0; s < pl.n_seeds; ++s) {
      c.seed = cfg.seed + static_cast<uint64_t>(s);
      std::vector<Trajectory> demos = obtain_demos(c, built);
      for (const char* variant : variants) {
        ExperimentConfig cv = c;
        cv.use_lcr = std::strcmp(variant, "no-lcr") != 0;
        cv.use_mono = std::strcmp(variant, "no-mono") != 0;
        CostNetwork net = build_cost_network(cv, built.env);
        GclContext ctx;
        ctx.gt = &built.gt;
        GclResult res = guided_cost_learning(built.env, demos, std::move(net),
                                             build_gcl_config(cv), ctx);
        rows.push_back({pl.env, c.seed, variant, trailing_distance(res.report)});
      }
    }
  }
  return rows;
}

// --------------------------------------------------------------- reopt eval

double eval_cost_on_instance(const CostNetwork& net, const EnvSpec& env,
                             const PoloptConfig& cfg, uint64_t seed,
                             const LinearGaussianController* init) {
  Rng rng = Rng::substream(seed, "eval/reopt");
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
  LinearGaussianController start =
      init ? *init
           : LinearGaussianController::zeros(env.horizon, env.dx, env.du,
                                             env.action_scale * env.action_scale);
  PoloptResult res = optimize_policy(prob, start, cfg, rng);

  Rng rng_eval = Rng::substream(seed, "eval/rollouts");
  double d = 0.0;
  const int n_eval = 10;
  for (int i = 0; i < n_eval; ++i) {
    Trajectory t = rollout_env(env, res.ctrl, rng_eval);
    d += env.distance_to_goal(t.states.back());
  }
  return d / n_eval;
}

// ------------------------------------------------------------ run + files

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path out = cfg.output_dir;
  const char* root = std::getenv("IOCLAB_OUTPUT_ROOT");
  if (root && *root && out.is_relative()) out = fs::path(root) / out;
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path.string());
  f << text;
}

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string resolved = serialize_experiment_config(cfg);
  std::ostringstream m;
  m << "ioclab experiment manifest v1\n";
  m << "experiment " << cfg.name << "\n";
  m << "config-hash " << sha1_hex(resolved) << "\n";
  for (const auto& [k, v] : extra) m << k << ' ' << v << "\n";
  m << "--- resolved config ---\n" << resolved;
  write_text(dir / "manifest.txt", m.str());
}

void save_demos(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                const std::vector<Trajectory>& demos) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream m;
  m << "env " << cfg.env_name << "\nseed " << cfg.seed << "\nhorizon " << cfg.horizon
    << "\ncount " << demos.size() << "\n";
  for (size_t i = 0; i < demos.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "demo_%03zu.csv", i);
    save_trajectory_csv((dir / name).string(), demos[i]);
    m << "file " << name << ' ' << git_blob_hash((dir / name).string()) << "\n";
  }
  write_text(dir / "manifest.txt", m.str());
}

std::vector<PlotSeries> report_series(const std::vector<GclIterRow>& report) {
  PlotSeries loss{"ioc_loss", {}, {}}, dist{"distance", {}, {}};
  for (const auto& r : report) {
    loss.x.push_back(r.iter);
    loss.y.push_back(r.ioc_loss);
    dist.x.push_back(r.iter);
    dist.y.push_back(r.distance_to_goal);
  }
  return {loss, dist};
}

}  // namespace

std::filesystem::path run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path dir = resolve_output_dir(cfg);
  fs::create_directories(dir);

  if (cfg.name == "train") {
    TrainOutcome out = run_train_core(cfg);
    if (cfg.demo_source == "generate") save_demos(dir / "demos", cfg, out.demos);
    std::ofstream rep(dir / "report.csv");
    write_gcl_report_csv(rep, out.result.report);
    save_cost_checkpoint((dir / "cost_checkpoint.txt").string(), out.result.cost);
    save_controller_checkpoint((dir / "controller_checkpoint.txt").string(),
                               out.result.controller);
    write_manifest(dir, cfg,
                   {{"cost-params", std::to_string(out.result.cost.param_count())}});
    if (cfg.plots) {
      auto series = report_series(out.result.report);
      write_svg_plot((dir / "loss.svg").string(), "IOC loss", {series[0]});
      write_svg_plot((dir / "distance.svg").string(), "distance to goal", {series[1]});
    }
    std::cout << "train: final distance_to_goal = "
              << format_double(out.result.report.back().distance_to_goal) << "\n";
  } else if (cfg.name == "consistency") {
    ConsistencyOutcome out = run_consistency_core(cfg);
    std::ostringstream csv;
    csv << "variant,final_kl\n";
    csv << "full," << format_double(out.kl_full) << "\n";
    csv << "empirical-iw," << format_double(out.kl_empirical) << "\n";
    csv << "no-maxent," << format_double(out.kl_no_maxent) << "\n";
    csv << "no-iw," << format_double(out.kl_no_iw) << "\n";
    write_text(dir / "consistency.csv", csv.str());
    auto dump = [&](const char* name, const std::vector<GclIterRow>& rep) {
      std::ofstream f(dir / name);
      write_gcl_report_csv(f, rep);
    };
    dump("report_full.csv", out.report_full);
    dump("report_empirical.csv", out.report_empirical);
    dump("report_no_maxent.csv", out.report_no_maxent);
    dump("report_no_iw.csv", out.report_no_iw);
    write_manifest(dir, cfg, {});
    if (cfg.plots) {
      PlotSeries s{"kl_to_truth(full)", {}, {}};
      for (const auto& r : out.report_full) {
        s.x.push_back(r.iter);
        s.y.push_back(r.kl_to_truth);
      }
      write_svg_plot((dir / "kl.svg").string(), "KL to true distribution", {s});
    }
    std::cout << "consistency: full=" << format_double(out.kl_full)
              << " empirical-iw=" << format_double(out.kl_empirical)
              << " no-maxent=" << format_double(out.kl_no_maxent)
              << " no-iw=" << format_double(out.kl_no_iw) << "\n";
  } else if (cfg.name == "baseline-samples") {
    BaselineSamplesOutcome out = run_baseline_samples_core(cfg);
    std::ostringstream csv;
    csv << "method,n_samples,final_distance\n";
    for (size_t i = 0; i < out.sample_counts.size(); ++i)
      csv << "baseline," << out.sample_counts[i] << ','
          << format_double(out.baseline_distance[i]) << "\n";
    for (size_t i = 0; i < out.sample_counts.size(); ++i)
      csv << "gcl," << out.sample_counts[i] << ',' << format_double(out.gcl_distance[i])
          << "\n";
    write_text(dir / "baseline_samples.csv", csv.str());
    write_manifest(dir, cfg, {});
  } else if (cfg.name == "ablate-reg") {
    std::vector<AblationRow> rows = run_ablate_reg_core(cfg);
    std::ostringstream csv;
    csv << "env,seed,variant,final_distance\n";
    for (const auto& r : rows)
      csv << r.env << ',' << r.seed << ',' << r.variant << ','
          << format_double(r.final_distance) << "\n";
    write_text(dir / "ablate_reg.csv", csv.str());
    write_manifest(dir, cfg, {});
  } else {
    throw ConfigError("unknown experiment: " + cfg.name);
  }
  return dir;
}

}  // namespace ioclab
