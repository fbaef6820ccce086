#include "ioclab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace ioclab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected bool, got '" + v + "'");
}

std::string ints_str(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& v, int line) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (...) {
      throw ConfigError("line " + std::to_string(line) + ": expected int list, got '" + v + "'");
    }
  }
  return out;
}

struct FieldDef {
  const char* section;
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, int line)> set;
};

#define STR_FIELD(sec, key, member)                                              \
  FieldDef{sec, key, [](const ExperimentConfig& c) { return c.member; },          \
           [](ExperimentConfig& c, const std::string& v, int) { c.member = v; }}
#define INT_FIELD(sec, key, member)                                              \
  FieldDef{sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
           [](ExperimentConfig& c, const std::string& v, int line) {              \
             try { c.member = std::stoi(v); } catch (...) {                       \
               throw ConfigError("line " + std::to_string(line) +                 \
                                 ": expected int for " key);                      \
             }                                                                    \
           }}
#define U64_FIELD(sec, key, member)                                              \
  FieldDef{sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
           [](ExperimentConfig& c, const std::string& v, int line) {              \
             try { c.member = std::stoull(v); } catch (...) {                     \
               throw ConfigError("line " + std::to_string(line) +                 \
                                 ": expected unsigned int for " key);             \
             }                                                                    \
           }}
#define DBL_FIELD(sec, key, member)                                              \
  FieldDef{sec, key, [](const ExperimentConfig& c) { return format_double(c.member); }, \
           [](ExperimentConfig& c, const std::string& v, int line) {              \
             try { c.member = std::stod(v); } catch (...) {                       \
               throw ConfigError("line " + std::to_string(line) +                 \
                                 ": expected number for " key);                   \
             }                                                                    \
           }}
#define BOOL_FIELD(sec, key, member)                                             \
  FieldDef{sec, key, [](const ExperimentConfig& c) { return bool_str(c.member); }, \
           [](ExperimentConfig& c, const std::string& v, int line) {              \
             c.member = parse_bool(v, line);                                      \
           }}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      STR_FIELD("experiment", "name", name),
      U64_FIELD("experiment", "seed", seed),
      STR_FIELD("experiment", "output_dir", output_dir),
      STR_FIELD("experiment", "demo_source", demo_source),
      STR_FIELD("experiment", "demo_path", demo_path),
      INT_FIELD("experiment", "n_demos", n_demos),
      BOOL_FIELD("experiment", "plots", plots),

      STR_FIELD("env", "name", env_name),
      INT_FIELD("env", "horizon", horizon),
      DBL_FIELD("env", "dt", dt),
      DBL_FIELD("env", "process_noise_std", process_noise_std),
      DBL_FIELD("env", "goal_x", goal_x),
      DBL_FIELD("env", "goal_y", goal_y),
      DBL_FIELD("env", "start_x", start_x),
      DBL_FIELD("env", "start_y", start_y),
      DBL_FIELD("env", "start_halfwidth", start_halfwidth),
      DBL_FIELD("env", "target_x", target_x),
      DBL_FIELD("env", "target_y", target_y),

      FieldDef{"cost", "hidden",
               [](const ExperimentConfig& c) { return ints_str(c.hidden); },
               [](ExperimentConfig& c, const std::string& v, int line) {
                 c.hidden = parse_ints(v, line);
               }},
      INT_FIELD("cost", "features", features),
      DBL_FIELD("cost", "torque_weight", torque_weight),
      DBL_FIELD("cost", "lambda_lcr", lambda_lcr),
      DBL_FIELD("cost", "lambda_mono", lambda_mono),
      DBL_FIELD("cost", "mono_margin", mono_margin),
      DBL_FIELD("cost", "head_init_scale", head_init_scale),

      INT_FIELD("ioc", "inner_iters", ioc_iters),
      INT_FIELD("ioc", "demo_batch", demo_batch),
      INT_FIELD("ioc", "sample_batch", sample_batch),
      DBL_FIELD("ioc", "step_size", step_size),

      INT_FIELD("gcl", "iterations", gcl_iters),
      INT_FIELD("gcl", "samples_per_iter", samples_per_iter),
      STR_FIELD("gcl", "init", init),
      BOOL_FIELD("gcl", "use_importance_weights", use_importance_weights),
      BOOL_FIELD("gcl", "use_maxent", use_maxent),
      BOOL_FIELD("gcl", "use_lcr", use_lcr),
      BOOL_FIELD("gcl", "use_mono", use_mono),

      DBL_FIELD("polopt", "epsilon_init", epsilon_init),
      BOOL_FIELD("polopt", "use_gmm_prior", use_gmm_prior),
      INT_FIELD("polopt", "gmm_max_clusters", gmm_max_clusters),
      DBL_FIELD("polopt", "gmm_prior_strength", gmm_prior_strength),
      DBL_FIELD("polopt", "dyn_ridge", dyn_ridge),
      STR_FIELD("polopt", "dynamics", dynamics),
      INT_FIELD("polopt", "max_iters", polopt_iters),
      INT_FIELD("polopt", "samples_per_iter", polopt_samples),
  };
  return defs;
}

#undef STR_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

void validate(const ExperimentConfig& c) {
  auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed,
                   const std::string& what) {
    for (const char* a : allowed)
      if (v == a) return;
    throw ConfigError("invalid " + what + ": '" + v + "'");
  };
  one_of(c.name, {"train", "consistency", "ablate-reg", "baseline-samples"}, "experiment name");
  one_of(c.demo_source, {"generate", "load"}, "demo_source");
  one_of(c.env_name, {"pointmass", "nav2d", "reacher2link"}, "env name");
  one_of(c.init, {"demo", "random"}, "gcl init");
  one_of(c.dynamics, {"fitted", "exact"}, "polopt dynamics");
  if (c.horizon < 2) throw ConfigError("horizon must be >= 2");
  if (c.n_demos < 1) throw ConfigError("n_demos must be >= 1");
  if (c.gcl_iters < 1 || c.samples_per_iter < 1)
    throw ConfigError("gcl iterations and samples_per_iter must be >= 1");
  if (c.demo_source == "load" && c.demo_path.empty())
    throw ConfigError("demo_source = load requires demo_path");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = t.substr(1, t.size() - 2);
      bool known = false;
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known)
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section +
                          "]");
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (section == f.section && key == f.key) {
        f.set(cfg, value, lineno);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                        "' in section [" + section + "]");
  }
  validate(cfg);
  return cfg;
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += '[' + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + '\n';
  }
  return out;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_experiment_config(buf.str());
}

}  // namespace ioclab
