#include "ioclab/costmodel.hpp"

#include <fstream>
#include <sstream>

namespace ioclab {

namespace {

Eigen::VectorXd select_input(const CostNetwork& net, const Eigen::VectorXd& x) {
  Eigen::VectorXd z(net.input_dim());
  for (int i = 0; i < net.input_dim(); ++i) z[i] = x[net.input_selector[i]];
  return z;
}

Eigen::VectorXd relu(const Eigen::VectorXd& z) { return z.cwiseMax(0.0); }

// Subgradient at 0 is taken as 0.
Eigen::VectorXd relu_mask(const Eigen::VectorXd& z) {
  return (z.array() > 0.0).cast<double>();
}

}  // namespace

long CostNetwork::param_count() const {
  long n = head_A.size() + head_b.size();
  for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

CostGradient CostGradient::zeros_like(const CostNetwork& net) {
  CostGradient g;
  g.weights.reserve(net.weights.size());
  g.biases.reserve(net.biases.size());
  for (size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  g.head_A = Eigen::MatrixXd::Zero(net.head_A.rows(), net.head_A.cols());
  g.head_b = Eigen::VectorXd::Zero(net.head_b.size());
  return g;
}

void CostGradient::add_scaled(const CostGradient& other, double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += s * other.weights[l];
    biases[l] += s * other.biases[l];
  }
  head_A += s * other.head_A;
  head_b += s * other.head_b;
}

void CostGradient::scale(double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
  head_A *= s;
  head_b *= s;
}

Eigen::VectorXd flatten_params(const CostNetwork& net) {
  Eigen::VectorXd v(net.param_count());
  long at = 0;
  auto put_mat = [&](const Eigen::MatrixXd& m) {
    v.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  };
  auto put_vec = [&](const Eigen::VectorXd& b) {
    v.segment(at, b.size()) = b;
    at += b.size();
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    put_mat(net.weights[l]);
    put_vec(net.biases[l]);
  }
  put_mat(net.head_A);
  put_vec(net.head_b);
  return v;
}

void unflatten_params(const Eigen::VectorXd& v, CostNetwork& net) {
  long at = 0;
  auto get_mat = [&](Eigen::MatrixXd& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(at, m.size());
    at += m.size();
  };
  auto get_vec = [&](Eigen::VectorXd& b) {
    b = v.segment(at, b.size());
    at += b.size();
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    get_mat(net.weights[l]);
    get_vec(net.biases[l]);
  }
  get_mat(net.head_A);
  get_vec(net.head_b);
}

Eigen::VectorXd flatten_gradient(const CostGradient& g) {
  long n = g.head_A.size() + g.head_b.size();
  for (size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
  Eigen::VectorXd v(n);
  long at = 0;
  for (size_t l = 0; l < g.weights.size(); ++l) {
    v.segment(at, g.weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(g.weights[l].data(), g.weights[l].size());
    at += g.weights[l].size();
    v.segment(at, g.biases[l].size()) = g.biases[l];
    at += g.biases[l].size();
  }
  v.segment(at, g.head_A.size()) =
      Eigen::Map<const Eigen::VectorXd>(g.head_A.data(), g.head_A.size());
  at += g.head_A.size();
  v.segment(at, g.head_b.size()) = g.head_b;
  return v;
}

FeatureTrace feature_forward(const CostNetwork& net, const Eigen::VectorXd& x) {
  const size_t L = net.weights.size();
  FeatureTrace tr;
  tr.acts.resize(L);
  tr.pre.resize(L);
  tr.acts[0] = select_input(net, x);
  for (size_t l = 0; l < L; ++l) {
    tr.pre[l] = net.weights[l] * tr.acts[l] + net.biases[l];
    if (l + 1 < L) tr.acts[l + 1] = relu(tr.pre[l]);
  }
  tr.y = tr.pre[L - 1];
  tr.r = net.head_A * tr.y + net.head_b;
  return tr;
}

double state_cost(const CostNetwork& net, const Eigen::VectorXd& x) {
  return feature_forward(net, x).r.squaredNorm();
}

double cost_forward(const CostNetwork& net, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) {
  return state_cost(net, x) + net.torque_weight * u.squaredNorm();
}

double cost_traj(const CostNetwork& net, const Trajectory& traj) {
  double total = 0.0;
  for (int t = 0; t < traj.horizon(); ++t)
    total += cost_forward(net, traj.states[t], traj.actions[t]);
  return total;
}

void accumulate_state_cost_gradient(const CostNetwork& net, const FeatureTrace& trace,
                                    double weight, CostGradient& grad) {
  if (weight == 0.0) return;
  const size_t L = net.weights.size();
  Eigen::VectorXd dr = (2.0 * weight) * trace.r;
  grad.head_A.noalias() += dr * trace.y.transpose();
  grad.head_b += dr;
  Eigen::VectorXd g = net.head_A.transpose() * dr;  // d/dy
  for (size_t l = L; l-- > 0;) {
    grad.weights[l].noalias() += g * trace.acts[l].transpose();
    grad.biases[l] += g;
    if (l > 0) g = (net.weights[l].transpose() * g).cwiseProduct(relu_mask(trace.pre[l - 1]));
  }
}

CostGradient cost_param_gradient(const CostNetwork& net, const Trajectory& traj,
                                 double scale) {
  CostGradient grad = CostGradient::zeros_like(net);
  if (scale == 0.0) return grad;
  for (int t = 0; t < traj.horizon(); ++t) {
    FeatureTrace tr = feature_forward(net, traj.states[t]);
    accumulate_state_cost_gradient(net, tr, scale, grad);
    // torque term has no theta dependence
  }
  return grad;
}

namespace {

// Feature Jacobian dy/dz at the traced point (F x d_in).
Eigen::MatrixXd feature_jacobian(const CostNetwork& net, const FeatureTrace& tr) {
  const size_t L = net.weights.size();
  Eigen::MatrixXd J = net.weights[0];
  for (size_t l = 1; l < L; ++l)
    J = net.weights[l] * relu_mask(tr.pre[l - 1]).asDiagonal() * J;
  return J;
}

}  // namespace

CostExpansion cost_quad_expansion(const CostNetwork& net, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) {
  const int dx = static_cast<int>(x.size());
  const int du = static_cast<int>(u.size());
  FeatureTrace tr = feature_forward(net, x);
  Eigen::MatrixXd J = feature_jacobian(net, tr);
  Eigen::MatrixXd AJ = net.head_A * J;  // k x d_in

  CostExpansion e;
  e.c = tr.r.squaredNorm() + net.torque_weight * u.squaredNorm();
  Eigen::VectorXd gx_sel = 2.0 * AJ.transpose() * tr.r;
  Eigen::MatrixXd Hx_sel = 2.0 * AJ.transpose() * AJ;
  e.cx = Eigen::VectorXd::Zero(dx);
  e.Cxx = Eigen::MatrixXd::Zero(dx, dx);
  for (int i = 0; i < net.input_dim(); ++i) {
    e.cx[net.input_selector[i]] = gx_sel[i];
    for (int j = 0; j < net.input_dim(); ++j)
      e.Cxx(net.input_selector[i], net.input_selector[j]) = Hx_sel(i, j);
  }
  e.cu = 2.0 * net.torque_weight * u;
  e.Cuu = 2.0 * net.torque_weight * Eigen::MatrixXd::Identity(du, du);
  e.Cux = Eigen::MatrixXd::Zero(du, dx);
  return e;
}

double lcr_from_costs(const Eigen::VectorXd& costs) {
  const int T = static_cast<int>(costs.size());
  if (T < 3) throw NumericError("lcr regularizer needs horizon >= 3");
  double total = 0.0;
  for (int t = 1; t + 1 < T; ++t) {
    double d2 = (costs[t + 1] - costs[t]) - (costs[t] - costs[t - 1]);
    total += d2 * d2;
  }
  return total;
}

double mono_from_costs(const Eigen::VectorXd& costs, double margin) {
  const int T = static_cast<int>(costs.size());
  if (T < 2) throw NumericError("mono regularizer needs horizon >= 2");
  double total = 0.0;
  for (int t = 1; t < T; ++t) {
    double h = std::max(0.0, costs[t] - costs[t - 1] - margin);
    total += h * h;
  }
  return total;
}

namespace {

Eigen::VectorXd per_step_state_costs(const CostNetwork& net, const Trajectory& traj,
                                     std::vector<FeatureTrace>* traces) {
  const int T = traj.horizon();
  Eigen::VectorXd c(T);
  if (traces) traces->resize(T);
  for (int t = 0; t < T; ++t) {
    FeatureTrace tr = feature_forward(net, traj.states[t]);
    c[t] = tr.r.squaredNorm();
    if (traces) (*traces)[t] = std::move(tr);
  }
  return c;
}

}  // namespace

double reg_lcr(const CostNetwork& net, const Trajectory& traj) {
  return lcr_from_costs(per_step_state_costs(net, traj, nullptr));
}

double reg_mono(const CostNetwork& net, const Trajectory& traj, double margin) {
  return mono_from_costs(per_step_state_costs(net, traj, nullptr), margin);
}

void add_reg_lcr_gradient(const CostNetwork& net, const Trajectory& traj, double weight,
                          CostGradient& grad) {
  std::vector<FeatureTrace> traces;
  Eigen::VectorXd c = per_step_state_costs(net, traj, &traces);
  const int T = static_cast<int>(c.size());
  if (T < 3) throw NumericError("lcr regularizer needs horizon >= 3");
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(T);
  for (int t = 1; t + 1 < T; ++t) {
    double d2 = (c[t + 1] - c[t]) - (c[t] - c[t - 1]);
    dc[t + 1] += 2.0 * d2;
    dc[t] -= 4.0 * d2;
    dc[t - 1] += 2.0 * d2;
  }
  for (int t = 0; t < T; ++t)
    accumulate_state_cost_gradient(net, traces[t], weight * dc[t], grad);
}

void add_reg_mono_gradient(const CostNetwork& net, const Trajectory& traj, double margin,
                           double weight, CostGradient& grad) {
  std::vector<FeatureTrace> traces;
  Eigen::VectorXd c = per_step_state_costs(net, traj, &traces);
  const int T = static_cast<int>(c.size());
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(T);
  for (int t = 1; t < T; ++t) {
    double h = std::max(0.0, c[t] - c[t - 1] - margin);
    dc[t] += 2.0 * h;
    dc[t - 1] -= 2.0 * h;
  }
  for (int t = 0; t < T; ++t)
    accumulate_state_cost_gradient(net, traces[t], weight * dc[t], grad);
}

CostNetwork init_identity(int d_in, const std::vector<int>& hidden_widths, int feature_dim) {
  if (d_in <= 0) throw ConfigError("init_identity: input dimension must be positive");
  if (hidden_widths.empty())
    throw ConfigError("init_identity: need at least one hidden layer");
  const int w = 2 * d_in;
  for (int h : hidden_widths)
    if (h != w)
      throw ConfigError("init_identity: hidden widths must all equal 2*d_in = " +
                        std::to_string(w) + ", got " + std::to_string(h));
  if (feature_dim != w)
    throw ConfigError("init_identity: feature dim must equal 2*d_in = " + std::to_string(w));

  CostNetwork net;
  Eigen::MatrixXd first(w, d_in);
  first.topRows(d_in) = Eigen::MatrixXd::Identity(d_in, d_in);
  first.bottomRows(d_in) = -Eigen::MatrixXd::Identity(d_in, d_in);
  net.weights.push_back(first);
  net.biases.push_back(Eigen::VectorXd::Zero(w));
  for (size_t l = 1; l < hidden_widths.size(); ++l) {
    net.weights.push_back(Eigen::MatrixXd::Identity(w, w));
    net.biases.push_back(Eigen::VectorXd::Zero(w));
  }
  net.weights.push_back(Eigen::MatrixXd::Identity(w, w));  // affine feature map
  net.biases.push_back(Eigen::VectorXd::Zero(w));
  net.head_A = Eigen::MatrixXd::Zero(w, w);
  net.head_b = Eigen::VectorXd::Zero(w);
  net.input_selector.resize(d_in);
  for (int i = 0; i < d_in; ++i) net.input_selector[i] = i;
  return net;
}

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, double scale, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  const double s = scale / std::sqrt(static_cast<double>(cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = s * rng.gaussian();
  return m;
}

// Identity block in the top-left corner, small random values elsewhere.
Eigen::MatrixXd embedded_identity(int rows, int cols, double noise, Rng& rng) {
  Eigen::MatrixXd m = random_matrix(rows, cols, noise, rng);
  const int d = std::min(rows, cols);
  m.topLeftCorner(d, d) += Eigen::MatrixXd::Identity(d, d);
  return m;
}

}  // namespace

CostNetwork make_cost_network(int d_x, const CostNetConfig& cfg, Rng& rng) {
  std::vector<int> selector = cfg.input_selector;
  if (selector.empty()) {
    selector.resize(d_x);
    for (int i = 0; i < d_x; ++i) selector[i] = i;
  }
  const int d_in = static_cast<int>(selector.size());
  std::vector<int> hidden = cfg.hidden.empty() ? std::vector<int>{2 * d_in, 2 * d_in}
                                               : cfg.hidden;
  const int F = cfg.feature_dim > 0 ? cfg.feature_dim : 2 * d_in;
  const int head_rows = cfg.head_rows > 0 ? cfg.head_rows : F;

  CostNetwork net;
  bool exact = cfg.identity_init && F == 2 * d_in;
  for (int h : hidden) exact = exact && (h == 2 * d_in);
  if (exact) {
    net = init_identity(d_in, hidden, F);
  } else {
    int in = d_in;
    for (size_t l = 0; l < hidden.size(); ++l) {
      if (!cfg.identity_init) {
        net.weights.push_back(random_matrix(hidden[l], in, 1.0, rng));
      } else if (l == 0) {
        // Stack [I; -I] in the first 2*d_in rows when they fit.
        Eigen::MatrixXd w = random_matrix(hidden[0], d_in, 0.01, rng);
        const int d = std::min(d_in, hidden[0]);
        w.topLeftCorner(d, d) += Eigen::MatrixXd::Identity(d, d);
        if (hidden[0] >= 2 * d_in)
          w.block(d_in, 0, d_in, d_in) -= Eigen::MatrixXd::Identity(d_in, d_in);
        net.weights.push_back(w);
      } else {
        net.weights.push_back(embedded_identity(hidden[l], in, 0.01, rng));
      }
      net.biases.push_back(Eigen::VectorXd::Zero(hidden[l]));
      in = hidden[l];
    }
    net.weights.push_back(cfg.identity_init ? embedded_identity(F, in, 0.01, rng)
                                            : random_matrix(F, in, 1.0, rng));
    net.biases.push_back(Eigen::VectorXd::Zero(F));
  }

  const double hs = cfg.head_init_scale / std::sqrt(static_cast<double>(F));
  net.head_A.resize(head_rows, F);
  for (int i = 0; i < head_rows; ++i)
    for (int j = 0; j < F; ++j) net.head_A(i, j) = hs * rng.gaussian();
  net.head_b = Eigen::VectorXd::Zero(head_rows);
  net.torque_weight = cfg.torque_weight;
  net.input_selector = selector;
  return net;
}

// ---- checkpoint io ----

namespace {
constexpr const char* kCostMagic = "ioclab-cost-checkpoint";
constexpr int kCostVersion = 1;

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (!(is >> m(i, j))) throw ConfigError("cost checkpoint: truncated matrix");
  return m;
}
}  // namespace

void save_cost_checkpoint(const std::string& path, const CostNetwork& net) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << kCostMagic << ' ' << kCostVersion << '\n';
  f << "torque_weight " << format_double(net.torque_weight) << '\n';
  f << "selector " << net.input_selector.size();
  for (int i : net.input_selector) f << ' ' << i;
  f << '\n';
  f << "layers " << net.weights.size() << '\n';
  for (size_t l = 0; l < net.weights.size(); ++l) {
    f << "weight " << l << ' ' << net.weights[l].rows() << ' ' << net.weights[l].cols() << '\n';
    write_matrix(f, net.weights[l]);
    f << "bias " << l << ' ' << net.biases[l].size() << '\n';
    write_matrix(f, net.biases[l].transpose());
  }
  f << "head_A " << net.head_A.rows() << ' ' << net.head_A.cols() << '\n';
  write_matrix(f, net.head_A);
  f << "head_b " << net.head_b.size() << '\n';
  write_matrix(f, net.head_b.transpose());
  f << "end\n";
}

CostNetwork load_cost_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != kCostMagic)
    throw ConfigError("not a cost checkpoint: " + path);
  if (version != kCostVersion)
    throw ConfigError("unsupported cost checkpoint version " + std::to_string(version));

  CostNetwork net;
  std::string tok;
  size_t n_layers = 0;
  while (f >> tok) {
    if (tok == "torque_weight") {
      f >> net.torque_weight;
    } else if (tok == "selector") {
      size_t n;
      f >> n;
      net.input_selector.resize(n);
      for (size_t i = 0; i < n; ++i) f >> net.input_selector[i];
    } else if (tok == "layers") {
      f >> n_layers;
      net.weights.resize(n_layers);
      net.biases.resize(n_layers);
    } else if (tok == "weight") {
      size_t l;
      int r, c;
      f >> l >> r >> c;
      if (l >= n_layers) throw ConfigError("cost checkpoint: layer index out of range");
      net.weights[l] = read_matrix(f, r, c);
    } else if (tok == "bias") {
      size_t l;
      int n;
      f >> l >> n;
      if (l >= n_layers) throw ConfigError("cost checkpoint: layer index out of range");
      net.biases[l] = read_matrix(f, 1, n).transpose();
    } else if (tok == "head_A") {
      int r, c;
      f >> r >> c;
      net.head_A = read_matrix(f, r, c);
    } else if (tok == "head_b") {
      int n;
      f >> n;
      net.head_b = read_matrix(f, 1, n).transpose();
    } else if (tok == "end") {
      return net;
    } else {
      throw ConfigError("cost checkpoint: unknown field '" + tok + "'");
    }
  }
  throw ConfigError("cost checkpoint: missing end marker");
}

}  // namespace ioclab
