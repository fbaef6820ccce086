#include "ioclab/trajmath.hpp"

#include <fstream>
#include <sstream>

namespace ioclab {

namespace {

void check_rollout_dims(const LinearGaussianDynamics& dyn,
                        const LinearGaussianController& ctrl) {
  const int T = ctrl.horizon();
  const int dx = dyn.state_dim();
  const int du = ctrl.action_dim();
  if (dyn.horizon() != T)
    throw NumericError("rollout_lgc: dynamics horizon " + std::to_string(dyn.horizon()) +
                       " != controller horizon " + std::to_string(T));
  for (int t = 0; t < T; ++t) {
    if (ctrl.K[t].rows() != du || ctrl.K[t].cols() != dx || ctrl.k[t].size() != du ||
        ctrl.sigma[t].rows() != du || ctrl.sigma[t].cols() != du)
      throw NumericError("rollout_lgc: controller dimension mismatch at timestep " +
                         std::to_string(t));
    if (t + 1 < T && (dyn.F[t].rows() != dx || dyn.F[t].cols() != dx + du ||
                      dyn.f[t].size() != dx || dyn.N[t].rows() != dx))
      throw NumericError("rollout_lgc: dynamics dimension mismatch at timestep " +
                         std::to_string(t));
  }
}

Eigen::VectorXd sample_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("sample_gaussian: covariance not positive semidefinite");
  return mean + llt.matrixL() * rng.gaussian_vec(static_cast<int>(mean.size()));
}

}  // namespace

LinearGaussianController LinearGaussianController::zeros(int T, int dx, int du,
                                                         double action_var) {
  LinearGaussianController c;
  c.K.assign(T, Eigen::MatrixXd::Zero(du, dx));
  c.k.assign(T, Eigen::VectorXd::Zero(du));
  c.sigma.assign(T, action_var * Eigen::MatrixXd::Identity(du, du));
  return c;
}

Trajectory rollout_lgc(const LinearGaussianDynamics& dyn,
                       const LinearGaussianController& ctrl, Rng& rng) {
  check_rollout_dims(dyn, ctrl);
  const int T = ctrl.horizon();
  Trajectory traj;
  traj.states.reserve(T);
  traj.actions.reserve(T);

  Eigen::VectorXd x = dyn.init_cov.isZero(0.0)
                          ? dyn.init_mean
                          : sample_gaussian(dyn.init_mean, dyn.init_cov, rng);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd u = sample_gaussian(ctrl.K[t] * x + ctrl.k[t], ctrl.sigma[t], rng);
    traj.states.push_back(x);
    traj.actions.push_back(u);
    if (t + 1 < T) {
      Eigen::VectorXd xu(x.size() + u.size());
      xu << x, u;
      Eigen::VectorXd next_mean = dyn.F[t] * xu + dyn.f[t];
      x = dyn.N[t].isZero(0.0) ? next_mean : sample_gaussian(next_mean, dyn.N[t], rng);
      if (!all_finite(x))
        throw NumericError("rollout_lgc: non-finite state at timestep " + std::to_string(t + 1));
    }
  }
  return traj;
}

std::vector<StepMarginal> forward_marginals(const GaussianTrajDist& dist) {
  const int T = dist.ctrl.horizon();
  const int dx = dist.dyn.state_dim();
  const int du = dist.ctrl.action_dim();
  if (dist.dyn.horizon() != T)
    throw NumericError("forward_marginals: horizon mismatch");

  std::vector<StepMarginal> out(T);
  Eigen::VectorXd mx = dist.dyn.init_mean;
  Eigen::MatrixXd Sx = floor_cov(dist.dyn.init_cov);
  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd& K = dist.ctrl.K[t];
    Eigen::VectorXd mu = K * mx + dist.ctrl.k[t];

    StepMarginal m;
    m.mean.resize(dx + du);
    m.mean << mx, mu;
    m.cov.resize(dx + du, dx + du);
    m.cov.topLeftCorner(dx, dx) = Sx;
    m.cov.topRightCorner(dx, du) = Sx * K.transpose();
    m.cov.bottomLeftCorner(du, dx) = K * Sx;
    m.cov.bottomRightCorner(du, du) = K * Sx * K.transpose() + dist.ctrl.sigma[t];
    m.cov = symmetrize(m.cov);
    if (!all_finite(m.cov) || !all_finite(m.mean))
      throw NumericError("forward_marginals: non-finite marginal at timestep " +
                         std::to_string(t));
    out[t] = std::move(m);

    if (t + 1 < T) {
      const Eigen::MatrixXd& F = dist.dyn.F[t];
      mx = F * out[t].mean + dist.dyn.f[t];
      Sx = floor_cov(F * out[t].cov * F.transpose() + dist.dyn.N[t]);
    }
  }
  return out;
}

ControllerDensity::ControllerDensity(const LinearGaussianController& ctrl) : ctrl_(ctrl) {
  const int T = ctrl_.horizon();
  const double du = static_cast<double>(ctrl_.action_dim());
  llt_.reserve(T);
  log_norm_.reserve(T);
  for (int t = 0; t < T; ++t) {
    llt_.emplace_back(ctrl_.sigma[t]);
    if (llt_.back().info() != Eigen::Success)
      throw NumericError("traj_log_density: singular action covariance at timestep " +
                         std::to_string(t));
    double log_det = 0.0;
    for (int i = 0; i < ctrl_.sigma[t].rows(); ++i)
      log_det += 2.0 * std::log(llt_.back().matrixL()(i, i));
    log_norm_.push_back(-0.5 * (du * std::log(2.0 * M_PI) + log_det));
  }
}

double ControllerDensity::log_density(const Trajectory& traj) const {
  const int T = ctrl_.horizon();
  if (traj.horizon() != T)
    throw NumericError("traj_log_density: horizon mismatch");
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd r = traj.actions[t] - (ctrl_.K[t] * traj.states[t] + ctrl_.k[t]);
    Eigen::VectorXd z = llt_[t].matrixL().solve(r);
    total += log_norm_[t] - 0.5 * z.squaredNorm();
  }
  return total;
}

double traj_log_density(const LinearGaussianController& ctrl, const Trajectory& traj) {
  return ControllerDensity(ctrl).log_density(traj);
}

double kl_traj(const GaussianTrajDist& p, const LinearGaussianController& q_ctrl) {
  const int T = p.ctrl.horizon();
  const int dx = p.dyn.state_dim();
  const int du = p.ctrl.action_dim();
  if (q_ctrl.horizon() != T || q_ctrl.state_dim() != dx || q_ctrl.action_dim() != du)
    throw NumericError("kl_traj: controller dimensions do not match");

  const std::vector<StepMarginal> marg = forward_marginals(p);
  double kl = 0.0;
  for (int t = 0; t < T; ++t) {
    Eigen::LLT<Eigen::MatrixXd> llt_q(q_ctrl.sigma[t]);
    Eigen::LLT<Eigen::MatrixXd> llt_p(p.ctrl.sigma[t]);
    if (llt_q.info() != Eigen::Success || llt_p.info() != Eigen::Success)
      throw NumericError("kl_traj: singular action covariance at timestep " +
                         std::to_string(t));
    double log_det_q = 0.0, log_det_p = 0.0;
    for (int i = 0; i < du; ++i) {
      log_det_q += 2.0 * std::log(llt_q.matrixL()(i, i));
      log_det_p += 2.0 * std::log(llt_p.matrixL()(i, i));
    }

    const Eigen::VectorXd mx = marg[t].mean.head(dx);
    const Eigen::MatrixXd Sx = marg[t].cov.topLeftCorner(dx, dx);
    const Eigen::MatrixXd dK = q_ctrl.K[t] - p.ctrl.K[t];
    const Eigen::VectorXd dm = dK * mx + (q_ctrl.k[t] - p.ctrl.k[t]);

    const double term_trace = llt_q.solve(p.ctrl.sigma[t]).trace();
    const double term_gain = (llt_q.solve(dK) * Sx * dK.transpose()).trace();
    const Eigen::VectorXd z = llt_q.matrixL().solve(dm);
    kl += 0.5 * (term_trace + term_gain + z.squaredNorm() - du + log_det_q - log_det_p);
  }
  return kl;
}

namespace {

struct RidgeFit {
  Eigen::MatrixXd gain;    // q x p
  Eigen::VectorXd offset;  // q
  Eigen::MatrixXd res_cov;  // q x q, floored
};

// Centered ridge regression of Y (n x q) on Z (n x p). The affine term
// absorbs the means, so in-sample residuals have exactly zero mean.
RidgeFit ridge_regress(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Y, double ridge) {
  const int n = static_cast<int>(Z.rows());
  const int p = static_cast<int>(Z.cols());
  Eigen::RowVectorXd zbar = Z.colwise().mean();
  Eigen::RowVectorXd ybar = Y.colwise().mean();
  Eigen::MatrixXd Zc = Z.rowwise() - zbar;
  Eigen::MatrixXd Yc = Y.rowwise() - ybar;

  double scale = Z.squaredNorm() / std::max(1, n * p);
  if (scale < 1e-12) scale = 1.0;
  Eigen::MatrixXd G = Zc.transpose() * Zc;
  G.diagonal().array() += ridge * scale;

  RidgeFit fit;
  Eigen::MatrixXd W = G.ldlt().solve(Zc.transpose() * Yc);  // p x q
  fit.gain = W.transpose();
  fit.offset = ybar.transpose() - fit.gain * zbar.transpose();
  Eigen::MatrixXd R = Yc - Zc * W;
  fit.res_cov = floor_cov(R.transpose() * R / static_cast<double>(n));
  return fit;
}

}  // namespace

GaussianTrajDist fit_demo_distribution(const std::vector<Trajectory>& demos, double ridge) {
  const int n = static_cast<int>(demos.size());
  if (n < 2) throw NumericError("fit_demo_distribution: need at least 2 demos, got " +
                                std::to_string(n));
  const int T = demos[0].horizon();
  const int dx = demos[0].state_dim();
  const int du = demos[0].action_dim();
  for (const auto& d : demos)
    if (d.horizon() != T || d.state_dim() != dx || d.action_dim() != du)
      throw NumericError("fit_demo_distribution: demos have mismatched shapes");

  GaussianTrajDist dist;
  dist.ctrl.K.resize(T);
  dist.ctrl.k.resize(T);
  dist.ctrl.sigma.resize(T);
  dist.dyn.F.resize(T - 1);
  dist.dyn.f.resize(T - 1);
  dist.dyn.N.resize(T - 1);

  Eigen::MatrixXd X(n, dx), U(n, du), XU(n, dx + du), X1(n, dx);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      X.row(i) = demos[i].states[t].transpose();
      U.row(i) = demos[i].actions[t].transpose();
    }
    RidgeFit cf = ridge_regress(X, U, ridge);
    dist.ctrl.K[t] = cf.gain;
    dist.ctrl.k[t] = cf.offset;
    dist.ctrl.sigma[t] = cf.res_cov;

    if (t + 1 < T) {
      for (int i = 0; i < n; ++i) {
        XU.row(i) << demos[i].states[t].transpose(), demos[i].actions[t].transpose();
        X1.row(i) = demos[i].states[t + 1].transpose();
      }
      RidgeFit df = ridge_regress(XU, X1, ridge);
      dist.dyn.F[t] = df.gain;
      dist.dyn.f[t] = df.offset;
      dist.dyn.N[t] = df.res_cov;
    }
  }

  Eigen::MatrixXd first(n, dx);
  for (int i = 0; i < n; ++i) first.row(i) = demos[i].states[0].transpose();
  dist.dyn.init_mean = first.colwise().mean().transpose();
  Eigen::MatrixXd C = first.rowwise() - first.colwise().mean();
  dist.dyn.init_cov = floor_cov(C.transpose() * C / static_cast<double>(n));
  return dist;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int dx = traj.state_dim();
  const int du = traj.action_dim();
  os << "t";
  for (int i = 0; i < dx; ++i) os << ",x" << i;
  for (int i = 0; i < du; ++i) os << ",u" << i;
  os << "\n";
  for (int t = 0; t < traj.horizon(); ++t) {
    os << t;
    for (int i = 0; i < dx; ++i) os << "," << format_double(traj.states[t][i]);
    for (int i = 0; i < du; ++i) os << "," << format_double(traj.actions[t][i]);
    os << "\n";
  }
}

Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line))
    throw ConfigError("trajectory csv: missing header");
  int dx = 0, du = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (col.rfind('x', 0) == 0) ++dx;
      else if (col.rfind('u', 0) == 0) ++du;
    }
  }
  if (dx == 0 || du == 0)
    throw ConfigError("trajectory csv: header must list x and u columns");

  Trajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');  // t column
    Eigen::VectorXd x(dx), u(du);
    for (int i = 0; i < dx; ++i) {
      if (!std::getline(row, cell, ','))
        throw ConfigError("trajectory csv: short row");
      x[i] = std::stod(cell);
    }
    for (int i = 0; i < du; ++i) {
      if (!std::getline(row, cell, ','))
        throw ConfigError("trajectory csv: short row");
      u[i] = std::stod(cell);
    }
    traj.states.push_back(std::move(x));
    traj.actions.push_back(std::move(u));
  }
  if (traj.horizon() < 2) throw ConfigError("trajectory csv: need at least 2 timesteps");
  return traj;
}

void save_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  write_trajectory_csv(f, traj);
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  return read_trajectory_csv(f);
}

}  // namespace ioclab
