#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>

namespace ioclab {

// Additive floor applied to fitted and propagated covariances before they
// are stored or inverted.
inline constexpr double kCovFloor = 1e-6;

/// Bad or inconsistent configuration input (maps to exit code 2 in the CLI).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure at runtime (maps to exit code 3 in the CLI).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw NumericError("logsumexp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logsumexp(const Eigen::VectorXd& v) {
  return logsumexp(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

/// Symmetrize and add eps*I; used to keep fitted covariances PD.
inline Eigen::MatrixXd floor_cov(const Eigen::MatrixXd& m, double eps = kCovFloor) {
  Eigen::MatrixXd out = symmetrize(m);
  out.diagonal().array() += eps;
  return out;
}

/// Eigenvalue clamp to the PSD cone; used on analytic cost Hessians before
/// they enter an LQR backward pass.
inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m, double min_eig = 0.0) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(min_eig);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// log N(x; mu, Sigma) with Sigma factored by LLT. Throws on non-PD Sigma.
inline double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& sigma) {
  const auto d = static_cast<double>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericError("gaussian_log_pdf: covariance not positive definite");
  const Eigen::VectorXd r = x - mu;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  double log_det = 0.0;
  for (int i = 0; i < sigma.rows(); ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (d * std::log(2.0 * M_PI) + log_det + z.squaredNorm());
}

/// Shortest-round-trip decimal rendering used in every CSV and checkpoint.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }
inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace ioclab
