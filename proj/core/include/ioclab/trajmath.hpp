#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "ioclab/common.hpp"
#include "ioclab/rng.hpp"

namespace ioclab {

/// Fixed-horizon trajectory: T states in R^dx paired with T actions in R^du.
struct Trajectory {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> actions;

  int horizon() const { return static_cast<int>(states.size()); }
  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states[0].size()); }
  int action_dim() const { return actions.empty() ? 0 : static_cast<int>(actions[0].size()); }
};

/// Time-varying affine-Gaussian policy: u_t ~ N(K_t x_t + k_t, Sigma_t).
struct LinearGaussianController {
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::VectorXd> k;
  std::vector<Eigen::MatrixXd> sigma;

  int horizon() const { return static_cast<int>(K.size()); }
  int state_dim() const { return K.empty() ? 0 : static_cast<int>(K[0].cols()); }
  int action_dim() const { return K.empty() ? 0 : static_cast<int>(K[0].rows()); }

  /// Zero-gain, zero-offset controller with isotropic action covariance.
  static LinearGaussianController zeros(int T, int dx, int du, double action_var);
};

/// Time-varying affine-Gaussian transition model
/// x_{t+1} ~ N(F_t [x_t; u_t] + f_t, N_t), with a Gaussian initial state.
/// F, f, N have T-1 entries for a horizon-T distribution.
struct LinearGaussianDynamics {
  std::vector<Eigen::MatrixXd> F;  // dx x (dx+du)
  std::vector<Eigen::VectorXd> f;
  std::vector<Eigen::MatrixXd> N;  // dx x dx, PSD
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;  // PSD

  int horizon() const { return static_cast<int>(F.size()) + 1; }
  int state_dim() const { return static_cast<int>(init_mean.size()); }
  int action_dim() const {
    return F.empty() ? 0 : static_cast<int>(F[0].cols() - F[0].rows());
  }
};

/// Joint Gaussian over (x_t, u_t) at one timestep.
struct StepMarginal {
  Eigen::VectorXd mean;  // [x; u]
  Eigen::MatrixXd cov;
};

/// A full Gaussian trajectory distribution: dynamics plus controller.
struct GaussianTrajDist {
  LinearGaussianDynamics dyn;
  LinearGaussianController ctrl;
};

/// Sample one trajectory by running the controller through the dynamics.
/// Deterministic given the rng state.
Trajectory rollout_lgc(const LinearGaussianDynamics& dyn,
                       const LinearGaussianController& ctrl, Rng& rng);

/// Exact per-step joint marginals over (x_t, u_t) under the distribution.
/// Propagated state covariances carry the kCovFloor additive floor.
std::vector<StepMarginal> forward_marginals(const GaussianTrajDist& dist);

/// Log-density of the action conditionals only:
/// sum_t log N(u_t; K_t x_t + k_t, Sigma_t). Dynamics factors are excluded;
/// they are shared between the MaxEnt target and every proposal, so they
/// cancel in self-normalized importance weights.
double traj_log_density(const LinearGaussianController& ctrl, const Trajectory& traj);

/// Precomputed Cholesky factors for evaluating traj_log_density over many
/// trajectories under one controller.
class ControllerDensity {
 public:
  explicit ControllerDensity(const LinearGaussianController& ctrl);
  double log_density(const Trajectory& traj) const;

 private:
  const LinearGaussianController ctrl_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;
  std::vector<double> log_norm_;  // -(du/2) log 2pi - (1/2) logdet Sigma_t
};

/// sum_t E_p[ KL( p(u_t|x_t) || q(u_t|x_t) ) ], closed form via the forward
/// marginals of p. Both distributions share p's dynamics.
double kl_traj(const GaussianTrajDist& p, const LinearGaussianController& q_ctrl);

/// Fit a single Gaussian trajectory distribution to demonstrations:
/// per-timestep ridge regression of u_t on x_t (controller), of x_{t+1} on
/// (x_t, u_t) (dynamics), and Gaussian statistics of x_1. All covariances
/// floored PD. `ridge` is relative to the mean squared scale of the
/// regressors. Requires >= 2 demos of equal horizon.
GaussianTrajDist fit_demo_distribution(const std::vector<Trajectory>& demos,
                                       double ridge = 1e-4);

// ---- trajectory CSV (header: t,x0..x{dx-1},u0..u{du-1}; %.17g values) ----
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is);
void save_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory_csv(const std::string& path);

}  // namespace ioclab
