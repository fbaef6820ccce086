#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ioclab/costmodel.hpp"
#include "ioclab/trajmath.hpp"

namespace ioclab {

/// Global Gaussian mixture over (x_t, u_t, x_{t+1}) tuples, refit on all
/// interaction data each iteration and used as a normal-inverse-Wishart prior
/// for the per-timestep dynamics regressions.
struct GmmPrior {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  double niw_strength = 1.0;
  double final_loglik = 0.0;
  int em_iterations = 0;
  std::vector<double> loglik_trace;  // mean log-likelihood per EM iteration

  int components() const { return static_cast<int>(weights.size()); }
};

/// EM to convergence (mean log-likelihood change < 1e-6 or 100 iterations),
/// k-means++-style seeding from rng, covariances floored PD.
GmmPrior fit_gmm(const std::vector<Eigen::VectorXd>& tuples, int K, double prior_strength,
                 Rng& rng);

/// Mean per-point log-likelihood of tuples under the mixture.
double gmm_log_likelihood(const GmmPrior& gmm, const std::vector<Eigen::VectorXd>& tuples);

/// Per-timestep Bayesian linear regression of x_{t+1} on (x_t, u_t). With a
/// prior, the GMM posterior moments act as a normal-inverse-Wishart prior;
/// without one, plain centered ridge. The affine term always absorbs the
/// empirical means, so in-sample residuals are centered. Noise covariances
/// come from residuals, floored PD. Initial-state Gaussian from x_1 stats.
LinearGaussianDynamics fit_dynamics(const std::vector<Trajectory>& samples,
                                    const GmmPrior* prior, double ridge = 1e-6);

/// In-sample mean squared one-step prediction error.
double dynamics_mse(const LinearGaussianDynamics& dyn,
                    const std::vector<Trajectory>& samples);

/// LQR backward recursion on quadratized costs with the soft action
/// covariance Sigma_t = Q_uu^{-1}. Expansions are taken at the given nominal
/// points and re-centered to absolute coordinates internally. Q_uu gets
/// Levenberg regularization (mu escalating x10 from 1e-8) when not PD.
LinearGaussianController maxent_lqr_backward(const LinearGaussianDynamics& dyn,
                                             std::span<const CostExpansion> expansions,
                                             std::span<const Eigen::VectorXd> x_nom,
                                             std::span<const Eigen::VectorXd> u_nom);

struct KlUpdateOptions {
  double epsilon = 1.0;
  bool maxent = true;              // when false, action covariance is collapsed
  double fixed_action_var = 1e-4;  // collapsed variance for the no-maxent variant
};

struct KlUpdateResult {
  LinearGaussianController ctrl;
  double eta = 0.0;
  double achieved_kl = 0.0;
};

/// Solve min_q E_q[c] - H(q) s.t. KL(q || prev) <= epsilon through the dual:
/// the surrogate cost (c + eta * cross-entropy-to-prev) / (1 + eta) goes
/// through maxent_lqr_backward, and eta is found by bracketing plus bisection
/// until the achieved KL lands in [0.9, 1.1] * epsilon (or the unconstrained
/// solution already satisfies the constraint).
KlUpdateResult kl_constrained_update(const LinearGaussianController& prev,
                                     const LinearGaussianDynamics& dyn,
                                     std::span<const CostExpansion> expansions,
                                     std::span<const Eigen::VectorXd> x_nom,
                                     std::span<const Eigen::VectorXd> u_nom,
                                     const KlUpdateOptions& opt);

/// Adaptive KL step state: epsilon is halved when the last update made things
/// worse, doubled when it achieved at least half the predicted improvement.
struct StepState {
  double epsilon = 1.0;
  LinearGaussianController prev_ctrl;
  double predicted_improvement = 0.0;
  double actual_improvement = 0.0;
};

double adapt_step(const StepState& state);

/// Expected value of the quadratic cost model under the distribution's
/// forward marginals (exact, no sampling).
double expected_quad_cost(const GaussianTrajDist& dist,
                          std::span<const CostExpansion> expansions,
                          std::span<const Eigen::VectorXd> x_nom,
                          std::span<const Eigen::VectorXd> u_nom);

using CostExpander =
    std::function<CostExpansion(const Eigen::VectorXd& x, const Eigen::VectorXd& u)>;
using TrajectorySampler =
    std::function<std::vector<Trajectory>(const LinearGaussianController&, int, Rng&)>;
using DynamicsProvider = std::function<LinearGaussianDynamics(
    std::span<const Eigen::VectorXd> x_nom, std::span<const Eigen::VectorXd> u_nom)>;

struct PoloptConfig {
  int max_iters = 20;
  int samples_per_iter = 5;
  double epsilon_init = 1.0;
  double convergence_tol = 1e-6;  // on the predicted improvement
  bool use_gmm_prior = true;
  int gmm_max_clusters = 20;      // K = min(#tuples / 40, this)
  double gmm_prior_strength = 1.0;
  double dyn_ridge = 1e-6;
  bool exact_dynamics = false;
  bool maxent = true;
  double fixed_action_var = 1e-4;
};

struct PoloptDiagRow {
  int iter = 0;
  double expected_cost = 0.0;
  double kl_step = 0.0;
  double eta = 0.0;
  double epsilon = 0.0;
  double dynamics_mse = 0.0;
};

/// System access for the policy optimizer. `sample` rolls a controller on
/// the real system; `exact_dynamics` is optional and replaces regression.
struct PoloptProblem {
  TrajectorySampler sample;
  CostExpander expand;
  std::function<double(const Trajectory&)> traj_cost;
  DynamicsProvider exact_dynamics;
  int horizon = 0;
  int dx = 0;
  int du = 0;
};

struct PoloptResult {
  LinearGaussianController ctrl;
  std::vector<PoloptDiagRow> diag;
  std::vector<Trajectory> last_samples;
  std::vector<LinearGaussianController> iterates;  // controller after each update
};

/// Iterate (sample -> fit dynamics -> KL-constrained update -> adapt step)
/// against a fixed cost until the predicted improvement falls below tol.
PoloptResult optimize_policy(const PoloptProblem& prob, LinearGaussianController init,
                             const PoloptConfig& cfg, Rng& rng);

/// Diagnostics CSV: iter,expected_cost,kl_step,eta,epsilon,dynamics_mse
void write_polopt_diag_csv(std::ostream& os, std::span<const PoloptDiagRow> rows);

}  // namespace ioclab
