#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "ioclab/polopt.hpp"
#include "ioclab/trajmath.hpp"

namespace ioclab {

/// Analytic benchmark environment. `step_det` is the deterministic transition
/// (including any manifold projection, e.g. recomputing end-effector
/// coordinates from joint angles); env_step adds per-dimension process noise.
struct EnvSpec {
  std::string name;
  int dx = 0;
  int du = 0;
  int horizon = 100;
  double dt = 0.05;
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;
  std::function<Eigen::VectorXd(Rng&)> init_sampler;  // overrides the Gaussian when set
  Eigen::VectorXd noise_std;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> step_det;
  std::function<void(Eigen::VectorXd&)> project;  // manifold restoration after noise
  std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd&,
                     Eigen::MatrixXd&)>
      linearize;            // d step_det / d(x, u); finite differences if unset
  bool linear_dynamics = false;  // linearization is exact and global
  double action_scale = 1.0;
  std::function<double(const Eigen::VectorXd&)> distance_to_goal;
};

/// One transition with process noise. Throws on non-finite input.
Eigen::VectorXd env_step(const EnvSpec& env, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, Rng& rng);

/// Run a controller on the environment. Action noise can be disabled to
/// roll out the controller mean.
Trajectory rollout_env(const EnvSpec& env, const LinearGaussianController& ctrl, Rng& rng,
                       const Eigen::VectorXd* x1_override = nullptr,
                       bool stochastic_actions = true);

/// Closed-form per-step cost with analytic gradient and Hessian. `expand`
/// returns the raw expansion (the Hessian may be indefinite); use
/// lqr_expander for a PSD-projected version suitable for a backward pass.
struct GroundTruthCost {
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> cost;
  CostExpander expand;
};

CostExpander lqr_expander(const GroundTruthCost& gt);
double traj_ground_truth_cost(const GroundTruthCost& gt, const Trajectory& traj);

/// Time-varying exact dynamics from the environment's linearization at the
/// nominal points, with the env's process noise.
DynamicsProvider exact_dynamics_provider(const EnvSpec& env);

/// TrajectorySampler backed by env rollouts.
TrajectorySampler env_sampler(const EnvSpec& env);

// ---- concrete environments ----

struct PointMassParams {
  double dt = 0.05;
  int horizon = 100;
  double noise_std = 1e-3;
  Eigen::Vector2d goal{0.0, 0.0};
  Eigen::Vector4d init_mean{1.0, 1.0, 0.0, 0.0};
  double init_pos_std = 1e-2;
  double w_pos = 1.0;
  double w_vel = 0.1;
  double w_u = 0.5;
};

/// Double integrator in the plane: d_x = 4 (2D position and velocity),
/// d_u = 2. Quadratic distance-to-goal cost plus action penalty.
EnvSpec make_pointmass(const PointMassParams& p = {});
GroundTruthCost make_pointmass_cost(const PointMassParams& p = {});

struct ObstacleBump {
  Eigen::Vector2d center;
  double height = 1.5;
  double width = 0.18;  // Gaussian std
};

struct Nav2dParams {
  PointMassParams base;
  std::vector<ObstacleBump> obstacles;  // empty -> 3 defaults between start and goal
};

/// Point-mass dynamics with a field of Gaussian obstacle bumps in the cost.
EnvSpec make_nav2d(const Nav2dParams& p = {});
GroundTruthCost make_nav2d_cost(const Nav2dParams& p = {});
std::vector<ObstacleBump> default_nav2d_obstacles();

struct ReacherParams {
  double dt = 0.05;
  int horizon = 100;
  double noise_std = 1e-3;
  double l1 = 0.5, l2 = 0.5;   // link lengths
  double m1 = 1.0, m2 = 1.0;   // link masses
  double damping = 0.5;        // viscous joint damping
  double gravity = 0.0;        // 0 = horizontal plane
  Eigen::Vector2d target{0.5, 0.5};
  Eigen::Vector2d init_angles{M_PI / 2.0, 0.0};
  double init_angle_std = 1e-2;
  double w_dist = 1.0;
  double v_log = 1.0;
  double alpha = 1e-5;
  double w_vel = 0.0;
  double w_u = 1e-2;
};

/// Planar 2-link arm under joint torques. State ordering:
/// [theta1, theta2, omega1, omega2, ee_x, ee_y, ee_vx, ee_vy] (d_x = 8,
/// d_u = 2). The end-effector block is recomputed from the joint block after
/// every transition. Cost: w d^2 + v log(d^2 + alpha) on the end-effector
/// distance to the target, plus the action penalty.
EnvSpec make_reacher(const ReacherParams& p = {});
GroundTruthCost make_reacher_cost(const ReacherParams& p = {});

/// Forward kinematics for the reacher: end-effector position and velocity
/// from joint angles and velocities.
Eigen::Vector4d reacher_ee(const ReacherParams& p, const Eigen::Vector2d& theta,
                           const Eigen::Vector2d& omega);

/// Optimize a policy against the ground-truth cost for each initial
/// condition, then roll out demonstrations (at least one per condition).
/// With `stochastic` off, rollouts use the controller mean and no process
/// noise.
std::vector<Trajectory> generate_demos(const EnvSpec& env, const GroundTruthCost& gt,
                                       const std::vector<Eigen::VectorXd>& initial_conditions,
                                       int n_demos, const PoloptConfig& cfg, Rng& rng,
                                       bool stochastic = true);

}  // namespace ioclab
