#include "ioclab/envs.hpp"

#include <cmath>

namespace ioclab {

Eigen::VectorXd env_step(const EnvSpec& env, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, Rng& rng) {
  if (!all_finite(x) || !all_finite(u))
    throw NumericError("env_step(" + env.name + "): non-finite input");
  Eigen::VectorXd next = env.step_det(x, u);
  for (int i = 0; i < env.dx; ++i)
    if (env.noise_std[i] > 0.0) next[i] += env.noise_std[i] * rng.gaussian();
  if (env.project) env.project(next);
  return next;
}

Trajectory rollout_env(const EnvSpec& env, const LinearGaussianController& ctrl, Rng& rng,
                       const Eigen::VectorXd* x1_override, bool stochastic_actions) {
  const int T = env.horizon;
  if (ctrl.horizon() != T)
    throw NumericError("rollout_env: controller horizon != env horizon");
  Trajectory traj;
  traj.states.reserve(T);
  traj.actions.reserve(T);

  Eigen::VectorXd x;
  if (x1_override) {
    x = *x1_override;
  } else if (env.init_sampler && stochastic_actions) {
    x = env.init_sampler(rng);
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(env.init_cov);
    x = env.init_mean + (stochastic_actions ? Eigen::VectorXd(llt.matrixL() * rng.gaussian_vec(env.dx))
                                            : Eigen::VectorXd::Zero(env.dx));
  }
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd u = ctrl.K[t] * x + ctrl.k[t];
    if (stochastic_actions) {
      Eigen::LLT<Eigen::MatrixXd> llt(ctrl.sigma[t]);
      if (llt.info() != Eigen::Success)
        throw NumericError("rollout_env: singular action covariance at timestep " +
                           std::to_string(t));
      u += llt.matrixL() * rng.gaussian_vec(env.du);
    }
    traj.states.push_back(x);
    traj.actions.push_back(u);
    if (t + 1 < T) {
      if (stochastic_actions) {
        x = env_step(env, x, u, rng);
      } else {
        x = env.step_det(x, u);
      }
      if (!all_finite(x))
        throw NumericError("rollout_env(" + env.name + "): non-finite state at timestep " +
                           std::to_string(t + 1));
    }
  }
  return traj;
}

CostExpander lqr_expander(const GroundTruthCost& gt) {
  return [expand = gt.expand](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    CostExpansion e = expand(x, u);
    e.Cxx = project_psd(e.Cxx);
    e.Cuu = project_psd(e.Cuu, 1e-8);
    return e;
  };
}

double traj_ground_truth_cost(const GroundTruthCost& gt, const Trajectory& traj) {
  double total = 0.0;
  for (int t = 0; t < traj.horizon(); ++t) total += gt.cost(traj.states[t], traj.actions[t]);
  return total;
}

namespace {

// Central finite differences of step_det, used when no analytic
// linearization is provided.
void fd_linearize(const EnvSpec& env, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                  Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
  const double h = 1e-6;
  A.resize(env.dx, env.dx);
  B.resize(env.dx, env.du);
  for (int i = 0; i < env.dx; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    A.col(i) = (env.step_det(xp, u) - env.step_det(xm, u)) / (2.0 * h);
  }
  for (int i = 0; i < env.du; ++i) {
    Eigen::VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    B.col(i) = (env.step_det(x, up) - env.step_det(x, um)) / (2.0 * h);
  }
}

}  // namespace

DynamicsProvider exact_dynamics_provider(const EnvSpec& env) {
  return [env](std::span<const Eigen::VectorXd> x_nom, std::span<const Eigen::VectorXd> u_nom) {
    const int T = static_cast<int>(x_nom.size());
    LinearGaussianDynamics dyn;
    dyn.F.resize(T - 1);
    dyn.f.resize(T - 1);
    dyn.N.resize(T - 1);
    Eigen::MatrixXd noise = env.noise_std.array().square().matrix().asDiagonal();
    for (int t = 0; t + 1 < T; ++t) {
      Eigen::MatrixXd A, B;
      if (env.linearize) env.linearize(x_nom[t], u_nom[t], A, B);
      else fd_linearize(env, x_nom[t], u_nom[t], A, B);
      dyn.F[t].resize(env.dx, env.dx + env.du);
      dyn.F[t] << A, B;
      dyn.f[t] = env.step_det(x_nom[t], u_nom[t]) - A * x_nom[t] - B * u_nom[t];
      dyn.N[t] = noise;
    }
    dyn.init_mean = env.init_mean;
    dyn.init_cov = env.init_cov;
    return dyn;
  };
}

TrajectorySampler env_sampler(const EnvSpec& env) {
  return [env](const LinearGaussianController& ctrl, int n, Rng& rng) {
    std::vector<Trajectory> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(rollout_env(env, ctrl, rng));
    return out;
  };
}

// --------------------------------------------------------------- point mass

namespace {

void pointmass_matrices(double dt, Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
  A = Eigen::MatrixXd::Identity(4, 4);
  A(0, 2) = dt;
  A(1, 3) = dt;
  B = Eigen::MatrixXd::Zero(4, 2);
  B(0, 0) = 0.5 * dt * dt;
  B(1, 1) = 0.5 * dt * dt;
  B(2, 0) = dt;
  B(3, 1) = dt;
}

EnvSpec make_pointmass_env(const PointMassParams& p, const std::string& name) {
  EnvSpec env;
  env.name = name;
  env.dx = 4;
  env.du = 2;
  env.horizon = p.horizon;
  env.dt = p.dt;
  env.init_mean = p.init_mean;
  env.init_cov = Eigen::MatrixXd::Zero(4, 4);
  env.init_cov.diagonal() << p.init_pos_std * p.init_pos_std, p.init_pos_std * p.init_pos_std,
      1e-6, 1e-6;
  env.noise_std = Eigen::VectorXd::Constant(4, p.noise_std);
  Eigen::MatrixXd A, B;
  pointmass_matrices(p.dt, A, B);
  env.step_det = [A, B](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(A * x + B * u);
  };
  env.linearize = [A, B](const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& Ao,
                         Eigen::MatrixXd& Bo) {
    Ao = A;
    Bo = B;
  };
  env.linear_dynamics = true;
  env.action_scale = 1.0;
  Eigen::Vector2d goal = p.goal;
  env.distance_to_goal = [goal](const Eigen::VectorXd& x) {
    return (x.head<2>() - goal).norm();
  };
  return env;
}

// bump(p) = h exp(-|p - c|^2 / w^2); value at 5 widths is h e^-25
double obstacle_field(const std::vector<ObstacleBump>& obs, const Eigen::Vector2d& pos,
                      Eigen::Vector2d* grad, Eigen::Matrix2d* hess) {
  double total = 0.0;
  if (grad) grad->setZero();
  if (hess) hess->setZero();
  for (const auto& o : obs) {
    const Eigen::Vector2d d = pos - o.center;
    const double s2 = o.width * o.width;
    const double e = o.height * std::exp(-d.squaredNorm() / s2);
    total += e;
    if (grad) *grad += -2.0 * e / s2 * d;
    if (hess)
      *hess += e * (4.0 * d * d.transpose() / (s2 * s2) -
                    2.0 * Eigen::Matrix2d::Identity() / s2);
  }
  return total;
}

GroundTruthCost quadratic_goal_cost(const PointMassParams& p,
                                    std::vector<ObstacleBump> obstacles) {
  GroundTruthCost gt;
  const Eigen::Vector2d goal = p.goal;
  const double wp = p.w_pos, wv = p.w_vel, wu = p.w_u;
  gt.cost = [=](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    double c = wp * (x.head<2>() - goal).squaredNorm() + wv * x.tail<2>().squaredNorm() +
               wu * u.squaredNorm();
    if (!obstacles.empty()) c += obstacle_field(obstacles, x.head<2>(), nullptr, nullptr);
    return c;
  };
  gt.expand = [=](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    CostExpansion e;
    e.cx.resize(4);
    e.cx.head<2>() = 2.0 * wp * (x.head<2>() - goal);
    e.cx.tail<2>() = 2.0 * wv * x.tail<2>();
    e.Cxx = Eigen::MatrixXd::Zero(4, 4);
    e.Cxx.diagonal() << 2.0 * wp, 2.0 * wp, 2.0 * wv, 2.0 * wv;
    e.c = wp * (x.head<2>() - goal).squaredNorm() + wv * x.tail<2>().squaredNorm() +
          wu * u.squaredNorm();
    if (!obstacles.empty()) {
      Eigen::Vector2d g;
      Eigen::Matrix2d h;
      e.c += obstacle_field(obstacles, x.head<2>(), &g, &h);
      e.cx.head<2>() += g;
      e.Cxx.topLeftCorner(2, 2) += h;
    }
    e.cu = 2.0 * wu * u;
    e.Cuu = 2.0 * wu * Eigen::MatrixXd::Identity(2, 2);
    e.Cux = Eigen::MatrixXd::Zero(2, 4);
    return e;
  };
  return gt;
}

}  // namespace

EnvSpec make_pointmass(const PointMassParams& p) { return make_pointmass_env(p, "pointmass"); }

GroundTruthCost make_pointmass_cost(const PointMassParams& p) {
  return quadratic_goal_cost(p, {});
}

std::vector<ObstacleBump> default_nav2d_obstacles() {
  return {
      {{0.45, 0.50}, 1.5, 0.18},
      {{0.20, 0.75}, 1.5, 0.18},
      {{0.75, 0.20}, 1.5, 0.18},
  };
}

EnvSpec make_nav2d(const Nav2dParams& p) { return make_pointmass_env(p.base, "nav2d"); }

GroundTruthCost make_nav2d_cost(const Nav2dParams& p) {
  return quadratic_goal_cost(p.base,
                             p.obstacles.empty() ? default_nav2d_obstacles() : p.obstacles);
}

// ------------------------------------------------------------------ reacher

Eigen::Vector4d reacher_ee(const ReacherParams& p, const Eigen::Vector2d& theta,
                           const Eigen::Vector2d& omega) {
  const double c1 = std::cos(theta[0]), s1 = std::sin(theta[0]);
  const double c12 = std::cos(theta[0] + theta[1]), s12 = std::sin(theta[0] + theta[1]);
  Eigen::Vector4d out;
  out[0] = p.l1 * c1 + p.l2 * c12;
  out[1] = p.l1 * s1 + p.l2 * s12;
  // Jacobian times joint velocity
  out[2] = -(p.l1 * s1 + p.l2 * s12) * omega[0] - p.l2 * s12 * omega[1];
  out[3] = (p.l1 * c1 + p.l2 * c12) * omega[0] + p.l2 * c12 * omega[1];
  return out;
}

namespace {

Eigen::Vector2d reacher_accel(const ReacherParams& p, const Eigen::Vector2d& theta,
                              const Eigen::Vector2d& omega, const Eigen::Vector2d& tau) {
  const double r1 = 0.5 * p.l1, r2 = 0.5 * p.l2;
  const double i1 = p.m1 * p.l1 * p.l1 / 12.0, i2 = p.m2 * p.l2 * p.l2 / 12.0;
  const double a1 = i1 + i2 + p.m1 * r1 * r1 + p.m2 * (p.l1 * p.l1 + r2 * r2);
  const double a2 = p.m2 * p.l1 * r2;
  const double a3 = i2 + p.m2 * r2 * r2;
  const double c2 = std::cos(theta[1]), s2 = std::sin(theta[1]);

  Eigen::Matrix2d M;
  M << a1 + 2.0 * a2 * c2, a3 + a2 * c2, a3 + a2 * c2, a3;
  Eigen::Vector2d h;
  h[0] = -a2 * s2 * (2.0 * omega[0] * omega[1] + omega[1] * omega[1]);
  h[1] = a2 * s2 * omega[0] * omega[0];
  Eigen::Vector2d grav = Eigen::Vector2d::Zero();
  if (p.gravity != 0.0) {
    grav[0] = (p.m1 * r1 + p.m2 * p.l1) * p.gravity * std::cos(theta[0]) +
              p.m2 * r2 * p.gravity * std::cos(theta[0] + theta[1]);
    grav[1] = p.m2 * r2 * p.gravity * std::cos(theta[0] + theta[1]);
  }
  return M.ldlt().solve(tau - h - grav - p.damping * omega);
}

}  // namespace

EnvSpec make_reacher(const ReacherParams& p) {
  EnvSpec env;
  env.name = "reacher2link";
  env.dx = 8;
  env.du = 2;
  env.horizon = p.horizon;
  env.dt = p.dt;

  Eigen::Vector4d ee0 = reacher_ee(p, p.init_angles, Eigen::Vector2d::Zero());
  env.init_mean.resize(8);
  env.init_mean << p.init_angles, 0.0, 0.0, ee0;
  env.init_cov = Eigen::MatrixXd::Zero(8, 8);
  env.init_cov.diagonal().head<2>().setConstant(p.init_angle_std * p.init_angle_std);
  env.init_cov.diagonal().tail<6>().setConstant(1e-10);

  // Process noise enters the joint coordinates; the end-effector block is a
  // function of them and is recomputed after each transition.
  env.noise_std = Eigen::VectorXd::Zero(8);
  env.noise_std.head<4>().setConstant(p.noise_std);

  env.step_det = [p](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::Vector2d theta = x.head<2>(), omega = x.segment<2>(2);
    Eigen::Vector2d accel = reacher_accel(p, theta, omega, u.head<2>());
    // semi-implicit Euler
    Eigen::Vector2d omega_next = omega + p.dt * accel;
    Eigen::Vector2d theta_next = theta + p.dt * omega_next;
    Eigen::VectorXd next(8);
    next << theta_next, omega_next, reacher_ee(p, theta_next, omega_next);
    return next;
  };
  env.project = [p](Eigen::VectorXd& x) {
    x.tail<4>() = reacher_ee(p, x.head<2>(), x.segment<2>(2));
  };
  env.linear_dynamics = false;
  env.action_scale = 1.0;
  Eigen::Vector2d target = p.target;
  env.distance_to_goal = [target](const Eigen::VectorXd& x) {
    return (x.segment<2>(4) - target).norm();
  };
  return env;
}

GroundTruthCost make_reacher_cost(const ReacherParams& p) {
  GroundTruthCost gt;
  const Eigen::Vector2d target = p.target;
  const double w = p.w_dist, v = p.v_log, alpha = p.alpha, wu = p.w_u, wv = p.w_vel;
  gt.cost = [=](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const double s = (x.segment<2>(4) - target).squaredNorm();
    double c = w * s + v * std::log(s + alpha) + wu * u.squaredNorm();
    if (wv > 0.0) c += wv * x.segment<2>(2).squaredNorm();
    return c;
  };
  gt.expand = [=](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const Eigen::Vector2d d = x.segment<2>(4) - target;
    const double s = d.squaredNorm();
    const double gcoef = w + v / (s + alpha);

    CostExpansion e;
    e.c = w * s + v * std::log(s + alpha) + wu * u.squaredNorm();
    e.cx = Eigen::VectorXd::Zero(8);
    e.cx.segment<2>(4) = 2.0 * gcoef * d;
    e.Cxx = Eigen::MatrixXd::Zero(8, 8);
    e.Cxx.block<2, 2>(4, 4) =
        2.0 * gcoef * Eigen::Matrix2d::Identity() -
        4.0 * v / ((s + alpha) * (s + alpha)) * (d * d.transpose());
    if (wv > 0.0) {
      e.c += wv * x.segment<2>(2).squaredNorm();
      e.cx.segment<2>(2) = 2.0 * wv * x.segment<2>(2);
      e.Cxx.block<2, 2>(2, 2) = 2.0 * wv * Eigen::Matrix2d::Identity();
    }
    e.cu = 2.0 * wu * u;
    e.Cuu = 2.0 * wu * Eigen::MatrixXd::Identity(2, 2);
    e.Cux = Eigen::MatrixXd::Zero(2, 8);
    return e;
  };
  return gt;
}

// --------------------------------------------------------------- demo maker

std::vector<Trajectory> generate_demos(const EnvSpec& env, const GroundTruthCost& gt,
                                       const std::vector<Eigen::VectorXd>& initial_conditions,
                                       int n_demos, const PoloptConfig& cfg, Rng& rng,
                                       bool stochastic) {
  const int n_cond = static_cast<int>(initial_conditions.size());
  if (n_cond < 1) throw ConfigError("generate_demos: need at least one initial condition");
  if (n_demos < n_cond)
    throw ConfigError("generate_demos: n_demos must cover every initial condition");

  std::vector<Trajectory> demos;
  demos.reserve(n_demos);
  for (int c = 0; c < n_cond; ++c) {
    EnvSpec local = env;
    local.init_mean = initial_conditions[c];

    PoloptProblem prob;
    prob.sample = env_sampler(local);
    prob.expand = lqr_expander(gt);
    prob.traj_cost = [&gt](const Trajectory& t) { return traj_ground_truth_cost(gt, t); };
    prob.exact_dynamics = exact_dynamics_provider(local);
    prob.horizon = local.horizon;
    prob.dx = local.dx;
    prob.du = local.du;

    LinearGaussianController init = LinearGaussianController::zeros(
        local.horizon, local.dx, local.du, local.action_scale * local.action_scale);
    PoloptResult res;
    try {
      res = optimize_policy(prob, init, cfg, rng);
    } catch (const NumericError& err) {
      throw NumericError("generate_demos: policy optimization diverged on condition " +
                         std::to_string(c) + ": " + err.what());
    }

    int quota = n_demos / n_cond + (c < n_demos % n_cond ? 1 : 0);
    for (int i = 0; i < quota; ++i)
      demos.push_back(rollout_env(local, res.ctrl, rng, nullptr, stochastic));
  }
  return demos;
}

}  // namespace ioclab
