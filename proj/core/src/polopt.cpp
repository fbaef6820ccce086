#include "ioclab/polopt.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace ioclab {

// ---------------------------------------------------------------- fit_gmm

namespace {

// k-means++ style seeding: first center uniform, then proportional to the
// squared distance to the nearest chosen center.
std::vector<int> seed_centers(const std::vector<Eigen::VectorXd>& pts, int K, Rng& rng) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> centers;
  centers.push_back(rng.index(n));
  Eigen::VectorXd d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (pts[i] - pts[centers[0]]).squaredNorm();
  while (static_cast<int>(centers.size()) < K) {
    double total = d2.sum();
    int pick;
    if (total <= 0.0) {
      pick = rng.index(n);
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (pts[i] - pts[pick]).squaredNorm());
  }
  return centers;
}

}  // namespace

GmmPrior fit_gmm(const std::vector<Eigen::VectorXd>& tuples, int K, double prior_strength,
                 Rng& rng) {
  const int n = static_cast<int>(tuples.size());
  if (K < 1) throw NumericError("fit_gmm: K must be >= 1");
  if (K > n)
    throw NumericError("fit_gmm: K = " + std::to_string(K) + " exceeds #tuples = " +
                       std::to_string(n));
  const int d = static_cast<int>(tuples[0].size());

  GmmPrior gmm;
  gmm.niw_strength = prior_strength;
  gmm.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
  gmm.means.resize(K);
  gmm.covs.resize(K);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& v : tuples) mean += v;
  mean /= n;
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (const auto& v : tuples) scatter += (v - mean) * (v - mean).transpose();
  Eigen::MatrixXd global_cov = floor_cov(scatter / n);

  std::vector<int> seeds = seed_centers(tuples, K, rng);
  for (int c = 0; c < K; ++c) {
    gmm.means[c] = tuples[seeds[c]];
    gmm.covs[c] = global_cov;
  }

  Eigen::MatrixXd resp(n, K);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    // E step, with one Cholesky per component
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
    std::vector<double> lognorm(K);
    llts.reserve(K);
    for (int c = 0; c < K; ++c) {
      llts.emplace_back(gmm.covs[c]);
      if (llts.back().info() != Eigen::Success)
        throw NumericError("fit_gmm: component covariance not PD");
      double log_det = 0.0;
      for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(llts.back().matrixL()(i, i));
      lognorm[c] = std::log(gmm.weights[c]) -
                   0.5 * (d * std::log(2.0 * M_PI) + log_det);
    }
    double ll = 0.0;
    Eigen::VectorXd point_ll(n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd lp(K);
      for (int c = 0; c < K; ++c) {
        Eigen::VectorXd z = llts[c].matrixL().solve(tuples[i] - gmm.means[c]);
        lp[c] = lognorm[c] - 0.5 * z.squaredNorm();
      }
      double lse = logsumexp(lp);
      resp.row(i) = (lp.array() - lse).exp().transpose();
      point_ll[i] = lse;
      ll += lse;
    }
    ll /= n;
    gmm.final_loglik = ll;
    gmm.em_iterations = iter + 1;
    gmm.loglik_trace.push_back(ll);
    if (std::abs(ll - prev_ll) < 1e-6) break;
    prev_ll = ll;

    // M step
    for (int c = 0; c < K; ++c) {
      double nc = resp.col(c).sum();
      if (nc < 1e-9) {
        // dead component: restart it on the worst-explained point
        int worst;
        point_ll.minCoeff(&worst);
        gmm.means[c] = tuples[worst];
        gmm.covs[c] = global_cov;
        gmm.weights[c] = 1.0 / n;
        continue;
      }
      gmm.weights[c] = nc / n;
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < n; ++i) mu += resp(i, c) * tuples[i];
      mu /= nc;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd r = tuples[i] - mu;
        cov += resp(i, c) * (r * r.transpose());
      }
      gmm.means[c] = mu;
      gmm.covs[c] = floor_cov(cov / nc);
    }
    gmm.weights /= gmm.weights.sum();
  }
  return gmm;
}

double gmm_log_likelihood(const GmmPrior& gmm, const std::vector<Eigen::VectorXd>& tuples) {
  double total = 0.0;
  for (const auto& v : tuples) {
    Eigen::VectorXd lp(gmm.components());
    for (int c = 0; c < gmm.components(); ++c)
      lp[c] = std::log(gmm.weights[c]) + gaussian_log_pdf(v, gmm.means[c], gmm.covs[c]);
    total += logsumexp(lp);
  }
  return total / static_cast<double>(tuples.size());
}

// ---------------------------------------------------------- fit_dynamics

namespace {

// Moment-matched Gaussian of the mixture reweighted by the responsibilities
// of the given points; the NIW prior for one timestep's regression.
void gmm_posterior_moments(const GmmPrior& gmm, const std::vector<Eigen::VectorXd>& pts,
                           Eigen::VectorXd& mu0, Eigen::MatrixXd& phi0) {
  const int K = gmm.components();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(K);
  for (const auto& v : pts) {
    Eigen::VectorXd lp(K);
    for (int c = 0; c < K; ++c)
      lp[c] = std::log(gmm.weights[c]) + gaussian_log_pdf(v, gmm.means[c], gmm.covs[c]);
    double lse = logsumexp(lp);
    w += (lp.array() - lse).exp().matrix();
  }
  w /= w.sum();
  const int d = static_cast<int>(gmm.means[0].size());
  mu0 = Eigen::VectorXd::Zero(d);
  for (int c = 0; c < K; ++c) mu0 += w[c] * gmm.means[c];
  phi0 = Eigen::MatrixXd::Zero(d, d);
  for (int c = 0; c < K; ++c)
    phi0 += w[c] * (gmm.covs[c] + (gmm.means[c] - mu0) * (gmm.means[c] - mu0).transpose());
}

}  // namespace

LinearGaussianDynamics fit_dynamics(const std::vector<Trajectory>& samples,
                                    const GmmPrior* prior, double ridge) {
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw NumericError("fit_dynamics: need at least 2 sample trajectories");
  const int T = samples[0].horizon();
  const int dx = samples[0].state_dim();
  const int du = samples[0].action_dim();
  const int dz = dx + du;

  LinearGaussianDynamics dyn;
  dyn.F.resize(T - 1);
  dyn.f.resize(T - 1);
  dyn.N.resize(T - 1);

  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd Z(n, dz), Y(n, dx);
    std::vector<Eigen::VectorXd> tuples(n);
    for (int i = 0; i < n; ++i) {
      Z.row(i) << samples[i].states[t].transpose(), samples[i].actions[t].transpose();
      Y.row(i) = samples[i].states[t + 1].transpose();
      if (prior) {
        Eigen::VectorXd v(dz + dx);
        v << Z.row(i).transpose(), Y.row(i).transpose();
        tuples[i] = v;
      }
    }
    Eigen::RowVectorXd zbar = Z.colwise().mean();
    Eigen::RowVectorXd ybar = Y.colwise().mean();

    if (prior) {
      Eigen::VectorXd mu0;
      Eigen::MatrixXd phi0;
      gmm_posterior_moments(*prior, tuples, mu0, phi0);
      const double m = prior->niw_strength;

      Eigen::VectorXd mhat(dz + dx);
      mhat << zbar.transpose(), ybar.transpose();
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dz + dx, dz + dx);
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd v(dz + dx);
        v << Z.row(i).transpose(), Y.row(i).transpose();
        S += (v - mhat) * (v - mhat).transpose();
      }
      Eigen::VectorXd dm = mhat - mu0;
      Eigen::MatrixXd post =
          (m * phi0 + S + (n * m / (n + m)) * (dm * dm.transpose())) / (n + m);
      post = floor_cov(post);

      Eigen::MatrixXd Saa = floor_cov(post.topLeftCorner(dz, dz));
      Eigen::MatrixXd Sba = post.bottomLeftCorner(dx, dz);
      dyn.F[t] = Saa.ldlt().solve(Sba.transpose()).transpose();
      dyn.N[t] = floor_cov(post.bottomRightCorner(dx, dx) -
                           dyn.F[t] * post.topRightCorner(dz, dx));
    } else {
      Eigen::MatrixXd Zc = Z.rowwise() - zbar;
      Eigen::MatrixXd Yc = Y.rowwise() - ybar;
      Eigen::MatrixXd G = Zc.transpose() * Zc;
      G.diagonal().array() += ridge;
      dyn.F[t] = G.ldlt().solve(Zc.transpose() * Yc).transpose();
      Eigen::MatrixXd R = Yc - Zc * dyn.F[t].transpose();
      dyn.N[t] = floor_cov(R.transpose() * R / n);
    }
    // The affine term absorbs the empirical means regardless of the prior, so
    // in-sample residuals are centered.
    dyn.f[t] = ybar.transpose() - dyn.F[t] * zbar.transpose();
  }

  Eigen::MatrixXd X1(n, dx);
  for (int i = 0; i < n; ++i) X1.row(i) = samples[i].states[0].transpose();
  dyn.init_mean = X1.colwise().mean().transpose();
  Eigen::MatrixXd C = X1.rowwise() - X1.colwise().mean();
  dyn.init_cov = floor_cov(C.transpose() * C / n);
  return dyn;
}

double dynamics_mse(const LinearGaussianDynamics& dyn,
                    const std::vector<Trajectory>& samples) {
  double total = 0.0;
  long count = 0;
  for (const auto& traj : samples) {
    for (int t = 0; t + 1 < traj.horizon(); ++t) {
      Eigen::VectorXd z(traj.state_dim() + traj.action_dim());
      z << traj.states[t], traj.actions[t];
      total += (traj.states[t + 1] - (dyn.F[t] * z + dyn.f[t])).squaredNorm();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ------------------------------------------------- MaxEnt LQR backward pass

namespace {

// Quadratic cost in absolute (x, u) coordinates:
// c(x, u) ~= 0.5 [x;u]' H [x;u] + g' [x;u] + c0.
struct QuadCost {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double c0 = 0.0;
};

QuadCost to_absolute(const CostExpansion& e, const Eigen::VectorXd& x_nom,
                     const Eigen::VectorXd& u_nom) {
  const int dx = static_cast<int>(x_nom.size());
  const int du = static_cast<int>(u_nom.size());
  QuadCost q;
  q.H.resize(dx + du, dx + du);
  q.H.topLeftCorner(dx, dx) = symmetrize(e.Cxx);
  q.H.bottomRightCorner(du, du) = symmetrize(e.Cuu);
  q.H.bottomLeftCorner(du, dx) = e.Cux;
  q.H.topRightCorner(dx, du) = e.Cux.transpose();

  Eigen::VectorXd nom(dx + du);
  nom << x_nom, u_nom;
  Eigen::VectorXd grad(dx + du);
  grad << e.cx, e.cu;
  q.g = grad - q.H * nom;
  q.c0 = e.c - grad.dot(nom) + 0.5 * nom.dot(q.H * nom);
  return q;
}

// Quadratic form of -log prev(u | x), dropping the normalizer.
QuadCost neg_log_ctrl_quad(const LinearGaussianController& prev, int t) {
  const int dx = prev.state_dim();
  const int du = prev.action_dim();
  Eigen::LLT<Eigen::MatrixXd> llt(prev.sigma[t]);
  if (llt.info() != Eigen::Success)
    throw NumericError("kl_constrained_update: singular previous covariance at timestep " +
                       std::to_string(t));
  Eigen::MatrixXd P = llt.solve(Eigen::MatrixXd::Identity(du, du));
  const Eigen::MatrixXd& K = prev.K[t];
  const Eigen::VectorXd& k = prev.k[t];

  QuadCost q;
  q.H.resize(dx + du, dx + du);
  q.H.topLeftCorner(dx, dx) = K.transpose() * P * K;
  q.H.topRightCorner(dx, du) = -K.transpose() * P;
  q.H.bottomLeftCorner(du, dx) = -P * K;
  q.H.bottomRightCorner(du, du) = P;
  q.g.resize(dx + du);
  q.g.head(dx) = K.transpose() * P * k;
  q.g.tail(du) = -P * k;
  q.c0 = 0.5 * k.dot(P * k);
  return q;
}

LinearGaussianController backward_on_quads(const LinearGaussianDynamics& dyn,
                                           const std::vector<QuadCost>& quads) {
  const int T = static_cast<int>(quads.size());
  const int dx = dyn.state_dim();
  const int du = static_cast<int>(quads[0].H.rows()) - dx;

  LinearGaussianController ctrl;
  ctrl.K.resize(T);
  ctrl.k.resize(T);
  ctrl.sigma.resize(T);

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(dx, dx);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dx);
  for (int t = T - 1; t >= 0; --t) {
    Eigen::MatrixXd Q = quads[t].H;
    Eigen::VectorXd q = quads[t].g;
    if (t + 1 < T) {
      const Eigen::MatrixXd& F = dyn.F[t];
      Q += F.transpose() * V * F;
      q += F.transpose() * (v + V * dyn.f[t]);
    }
    Eigen::MatrixXd Quu = symmetrize(Q.bottomRightCorner(du, du));
    const Eigen::MatrixXd Qux = Q.bottomLeftCorner(du, dx);
    const Eigen::MatrixXd Qxx = Q.topLeftCorner(dx, dx);
    const Eigen::VectorXd qu = q.tail(du);
    const Eigen::VectorXd qx = q.head(dx);

    if (!all_finite(Quu))
      throw NumericError("maxent_lqr_backward: non-finite Q_uu at timestep " +
                         std::to_string(t));
    Eigen::LLT<Eigen::MatrixXd> llt(Quu);
    double mu = 1e-8;
    while (llt.info() != Eigen::Success) {
      if (mu > 1e12)
        throw NumericError("maxent_lqr_backward: Q_uu not PD after regularization at timestep " +
                           std::to_string(t));
      Eigen::MatrixXd reg = Quu;
      reg.diagonal().array() += mu;
      llt.compute(reg);
      if (llt.info() == Eigen::Success) Quu = reg;
      mu *= 10.0;
    }

    ctrl.K[t] = -llt.solve(Qux);
    ctrl.k[t] = -llt.solve(qu);
    ctrl.sigma[t] = symmetrize(llt.solve(Eigen::MatrixXd::Identity(du, du)));

    V = symmetrize(Qxx - Qux.transpose() * llt.solve(Qux));
    v = qx - Qux.transpose() * llt.solve(qu);
  }
  return ctrl;
}

std::vector<QuadCost> absolute_quads(std::span<const CostExpansion> expansions,
                                     std::span<const Eigen::VectorXd> x_nom,
                                     std::span<const Eigen::VectorXd> u_nom) {
  std::vector<QuadCost> quads(expansions.size());
  for (size_t t = 0; t < expansions.size(); ++t)
    quads[t] = to_absolute(expansions[t], x_nom[t], u_nom[t]);
  return quads;
}

}  // namespace

LinearGaussianController maxent_lqr_backward(const LinearGaussianDynamics& dyn,
                                             std::span<const CostExpansion> expansions,
                                             std::span<const Eigen::VectorXd> x_nom,
                                             std::span<const Eigen::VectorXd> u_nom) {
  if (static_cast<int>(expansions.size()) != dyn.horizon())
    throw NumericError("maxent_lqr_backward: expansion count != horizon");
  return backward_on_quads(dyn, absolute_quads(expansions, x_nom, u_nom));
}

double expected_quad_cost(const GaussianTrajDist& dist,
                          std::span<const CostExpansion> expansions,
                          std::span<const Eigen::VectorXd> x_nom,
                          std::span<const Eigen::VectorXd> u_nom) {
  const std::vector<QuadCost> quads = absolute_quads(expansions, x_nom, u_nom);
  const std::vector<StepMarginal> marg = forward_marginals(dist);
  double total = 0.0;
  for (size_t t = 0; t < quads.size(); ++t) {
    const Eigen::VectorXd& m = marg[t].mean;
    total += 0.5 * ((quads[t].H * marg[t].cov).trace() + m.dot(quads[t].H * m)) +
             quads[t].g.dot(m) + quads[t].c0;
  }
  return total;
}

KlUpdateResult kl_constrained_update(const LinearGaussianController& prev,
                                     const LinearGaussianDynamics& dyn,
                                     std::span<const CostExpansion> expansions,
                                     std::span<const Eigen::VectorXd> x_nom,
                                     std::span<const Eigen::VectorXd> u_nom,
                                     const KlUpdateOptions& opt) {
  if (opt.epsilon <= 0.0) throw NumericError("kl_constrained_update: epsilon must be > 0");
  const int T = prev.horizon();
  const int du = prev.action_dim();

  const std::vector<QuadCost> cost_quads = absolute_quads(expansions, x_nom, u_nom);
  std::vector<QuadCost> prev_quads(T);
  for (int t = 0; t < T; ++t) prev_quads[t] = neg_log_ctrl_quad(prev, t);

  // The no-maxent variant collapses the action covariance after the backward
  // pass; the step constraint is still measured on the soft controller so the
  // dual search keeps a valid bracket on the first iteration.
  auto collapse = [&](LinearGaussianController c) {
    if (!opt.maxent)
      for (int t = 0; t < T; ++t)
        c.sigma[t] = opt.fixed_action_var * Eigen::MatrixXd::Identity(du, du);
    return c;
  };

  auto solve_at = [&](double eta) {
    std::vector<QuadCost> blend(T);
    const double denom = 1.0 + eta;
    for (int t = 0; t < T; ++t) {
      blend[t].H = (cost_quads[t].H + eta * prev_quads[t].H) / denom;
      blend[t].g = (cost_quads[t].g + eta * prev_quads[t].g) / denom;
    }
    return backward_on_quads(dyn, blend);
  };
  auto kl_of = [&](const LinearGaussianController& c) {
    return kl_traj(GaussianTrajDist{dyn, c}, prev);
  };

  KlUpdateResult res;
  LinearGaussianController soft = solve_at(0.0);
  double kl = kl_of(soft);
  if (kl <= 1.1 * opt.epsilon) {
    res.ctrl = collapse(soft);
    res.eta = 0.0;
    res.achieved_kl = kl;
    return res;
  }

  // Bracket: KL(eta) decreases monotonically toward 0.
  double lo = 0.0, hi = 1e-2;
  double kl_hi = kl_of(solve_at(hi));
  int expansions_used = 0;
  while (kl_hi > opt.epsilon) {
    lo = hi;
    hi *= 10.0;
    if (++expansions_used > 50)
      throw NumericError("kl_constrained_update: failed to bracket the dual variable");
    kl_hi = kl_of(solve_at(hi));
  }

  double eta = hi;
  LinearGaussianController cand = solve_at(eta);
  kl = kl_of(cand);
  for (int it = 0; it < 200 && (kl < 0.9 * opt.epsilon || kl > 1.1 * opt.epsilon); ++it) {
    eta = 0.5 * (lo + hi);
    cand = solve_at(eta);
    kl = kl_of(cand);
    if (kl > opt.epsilon) lo = eta;
    else hi = eta;
  }
  if (kl < 0.9 * opt.epsilon || kl > 1.1 * opt.epsilon)
    throw NumericError("kl_constrained_update: dual bisection did not converge");

  res.ctrl = collapse(cand);
  res.eta = eta;
  res.achieved_kl = kl;
  return res;
}

double adapt_step(const StepState& state) {
  double eps = state.epsilon;
  if (state.actual_improvement < 0.0)
    eps *= 0.5;
  else if (state.actual_improvement >= 0.5 * state.predicted_improvement)
    eps *= 2.0;
  return std::clamp(eps, 1e-4, 1e2);
}

// --------------------------------------------------------------- driver

PoloptResult optimize_policy(const PoloptProblem& prob, LinearGaussianController init,
                             const PoloptConfig& cfg, Rng& rng) {
  PoloptResult out;
  LinearGaussianController ctrl = std::move(init);
  double eps = cfg.epsilon_init;

  std::vector<Eigen::VectorXd> gmm_pool;
  double prev_sample_cost = 0.0;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  LinearGaussianController prev_ctrl = ctrl;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<Trajectory> samples = prob.sample(ctrl, cfg.samples_per_iter, rng);
    double sample_cost = 0.0;
    for (const auto& s : samples) sample_cost += prob.traj_cost(s);
    sample_cost /= static_cast<double>(samples.size());

    if (iter > 0 && std::isfinite(predicted)) {
      StepState st{eps, prev_ctrl, predicted, prev_sample_cost - sample_cost};
      eps = adapt_step(st);
    }

    LinearGaussianDynamics dyn;
    double mse = 0.0;
    if (cfg.exact_dynamics && prob.exact_dynamics) {
      // nominal points for linearization: the empirical mean trajectory
      std::vector<Eigen::VectorXd> xm(prob.horizon, Eigen::VectorXd::Zero(prob.dx));
      std::vector<Eigen::VectorXd> um(prob.horizon, Eigen::VectorXd::Zero(prob.du));
      for (const auto& s : samples)
        for (int t = 0; t < prob.horizon; ++t) {
          xm[t] += s.states[t] / static_cast<double>(samples.size());
          um[t] += s.actions[t] / static_cast<double>(samples.size());
        }
      dyn = prob.exact_dynamics(xm, um);
    } else {
      const GmmPrior* prior_ptr = nullptr;
      GmmPrior gmm;
      for (const auto& s : samples)
        for (int t = 0; t + 1 < s.horizon(); ++t) {
          Eigen::VectorXd v(2 * prob.dx + prob.du);
          v << s.states[t], s.actions[t], s.states[t + 1];
          gmm_pool.push_back(std::move(v));
        }
      if (cfg.use_gmm_prior) {
        int K = std::min<int>(static_cast<int>(gmm_pool.size()) / 40, cfg.gmm_max_clusters);
        if (K >= 1) {
          gmm = fit_gmm(gmm_pool, K, cfg.gmm_prior_strength, rng);
          prior_ptr = &gmm;
        }
      }
      dyn = fit_dynamics(samples, prior_ptr, cfg.dyn_ridge);
      mse = dynamics_mse(dyn, samples);
    }

    // Nominal points: mean trajectory of the current controller under the
    // fitted dynamics.
    GaussianTrajDist cur{dyn, ctrl};
    std::vector<StepMarginal> marg = forward_marginals(cur);
    std::vector<Eigen::VectorXd> x_nom(prob.horizon), u_nom(prob.horizon);
    for (int t = 0; t < prob.horizon; ++t) {
      x_nom[t] = marg[t].mean.head(prob.dx);
      u_nom[t] = marg[t].mean.tail(prob.du);
    }
    std::vector<CostExpansion> exps(prob.horizon);
    for (int t = 0; t < prob.horizon; ++t) exps[t] = prob.expand(x_nom[t], u_nom[t]);

    KlUpdateResult upd = kl_constrained_update(ctrl, dyn, exps, x_nom, u_nom,
                                               {eps, cfg.maxent, cfg.fixed_action_var});

    double j_prev = expected_quad_cost(cur, exps, x_nom, u_nom);
    double j_new = expected_quad_cost(GaussianTrajDist{dyn, upd.ctrl}, exps, x_nom, u_nom);
    predicted = j_prev - j_new;

    out.diag.push_back({iter, j_new, upd.achieved_kl, upd.eta, eps, mse});
    prev_ctrl = ctrl;
    ctrl = upd.ctrl;
    out.iterates.push_back(ctrl);
    prev_sample_cost = sample_cost;
    out.last_samples = std::move(samples);

    if (iter > 0 && std::abs(predicted) < cfg.convergence_tol) break;
  }
  out.ctrl = std::move(ctrl);
  return out;
}

void write_polopt_diag_csv(std::ostream& os, std::span<const PoloptDiagRow> rows) {
  os << "iter,expected_cost,kl_step,eta,epsilon,dynamics_mse\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << format_double(r.expected_cost) << ',' << format_double(r.kl_step)
       << ',' << format_double(r.eta) << ',' << format_double(r.epsilon) << ','
       << format_double(r.dynamics_mse) << '\n';
  }
}

}  // namespace ioclab
