#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ioclab/rng.hpp"
#include "ioclab/trajmath.hpp"

namespace ioclab {

/// Nonlinear cost c(x, u) = ||A y(x) + b||^2 + w_u ||u||^2, where y(x) is an
/// MLP with max(z, 0) nonlinearities between layers and an affine final
/// feature map. Nonnegative everywhere by construction. The torque weight is
/// fixed, not a learnable parameter.
struct CostNetwork {
  std::vector<Eigen::MatrixXd> weights;  // last entry is the affine feature map
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd head_A;  // k x F
  Eigen::VectorXd head_b;  // k
  double torque_weight = 1e-2;
  std::vector<int> input_selector;  // state components fed to the network

  int input_dim() const { return static_cast<int>(input_selector.size()); }
  int feature_dim() const {
    return weights.empty() ? 0 : static_cast<int>(weights.back().rows());
  }
  long param_count() const;
};

/// Gradient with the same shape as the learnable parameters of a CostNetwork
/// (layer weights/biases and the quadratic head; not w_u).
struct CostGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd head_A;
  Eigen::VectorXd head_b;

  static CostGradient zeros_like(const CostNetwork& net);
  void add_scaled(const CostGradient& other, double s);
  void scale(double s);
};

// Flat parameter vector views, used by the optimizer and by finite-difference
// checks. Ordering: weights/biases layer by layer, then head_A, head_b.
Eigen::VectorXd flatten_params(const CostNetwork& net);
void unflatten_params(const Eigen::VectorXd& v, CostNetwork& net);
Eigen::VectorXd flatten_gradient(const CostGradient& g);

/// Activations recorded during a forward pass, consumed by backprop.
struct FeatureTrace {
  std::vector<Eigen::VectorXd> acts;  // acts[0] = selected input
  std::vector<Eigen::VectorXd> pre;   // pre-activations per layer
  Eigen::VectorXd y;                  // features
  Eigen::VectorXd r;                  // A y + b
};

FeatureTrace feature_forward(const CostNetwork& net, const Eigen::VectorXd& x);

/// State-dependent part ||A y(x) + b||^2.
double state_cost(const CostNetwork& net, const Eigen::VectorXd& x);
double cost_forward(const CostNetwork& net, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u);
double cost_traj(const CostNetwork& net, const Trajectory& traj);

/// Accumulate weight * d state_cost(x) / d theta into grad.
void accumulate_state_cost_gradient(const CostNetwork& net, const FeatureTrace& trace,
                                    double weight, CostGradient& grad);

/// scale * d cost_traj(traj) / d theta.
CostGradient cost_param_gradient(const CostNetwork& net, const Trajectory& traj,
                                 double scale);

/// Quadratic expansion of the cost at one point. Gradients are exact; state
/// Hessian is the Gauss-Newton form 2 J^T A^T A J (symmetric PSD), action
/// Hessian is exact, cross term is zero.
struct CostExpansion {
  double c = 0.0;
  Eigen::VectorXd cx, cu;
  Eigen::MatrixXd Cxx, Cuu, Cux;
};

CostExpansion cost_quad_expansion(const CostNetwork& net, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u);

// ---- regularizers, defined on the per-step state costs c_t = ||A y_t + b||^2

/// Squared second time-difference over interior steps. Pure function of a
/// cost sequence; invariant to adding a constant.
double lcr_from_costs(const Eigen::VectorXd& costs);
/// Squared hinge sum_t max(0, c_t - c_{t-1} - margin)^2.
double mono_from_costs(const Eigen::VectorXd& costs, double margin);

double reg_lcr(const CostNetwork& net, const Trajectory& traj);
double reg_mono(const CostNetwork& net, const Trajectory& traj, double margin = 1.0);
void add_reg_lcr_gradient(const CostNetwork& net, const Trajectory& traj, double weight,
                          CostGradient& grad);
void add_reg_mono_gradient(const CostNetwork& net, const Trajectory& traj, double margin,
                           double weight, CostGradient& grad);

/// Identity-function initialization: the first layer stacks [I; -I] so the
/// rectified units encode the input losslessly, every subsequent layer is the
/// identity. Requires hidden widths all equal to 2*d_in and F == 2*d_in.
/// The quadratic head is left at zero.
CostNetwork init_identity(int d_in, const std::vector<int>& hidden_widths, int feature_dim);

/// Network factory used by experiment configs.
struct CostNetConfig {
  std::vector<int> hidden = {};     // empty -> {2*d_in, 2*d_in}
  int feature_dim = 0;              // 0 -> 2*d_in
  int head_rows = 0;                // 0 -> square (F x F)
  double torque_weight = 1e-2;
  std::vector<int> input_selector;  // empty -> all state components
  double head_init_scale = 0.1;
  bool identity_init = true;
};

/// Builds a network for a d_x-dimensional state. Uses the exact identity
/// construction when the widths allow it, otherwise embeds the identity
/// blocks and fills the remaining entries with small random values.
CostNetwork make_cost_network(int d_x, const CostNetConfig& cfg, Rng& rng);

// ---- checkpoint io (versioned text format, see README) ----
void save_cost_checkpoint(const std::string& path, const CostNetwork& net);
CostNetwork load_cost_checkpoint(const std::string& path);

}  // namespace ioclab
