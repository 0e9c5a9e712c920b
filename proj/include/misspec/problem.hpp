#pragma once

#include "misspec/bregman.hpp"
#include "misspec/linalg.hpp"

#include <functional>
#include <string>
#include <vector>

namespace misspec {

/// Lipschitz moduli of the coupling function Phi(x, y; theta).
///
/// xx, x_theta bound the variation of grad_x Phi; yx, yy, y_theta bound the
/// variation of grad_y Phi; phi_theta is the value-Lipschitz constant of
/// Phi in theta. Only the Naive solver and the step-size validators read
/// these; the backtracking solvers discover local constants on their own.
struct LipschitzConstants {
  double xx = 0.0;
  double yx = 0.0;
  double yy = 0.0;
  double x_theta = 0.0;
  double y_theta = 0.0;
  double phi_theta = 0.0;

  /// Throws std::invalid_argument on negative or non-finite entries.
  void validate() const;
};

using SaddleValue = std::function<double(const Vec& x, const Vec& y, const Vec& theta)>;
using SaddleGradient = std::function<Vec(const Vec& x, const Vec& y, const Vec& theta)>;

/// min_x max_y f(x) + Phi(x, y; theta) - h(y), with theta supplied by a learner.
struct SaddleProblem {
  std::string name;
  Index dim_x = 0;
  Index dim_y = 0;
  Index dim_theta = 0;

  SaddleValue phi;
  SaddleGradient grad_x;
  SaddleGradient grad_y;
  ProxOperator f;
  ProxOperator h;
  LipschitzConstants constants;

  /// Primal objective F(x; theta) used for suboptimality; optional.
  std::function<double(const Vec& x, const Vec& theta)> primal_objective;
  /// Constraint violation of x used for infeasibility; optional.
  std::function<double(const Vec& x)> infeasibility;
  /// Exact sup over dom f x dom h of L(xbar, y; theta) - L(x, ybar; theta); optional.
  std::function<double(const Vec& xbar, const Vec& ybar, const Vec& theta)> sup_gap;
};

/// L(x, y; theta) = f(x) + Phi(x, y; theta) - h(y).
double lagrangian(const SaddleProblem& p, const Vec& x, const Vec& y, const Vec& theta);

/// min_theta max_w f'(theta) + ell(theta, w) - h'(w), ell linear in w and
/// strongly convex in theta with modulus `modulus`. dim_w may be zero.
struct LearningProblem {
  std::string name;
  Index dim_theta = 0;
  Index dim_w = 0;

  std::function<double(const Vec& theta, const Vec& w)> ell;
  std::function<Vec(const Vec& theta, const Vec& w)> grad_theta;
  std::function<Vec(const Vec& theta, const Vec& w)> grad_w;
  ProxOperator f;
  ProxOperator h;
  double modulus = 0.0;
};

/// Block Lipschitz constants for the structured coupling g1(x, theta) + g2(x, y).
struct StructuredConstants {
  double g1_xx = 0.0;
  double g1_xtheta = 0.0;
  double g2_xx = 0.0;
  double g2_xy = 0.0;
  double g2_yx = 0.0;
  double g2_yy = 0.0;
  double g1_thetax = 0.0;
  double g1_thetatheta = 0.0;
  double ell_theta = 0.0;
  double ell_w = 0.0;
};

/// Pessimistic reformulation with multiple learning solutions:
///   min_{x, w in [0, B]} max_{y, theta in Theta}
///     f(x) + g1(x, theta) + g2(x, y) - w (ell(theta) - ell* - epsilon) - h(y).
struct StructuredProblem {
  std::string name;
  Index dim_x = 0;
  Index dim_y = 0;
  Index dim_theta = 0;

  std::function<double(const Vec& x, const Vec& theta)> g1;
  std::function<Vec(const Vec& x, const Vec& theta)> g1_grad_x;
  std::function<Vec(const Vec& x, const Vec& theta)> g1_grad_theta;
  std::function<double(const Vec& x, const Vec& y)> g2;
  std::function<Vec(const Vec& x, const Vec& y)> g2_grad_x;
  std::function<Vec(const Vec& x, const Vec& y)> g2_grad_y;

  std::function<double(const Vec& theta)> ell;
  std::function<Vec(const Vec& theta)> ell_grad;
  /// Lipschitz modulus of grad ell; the auxiliary learner uses step <= 1 / this.
  double ell_grad_lipschitz = 0.0;

  std::function<Vec(const Vec& theta)> project_theta;
  ProxOperator f;
  ProxOperator h;

  double epsilon = 0.0;
  StructuredConstants constants;

  /// Closed-form value of sup_x [g1(x, theta_s) - inf_theta g1(x, theta)]; optional.
  std::function<double(const Vec& theta_slater)> dual_bound_numerator;

  std::function<double(const Vec& x)> infeasibility;
};

struct StepTriple {
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 1.0;
};

/// Constant steps with eta = 1:
///   tau = (L_yx^2 / alpha + L_xx)^-1,  sigma = (alpha + beta + 2 L_yy^2 / beta)^-1.
StepTriple step_sizes_constant(const LipschitzConstants& c, double alpha, double beta);

/// Largest tau for which the backtracking test is guaranteed to pass,
/// min{Psi1, Psi2} (Psi2 only when L_yy > 0).
double tau_threshold(const LipschitzConstants& c, double gamma, double c_alpha, double c_beta);

/// Residuals of the two sufficient step conditions rewritten in tau:
///   first  = -1 + L_xx tau + (L_yx^2 / c_alpha) gamma tau^2            (must be <= 0)
///   second = 2 L_yy^2 gamma^2 tau^2 / c_beta - (1 - c_alpha - c_beta)   (must be <= 0)
struct ThresholdResiduals {
  double first = 0.0;
  double second = 0.0;
};
ThresholdResiduals threshold_residuals(const LipschitzConstants& c, double tau, double gamma,
                                       double c_alpha, double c_beta);

struct MultisolSteps {
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 1.0;
  double alpha = 0.0;
  double alpha_next = 0.0;
  double beta = 0.0;
  double beta_next = 0.0;
};

/// True iff both max-form sufficient step conditions of the structured solver hold.
bool validate_step_multisol(const StructuredConstants& c, const MultisolSteps& s);

struct GradientCheckEntry {
  std::string block;
  Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientReport {
  double max_rel_error = 0.0;
  std::vector<GradientCheckEntry> flagged;
  Index checked = 0;

  bool passed() const { return flagged.empty(); }
};

inline constexpr double kGradientTolerance = 1e-6;

/// Central-difference checks of the analytic gradients at one point.
/// Relative error is |g - fd| / max(1, |g|); coordinates above kGradientTolerance are flagged.
GradientReport check_gradients(const SaddleProblem& p, const Vec& x, const Vec& y,
                               const Vec& theta, double h);
GradientReport check_gradients(const LearningProblem& p, const Vec& theta, const Vec& w,
                               double h);
GradientReport check_gradients(const StructuredProblem& p, const Vec& x, const Vec& y,
                               const Vec& theta, double h);

/// |[ell(t, a w1 + b w2) - ell(t, 0)] - a [ell(t, w1) - ell(t, 0)] - b [ell(t, w2) - ell(t, 0)]|.
double linearity_defect(const LearningProblem& p, const Vec& theta, const Vec& w1, const Vec& w2,
                        double a, double b);

}  // namespace misspec
