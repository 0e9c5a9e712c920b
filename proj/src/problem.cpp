#include "misspec/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace misspec {

void LipschitzConstants::validate() const {
  for (double v : {xx, yx, yy, x_theta, y_theta, phi_theta}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("Lipschitz constants must be finite and nonnegative");
    }
  }
}

double lagrangian(const SaddleProblem& p, const Vec& x, const Vec& y, const Vec& theta) {
  return p.f(x) + p.phi(x, y, theta) - p.h(y);
}

StepTriple step_sizes_constant(const LipschitzConstants& c, double alpha, double beta) {
  c.validate();
  if (!(alpha > 0.0) || beta < 0.0) {
    throw std::invalid_argument("step_sizes_constant: need alpha > 0 and beta >= 0");
  }
  if (c.yy > 0.0 && beta == 0.0) {
    throw std::invalid_argument("step_sizes_constant: L_yy > 0 requires beta > 0");
  }
  const double inv_tau = c.yx * c.yx / alpha + c.xx;
  if (inv_tau <= 0.0) {
    throw std::invalid_argument("step_sizes_constant: L_yx and L_xx are both zero");
  }
  double inv_sigma = alpha + beta;
  if (c.yy > 0.0) {
    inv_sigma += 2.0 * c.yy * c.yy / beta;
  }
  return {1.0 / inv_tau, 1.0 / inv_sigma, 1.0};
}

namespace {

void check_threshold_preconditions(const LipschitzConstants& c, double gamma, double c_alpha,
                                   double c_beta) {
  c.validate();
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("tau_threshold: gamma must be positive");
  }
  if (!(c_alpha > 0.0) || c_beta < 0.0 || c_alpha + c_beta > 1.0) {
    throw std::invalid_argument("tau_threshold: need c_alpha > 0, c_beta >= 0, c_alpha + c_beta <= 1");
  }
  if ((c.yy > 0.0) != (c_beta > 0.0)) {
    throw std::invalid_argument("tau_threshold: c_beta > 0 exactly when L_yy > 0");
  }
  if (c.yy > 0.0 && c_alpha + c_beta >= 1.0) {
    throw std::invalid_argument("tau_threshold: L_yy > 0 requires c_alpha + c_beta < 1");
  }
}

}  // namespace

double tau_threshold(const LipschitzConstants& c, double gamma, double c_alpha, double c_beta) {
  check_threshold_preconditions(c, gamma, c_alpha, c_beta);
  // Positive root of q tau^2 + L_xx tau - 1 = 0, written without cancellation.
  const double q = c.yx * c.yx * gamma / c_alpha;
  double psi1 = kInfinity;
  if (q > 0.0) {
    psi1 = 2.0 / (c.xx + std::sqrt(c.xx * c.xx + 4.0 * q));
  } else if (c.xx > 0.0) {
    psi1 = 1.0 / c.xx;
  }
  if (c.yy == 0.0) {
    return psi1;
  }
  const double psi2 =
      std::sqrt(c_beta * (1.0 - c_alpha - c_beta)) / (std::sqrt(2.0) * gamma * c.yy);
  return std::min(psi1, psi2);
}

ThresholdResiduals threshold_residuals(const LipschitzConstants& c, double tau, double gamma,
                                       double c_alpha, double c_beta) {
  ThresholdResiduals r;
  r.first = -1.0 + c.xx * tau + c.yx * c.yx / c_alpha * gamma * tau * tau;
  r.second = -(1.0 - c_alpha - c_beta);
  if (c.yy > 0.0) {
    r.second += 2.0 * c.yy * c.yy / c_beta * gamma * gamma * tau * tau;
  }
  return r;
}

namespace {

// L^2 / a with the convention 0 / 0 = 0 and L^2 / 0 = +inf.
double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den <= 0.0) return kInfinity;
  return num / den;
}

}  // namespace

bool validate_step_multisol(const StructuredConstants& c, const MultisolSteps& s) {
  if (!(s.tau > 0.0) || !(s.sigma > 0.0)) {
    return false;
  }
  const double lhs_tau = 1.0 / s.tau;
  const double x_term =
      ratio(c.g2_yx * c.g2_yx + 2.0 * c.g1_thetax * c.g1_thetax, s.alpha_next) + c.g1_xx + c.g2_xx;
  const double w_term = ratio(2.0 * c.ell_w * c.ell_w, s.beta_next);
  const double lhs_sigma = 1.0 / s.sigma;
  const double momentum = s.eta * (s.alpha + s.beta);
  const double y_term = momentum + ratio(c.g2_yy * c.g2_yy, s.beta_next);
  const double theta_term = momentum + ratio(2.0 * c.g1_thetatheta * c.g1_thetatheta, s.alpha_next) +
                            ratio(2.0 * c.ell_theta * c.ell_theta, s.beta_next);
  return lhs_tau >= std::max(x_term, w_term) && lhs_sigma >= std::max(y_term, theta_term);
}

namespace {

template <class Fn>
void check_block(const std::string& block, const Vec& point, const Vec& analytic, double h,
                 Fn&& value_at, GradientReport& report) {
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("check_gradients: gradient of block " + block +
                                " has wrong dimension");
  }
  Vec probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double saved = probe(i);
    probe(i) = saved + h;
    const double up = value_at(probe);
    probe(i) = saved - h;
    const double down = value_at(probe);
    probe(i) = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("check_gradients: non-finite value at perturbed point in block " +
                         block);
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(analytic(i)));
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
    if (err > kGradientTolerance) {
      report.flagged.push_back({block, i, analytic(i), numeric, err});
    }
  }
}

void check_step(double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("check_gradients: h must be positive");
  }
}

}  // namespace

GradientReport check_gradients(const SaddleProblem& p, const Vec& x, const Vec& y,
                               const Vec& theta, double h) {
  check_step(h);
  GradientReport report;
  check_block("x", x, p.grad_x(x, y, theta), h,
              [&](const Vec& v) { return p.phi(v, y, theta); }, report);
  check_block("y", y, p.grad_y(x, y, theta), h,
              [&](const Vec& v) { return p.phi(x, v, theta); }, report);
  return report;
}

GradientReport check_gradients(const LearningProblem& p, const Vec& theta, const Vec& w,
                               double h) {
  check_step(h);
  GradientReport report;
  check_block("theta", theta, p.grad_theta(theta, w), h,
              [&](const Vec& v) { return p.ell(v, w); }, report);
  check_block("w", w, p.grad_w(theta, w), h, [&](const Vec& v) { return p.ell(theta, v); },
              report);
  return report;
}

GradientReport check_gradients(const StructuredProblem& p, const Vec& x, const Vec& y,
                               const Vec& theta, double h) {
  check_step(h);
  GradientReport report;
  check_block("g1.x", x, p.g1_grad_x(x, theta), h,
              [&](const Vec& v) { return p.g1(v, theta); }, report);
  check_block("g1.theta", theta, p.g1_grad_theta(x, theta), h,
              [&](const Vec& v) { return p.g1(x, v); }, report);
  check_block("g2.x", x, p.g2_grad_x(x, y), h, [&](const Vec& v) { return p.g2(v, y); },
              report);
  check_block("g2.y", y, p.g2_grad_y(x, y), h, [&](const Vec& v) { return p.g2(x, v); },
              report);
  check_block("ell", theta, p.ell_grad(theta), h, [&](const Vec& v) { return p.ell(v); },
              report);
  return report;
}

double linearity_defect(const LearningProblem& p, const Vec& theta, const Vec& w1, const Vec& w2,
                        double a, double b) {
  require_same_dim(w1, w2, "linearity_defect");
  const Vec zero = Vec::Zero(w1.size());
  const double base = p.ell(theta, zero);
  const double lhs = p.ell(theta, a * w1 + b * w2) - base;
  const double rhs = a * (p.ell(theta, w1) - base) + b * (p.ell(theta, w2) - base);
  return std::abs(lhs - rhs);
}

}  // namespace misspec
