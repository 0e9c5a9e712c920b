#pragma once

#include "misspec/apd.hpp"
#include "misspec/learning.hpp"
#include "misspec/problem.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace misspec {

struct DualBound {
  double B = 1.0;
  std::string source;  // "analytic" or "sampled"
};

/// B = 1 + sup_x [g1(x, theta_s) - inf_theta g1(x, theta)] / epsilon.
/// Uses problem.dual_bound_numerator when registered. Otherwise `samples`
/// (points of dom f, for instance simplex vertices plus random draws) are
/// scored with inf_theta approximated over `theta_samples`, and the sampled
/// maximum is inflated by a factor of 2.
DualBound dual_bound_B(const StructuredProblem& p, const Vec& theta_slater,
                       const std::vector<Vec>& samples = {},
                       const std::vector<Vec>& theta_samples = {});

struct MultiState {
  Vec x, y, theta;
  double w = 0.0;
  Vec x_prev, y_prev, theta_prev;
  double w_prev = 0.0;
  Vec grad_y_prev;      // grad_y g2(x_{k-1}, y_{k-1})
  Vec grad_theta_prev;  // grad_theta g1(x_{k-1}, theta_{k-1}) - w_{k-1} grad ell(theta_{k-1})
  APGDState aux;
  double ell_est = 0.0;   // ell_k
  double aux_residual = 0.0;  // ||theta~_{k+1} - theta~_k|| / max(1, ||theta~_k||)
  double B = 1.0;
  long k = 0;
  StepState steps;
  ErgodicAverage x_avg, w_avg, y_avg, theta_avg;
};

struct MultiCandidate {
  Vec x, y, theta;
  double w = 0.0;
};

/// Backtracking test for the structured solver, term by term as in its definition:
/// two x-curvature inner products, y-gradient terms with 1/(2 alpha) and 1/beta,
/// theta-gradient terms of g1 with 1/alpha, w-weighted grad-ell terms with 1/beta,
/// minus (1/sigma - eta (alpha + beta)) (D_Y + D_Theta) and (1/tau) (D_X + D_W).
TestValue eval_Ebar(const StructuredProblem& p, const MultiCandidate& next,
                    const MultiCandidate& prior, const StepState& s);

MultiState make_multi_state(const StructuredProblem& p, const Vec& x0, double w0, const Vec& y0,
                            const Vec& theta0, double B, const StepPolicy& policy);

IterationReport multisol_step(MultiState& st, const StructuredProblem& p,
                              const StepPolicy& policy);

using MultiObserver = std::function<void(const IterationReport&, const MultiState&)>;

struct MultiResult {
  Vec x_bar, y_bar, theta_bar;
  double w_bar = 0.0;
  MultiState state;
  std::vector<IterationReport> reports;
  std::exception_ptr error;

  bool ok() const { return !error; }
};

MultiResult multisol_solve(const StructuredProblem& p, const StepPolicy& policy, long K,
                           const Vec& x0, double w0, const Vec& y0, const Vec& theta0, double B,
                           const MultiObserver& observer = {});

/// epsilon = 1 / sqrt(K), the default relaxation for a K-iteration run.
inline double default_epsilon(long K) { return 1.0 / std::sqrt(static_cast<double>(K)); }

}  // namespace misspec
