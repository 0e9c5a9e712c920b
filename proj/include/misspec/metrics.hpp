#pragma once

#include "misspec/apd.hpp"
#include "misspec/learning.hpp"
#include "misspec/problem.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace misspec {

struct ReferenceSolution {
  Vec theta;
  Vec x;
  Vec y;
  double w = 0.0;  // structured problems only
  double F = 0.0;
  std::string provenance;  // "analytic" or "long-run"
  bool low_confidence = false;
  double learner_residual = 0.0;
  double saddle_residual = 0.0;
};

/// Unit-step prox fixed-point residual of the theta-parameterized saddle problem:
/// ||x - prox_f(x - grad_x Phi)|| + ||y - prox_h(y + grad_y Phi)||.
double saddle_residual(const SaddleProblem& p, const Vec& x, const Vec& y, const Vec& theta);

struct ReferenceOptions {
  double tol = 1e-10;
  long learner_max_iter = 100000;
  long K_ref = 10000;
  double saddle_tol = 1e-8;
  LearnerConfig learner;
  StepPolicy policy;  // backtracking policy used with theta frozen
  /// Closed-form reference supplied by the instance; checked, then returned as is.
  std::optional<ReferenceSolution> analytic;
};

/// theta* from the learner run to tol, then the saddle of the theta*-problem by
/// the learning-aware solver with the parameter frozen. The last iterate is used;
/// the run stops early once saddle_residual drops below saddle_tol / 100.
ReferenceSolution compute_reference(const SaddleProblem& p, const LearningProblem& lp,
                                    const Vec& theta0, const Vec& w0, const Vec& x0,
                                    const Vec& y0, const ReferenceOptions& opt);

double suboptimality(const Vec& x, const ReferenceSolution& ref, const SaddleProblem& p);

double learning_residual(const Vec& theta_next, const Vec& theta);

/// L(xbar, y*; theta*) - L(x*, ybar; theta*). Throws InfeasiblePointError when
/// xbar or ybar lies outside dom f or dom h.
double gap_surrogate(const Vec& x_bar, const Vec& y_bar, const ReferenceSolution& ref,
                     const SaddleProblem& p);

/// Pessimistic Lagrangian f + g1 + g2 - w (ell(theta) - ell* - epsilon) - h.
double structured_lagrangian(const StructuredProblem& p, const Vec& x, double w, const Vec& y,
                             const Vec& theta, double ell_star);

/// L(xbar, wbar, y*, theta*) - L(x*, w*, ybar, thetabar).
double gap_surrogate_structured(const Vec& x_bar, double w_bar, const Vec& y_bar,
                                const Vec& theta_bar, const ReferenceSolution& ref,
                                const StructuredProblem& p, double ell_star);

/// Least-squares slope of log(value) against log(k) for k in [k_lo, k_hi].
double rate_fit(const std::vector<std::pair<double, double>>& series, double k_lo, double k_hi);

struct TraceRow {
  long k = 0;
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 0.0;
  int backtracks = 0;
  double subopt = 0.0;
  double infeas = 0.0;
  double learn_residual = 0.0;
  double gap = 0.0;
};

inline constexpr const char* kTraceColumns =
    "k,tau,sigma,eta,backtracks,subopt,infeas,learn_residual,gap";

struct Trace {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<TraceRow> rows;

  /// Throws std::logic_error unless k is strictly increasing and every entry is finite.
  void check() const;
};

/// %.17g, the shortest format that round-trips every double.
std::string format_double(double v);

void write_trace_csv(std::ostream& out, const Trace& trace);
void write_trace_csv(const std::string& path, const Trace& trace);
Trace read_trace_csv(const std::string& path);

}  // namespace misspec
