#pragma once

#include "misspec/learning.hpp"
#include "misspec/problem.hpp"

#include <exception>
#include <functional>
#include <vector>

namespace misspec {

enum class StepMode { Constant, Backtracking };

struct StepPolicy {
  StepMode mode = StepMode::Backtracking;

  // Constant mode.
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 1.0;

  // Backtracking mode.
  double c_alpha = 1.0;
  double c_beta = 0.0;
  double shrink = 0.5;
  double tau_bar = 1.0;
  double gamma0 = 1.0;
  int backtrack_cap = 60;
  /// Multiplier applied to tau after each accepted iteration. 1 keeps the
  /// step schedule non-increasing; values > 1 allow re-expansion.
  double growth = 1.0;

  static StepPolicy constant(const StepTriple& s);
  static StepPolicy backtracking(double c_alpha, double c_beta, double shrink, double tau_bar,
                                 double gamma0);

  /// Throws std::invalid_argument if the policy is unusable for constants `c`.
  void validate(const LipschitzConstants& c) const;
};

struct StepState {
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 1.0;
  double gamma = 0.0;
  double alpha = 0.0;       // alpha_k
  double beta = 0.0;        // beta_k
  double alpha_next = 0.0;  // alpha_{k+1}
  double beta_next = 0.0;   // beta_{k+1}
  double sigma_prev = 0.0;  // sigma_{k-1}
  double sigma0 = 0.0;      // first accepted sigma, fixes t_k = sigma_k / sigma_0
  double t = 0.0;           // t_k of the last accepted iteration
};

/// Running weighted average z_bar = (sum t_k z_{k+1}) / (sum t_k).
class ErgodicAverage {
 public:
  void add(const Vec& z, double t);
  Vec mean() const;
  double weight_sum() const { return weight_; }
  long count() const { return count_; }

 private:
  Vec sum_;
  double weight_ = 0.0;
  long count_ = 0;
};

struct SolverState {
  Vec x;
  Vec y;
  Vec x_prev;
  Vec y_prev;
  Vec grad_y_prev;  // grad_y Phi(x_{k-1}, y_{k-1}; theta_{k-1})
  long k = 0;
  ErgodicAverage x_avg;
  ErgodicAverage y_avg;
};

struct TestValue {
  double value = 0.0;
  double scale = 0.0;  // largest magnitude among the individual terms
};

inline constexpr double kOuterTestTol = 1e-10;

inline bool accepted(const TestValue& v) { return v.value <= kOuterTestTol * (1.0 + v.scale); }

/// Backtracking test of the learning-aware solver at candidate (x1, y1, theta1)
/// against the prior (x0, y0, theta0). The beta term is dropped when
/// beta_next == 0; a nonzero y-gradient variation then throws std::invalid_argument.
TestValue eval_E(const SaddleProblem& p, const Vec& x1, const Vec& y1, const Vec& theta1,
                 const Vec& x0, const Vec& y0, const Vec& theta0, const StepState& s);

struct IterationReport {
  long k = 0;
  double tau = 0.0;
  double sigma = 0.0;
  double eta = 0.0;
  int backtracks = 0;
  double test_value = 0.0;
  double test_scale = 0.0;
  int learner_backtracks = 0;
  double t = 0.0;
};

SolverState make_solver_state(const SaddleProblem& p, const Vec& x0, const Vec& y0,
                              const Vec& theta0);
StepState make_step_state(const StepPolicy& policy);

/// One iteration of the naive solver: both momentum gradients at theta_k,
/// x-update at theta_k, then one learner step. Averaging weight t_k = 1.
IterationReport naive_step(SolverState& st, StepState& steps, const SaddleProblem& p,
                           Learner& learner);

/// One iteration of the learning-aware solver: one learner step, then
/// backtracking on tau until the test accepts. Averaging weight sigma_k / sigma_0.
IterationReport aware_step(SolverState& st, StepState& steps, const SaddleProblem& p,
                           Learner& learner, const StepPolicy& policy);

using SolveObserver =
    std::function<void(const IterationReport&, const SolverState&, const Learner&)>;

struct SolveResult {
  Vec x_bar;
  Vec y_bar;
  SolverState state;
  StepState steps;
  std::vector<IterationReport> reports;
  std::exception_ptr error;  // set when a step failed; reports hold the partial run

  bool ok() const { return !error; }
};

/// Runs K iterations of the stepper selected by policy.mode.
SolveResult solve(const SaddleProblem& p, Learner& learner, const StepPolicy& policy, long K,
                  const Vec& x0, const Vec& y0, const SolveObserver& observer = {});

}  // namespace misspec
