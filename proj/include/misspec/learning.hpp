#pragma once

#include "misspec/problem.hpp"

#include <functional>
#include <optional>

namespace misspec {

/// Inputs of the one-step learner: initial primal step, initial
/// accumulation factor, backtracking shrink factor in (0, 1), and the
/// backtrack cap beyond which the problem is considered malformed.
struct LearnerConfig {
  double tau_bar = 1.0;
  double gamma0 = 1.0;
  double shrink = 0.5;
  int backtrack_cap = 60;

  void validate() const;
};

/// Persistent state of the accelerated primal-dual learner. One call to
/// learner_step advances it by exactly one accepted iteration.
struct LearnerState {
  Vec theta;
  Vec w;
  Vec theta_prev;
  Vec w_prev;
  double tau = 0.0;         // current primal step tau'_k
  double gamma = 0.0;       // accumulation factor gamma'_k
  double sigma_prev = 0.0;  // sigma'_{k-1}
  long k = 0;
  int backtracks_last = 0;
  double last_test = 0.0;   // acceptance-test value of the last accepted iteration
  double last_scale = 0.0;  // magnitude of its largest term
};

LearnerState make_learner_state(const LearningProblem& lp, Vec theta0, Vec w0,
                                const LearnerConfig& cfg);

inline constexpr double kLearnerTestTol = 1e-12;

/// Advance by one accepted iteration. The inner loop shrinks tau' by `shrink`
/// until the local smoothness test passes, then applies
///   gamma'_{k+1} = gamma'_k (1 + mu' tau'_k),  tau'_{k+1} = tau'_k sqrt(gamma'_k / gamma'_{k+1}).
/// Throws NumericError once `backtrack_cap` retries are exhausted.
LearnerState learner_step(const LearnerState& state, const LearningProblem& lp, double shrink,
                          int backtrack_cap = 60);

struct LearnerRun {
  Vec theta;
  LearnerState state;
  long iterations = 0;
  bool converged = false;
  double last_residual = 0.0;
};

/// Iterate until ||theta_{k+1} - theta_k|| / max(1, ||theta_k||) <= tol or max_iter steps.
LearnerRun learner_run_until(LearnerState state, const LearningProblem& lp, double shrink,
                             double tol, long max_iter, int backtrack_cap = 60);

/// Parameter source for the outer solvers: either a live learner that
/// advances once per outer iteration, or a parameter frozen at a fixed value.
class Learner {
 public:
  Learner(LearningProblem problem, const LearnerConfig& cfg, Vec theta0, Vec w0);
  static Learner frozen(Vec theta);

  const Vec& theta() const { return state_.theta; }
  const Vec& theta_prev() const { return state_.theta_prev; }
  const LearnerState& state() const { return state_; }
  bool is_frozen() const { return !problem_.has_value(); }

  /// Returns the number of backtracks used (0 when frozen).
  int advance();

 private:
  Learner() = default;

  std::optional<LearningProblem> problem_;
  LearnerConfig cfg_;
  LearnerState state_;
};

/// Auxiliary accelerated projected-gradient learner for min_{theta in Theta} ell(theta).
struct APGDState {
  Vec current;   // theta~_k
  Vec previous;  // theta~_{k-1}
  long k = 0;
  double step = 0.0;  // gamma_theta <= 1 / L
};

APGDState make_apgd_state(Vec theta0, double step);

struct APGDResult {
  APGDState state;
  Vec extrapolated;  // zeta_k
  double value = 0.0;  // ell(theta~_{k+1})
};

/// zeta_k = theta~_k + ((k - 2) / (k + 1)) (theta~_k - theta~_{k-1});
/// theta~_{k+1} = P(zeta_k - gamma grad ell(zeta_k)).
APGDResult apgd_step(const APGDState& state, const std::function<double(const Vec&)>& ell,
                     const std::function<Vec(const Vec&)>& grad,
                     const std::function<Vec(const Vec&)>& projector);

}  // namespace misspec
