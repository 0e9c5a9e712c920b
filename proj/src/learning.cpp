#include "misspec/learning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace misspec {

void LearnerConfig::validate() const {
  if (!(tau_bar > 0.0) || !(gamma0 > 0.0)) {
    throw std::invalid_argument("learner: tau_bar and gamma0 must be positive");
  }
  if (!(shrink > 0.0 && shrink < 1.0)) {
    throw std::invalid_argument("learner: shrink factor must lie in (0, 1)");
  }
  if (backtrack_cap < 0) {
    throw std::invalid_argument("learner: negative backtrack cap");
  }
}

LearnerState make_learner_state(const LearningProblem& lp, Vec theta0, Vec w0,
                                const LearnerConfig& cfg) {
  cfg.validate();
  if (theta0.size() != lp.dim_theta || w0.size() != lp.dim_w) {
    throw std::invalid_argument("learner: initial point has wrong dimension");
  }
  if (!(lp.modulus > 0.0)) {
    throw std::invalid_argument("learner: strong convexity modulus must be positive");
  }
  LearnerState s;
  s.theta = std::move(theta0);
  s.w = std::move(w0);
  s.theta_prev = s.theta;
  s.w_prev = s.w;
  s.tau = cfg.tau_bar;
  s.gamma = cfg.gamma0;
  s.sigma_prev = cfg.gamma0 * cfg.tau_bar;
  return s;
}

LearnerState learner_step(const LearnerState& state, const LearningProblem& lp, double shrink,
                          int backtrack_cap) {
  if (!(shrink > 0.0 && shrink < 1.0)) {
    throw std::invalid_argument("learner_step: shrink factor must lie in (0, 1)");
  }
  const bool has_w = lp.dim_w > 0;
  const Vec grad_w_now = has_w ? lp.grad_w(state.theta, state.w) : Vec();
  const Vec grad_w_prev = has_w ? lp.grad_w(state.theta_prev, state.w_prev) : Vec();

  double tau = state.tau;
  for (int backtracks = 0;; ++backtracks) {
    if (backtracks > backtrack_cap) {
      throw NumericError("learner_step: backtrack cap of " + std::to_string(backtrack_cap) +
                         " exceeded");
    }
    const double sigma = state.gamma * tau;
    const double eta = state.sigma_prev / sigma;

    Vec w_next = state.w;
    if (has_w) {
      const Vec s = (1.0 + eta) * grad_w_now - eta * grad_w_prev;
      w_next = prox_step(lp.h, -s, state.w, sigma);
    }
    const Vec theta_next = prox_step(lp.f, lp.grad_theta(state.theta, w_next), state.theta, tau);

    const Vec dtheta = theta_next - state.theta;
    const double curvature =
        (lp.grad_theta(theta_next, w_next) - lp.grad_theta(state.theta, w_next)).dot(dtheta);
    const double proximity = dtheta.squaredNorm() / tau;
    double coupling = 0.0;
    if (has_w) {
      coupling = 0.5 * sigma *
                 (lp.grad_w(theta_next, w_next) - lp.grad_w(state.theta, w_next)).squaredNorm();
    }
    const double test = curvature - proximity + coupling;
    const double scale = std::max({std::abs(curvature), proximity, coupling});
    if (!std::isfinite(test)) {
      throw NumericError("learner_step: non-finite acceptance test");
    }
    if (test <= kLearnerTestTol * (1.0 + scale)) {
      LearnerState next;
      next.theta_prev = state.theta;
      next.w_prev = state.w;
      next.theta = theta_next;
      next.w = std::move(w_next);
      next.gamma = state.gamma * (1.0 + lp.modulus * tau);
      next.tau = tau * std::sqrt(state.gamma / next.gamma);
      next.sigma_prev = sigma;
      next.k = state.k + 1;
      next.backtracks_last = backtracks;
      next.last_test = test;
      next.last_scale = scale;
      return next;
    }
    tau *= shrink;
  }
}

LearnerRun learner_run_until(LearnerState state, const LearningProblem& lp, double shrink,
                             double tol, long max_iter, int backtrack_cap) {
  if (!(tol > 0.0)) {
    throw std::invalid_argument("learner_run_until: tol must be positive");
  }
  LearnerRun run;
  for (long it = 0; it < max_iter; ++it) {
    LearnerState next = learner_step(state, lp, shrink, backtrack_cap);
    const double residual =
        (next.theta - state.theta).norm() / std::max(1.0, state.theta.norm());
    state = std::move(next);
    run.iterations = it + 1;
    run.last_residual = residual;
    if (residual <= tol) {
      run.converged = true;
      break;
    }
  }
  run.theta = state.theta;
  run.state = std::move(state);
  return run;
}

Learner::Learner(LearningProblem problem, const LearnerConfig& cfg, Vec theta0, Vec w0)
    : problem_(std::move(problem)), cfg_(cfg) {
  state_ = make_learner_state(*problem_, std::move(theta0), std::move(w0), cfg_);
}

Learner Learner::frozen(Vec theta) {
  Learner l;
  l.state_.theta = theta;
  l.state_.theta_prev = std::move(theta);
  return l;
}

int Learner::advance() {
  if (!problem_) {
    state_.theta_prev = state_.theta;
    ++state_.k;
    return 0;
  }
  state_ = learner_step(state_, *problem_, cfg_.shrink, cfg_.backtrack_cap);
  return state_.backtracks_last;
}

APGDState make_apgd_state(Vec theta0, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("apgd: step must be positive");
  }
  APGDState s;
  s.previous = theta0;
  s.current = std::move(theta0);
  s.step = step;
  return s;
}

APGDResult apgd_step(const APGDState& state, const std::function<double(const Vec&)>& ell,
                     const std::function<Vec(const Vec&)>& grad,
                     const std::function<Vec(const Vec&)>& projector) {
  const double k = static_cast<double>(state.k);
  const double momentum = (k - 2.0) / (k + 1.0);
  APGDResult r;
  r.extrapolated = state.current + momentum * (state.current - state.previous);
  Vec next = projector(r.extrapolated - state.step * grad(r.extrapolated));
  if (next.size() != state.current.size() || !next.allFinite()) {
    throw NumericError("apgd_step: projector returned an invalid point");
  }
  r.value = ell(next);
  r.state.previous = state.current;
  r.state.current = std::move(next);
  r.state.k = state.k + 1;
  r.state.step = state.step;
  return r;
}

}  // namespace misspec
