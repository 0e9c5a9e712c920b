#include "misspec/apd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace misspec {

StepPolicy StepPolicy::constant(const StepTriple& s) {
  StepPolicy p;
  p.mode = StepMode::Constant;
  p.tau = s.tau;
  p.sigma = s.sigma;
  p.eta = s.eta;
  return p;
}

StepPolicy StepPolicy::backtracking(double c_alpha, double c_beta, double shrink, double tau_bar,
                                    double gamma0) {
  StepPolicy p;
  p.mode = StepMode::Backtracking;
  p.c_alpha = c_alpha;
  p.c_beta = c_beta;
  p.shrink = shrink;
  p.tau_bar = tau_bar;
  p.gamma0 = gamma0;
  return p;
}

void StepPolicy::validate(const LipschitzConstants& c) const {
  if (mode == StepMode::Constant) {
    if (!(tau > 0.0) || !(sigma > 0.0)) {
      throw std::invalid_argument("constant policy: tau and sigma must be positive");
    }
    return;
  }
  if (!(c_alpha > 0.0) || c_beta < 0.0 || c_alpha + c_beta > 1.0) {
    throw std::invalid_argument("backtracking policy: need c_alpha > 0, c_beta >= 0, c_alpha + c_beta <= 1");
  }
  if ((c.yy > 0.0) != (c_beta > 0.0)) {
    throw std::invalid_argument("backtracking policy: c_beta > 0 exactly when L_yy > 0");
  }
  if (!(shrink > 0.0 && shrink < 1.0)) {
    throw std::invalid_argument("backtracking policy: shrink must lie in (0, 1)");
  }
  if (!(tau_bar > 0.0) || !(gamma0 > 0.0)) {
    throw std::invalid_argument("backtracking policy: tau_bar and gamma0 must be positive");
  }
  if (backtrack_cap < 0 || !(growth >= 1.0)) {
    throw std::invalid_argument("backtracking policy: bad backtrack cap or growth factor");
  }
}

void ErgodicAverage::add(const Vec& z, double t) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("ErgodicAverage: weight must be positive");
  }
  if (count_ == 0) {
    sum_ = t * z;
  } else {
    require_same_dim(sum_, z, "ErgodicAverage");
    sum_ += t * z;
  }
  weight_ += t;
  ++count_;
}

Vec ErgodicAverage::mean() const {
  if (count_ == 0) {
    throw std::logic_error("ErgodicAverage: no samples");
  }
  return sum_ / weight_;
}

TestValue eval_E(const SaddleProblem& p, const Vec& x1, const Vec& y1, const Vec& theta1,
                 const Vec& x0, const Vec& y0, const Vec& theta0, const StepState& s) {
  const Vec dx = x1 - x0;
  const double t_curv = (p.grad_x(x1, y1, theta1) - p.grad_x(x0, y1, theta1)).dot(dx);

  const double gy_var = (p.grad_y(x1, y1, theta1) - p.grad_y(x0, y1, theta1)).squaredNorm();
  double t_alpha = 0.0;
  if (gy_var > 0.0) {
    if (!(s.alpha_next > 0.0)) {
      throw std::invalid_argument("eval_E: alpha_{k+1} must be positive");
    }
    t_alpha = gy_var / (2.0 * s.alpha_next);
  }

  const Vec gy_base = p.grad_y(x0, y0, theta0);
  const double gy_self = (p.grad_y(x0, y1, theta0) - gy_base).squaredNorm();
  double t_beta = 0.0;
  if (s.beta_next > 0.0) {
    t_beta = gy_self / s.beta_next;
  } else if (gy_self > 1e-12 * (1.0 + gy_base.squaredNorm())) {
    throw std::invalid_argument(
        "eval_E: grad_y Phi varies with y but c_beta = 0 (L_yy misdeclared)");
  }

  const double t_y = -(1.0 / s.sigma - s.eta * (s.alpha + s.beta)) * bregman_dist(y1, y0);
  const double t_x = -bregman_dist(x1, x0) / s.tau;

  TestValue v;
  v.value = t_curv + t_alpha + t_y + t_beta + t_x;
  v.scale = std::max({std::abs(t_curv), t_alpha, std::abs(t_y), t_beta, std::abs(t_x)});
  return v;
}

SolverState make_solver_state(const SaddleProblem& p, const Vec& x0, const Vec& y0,
                              const Vec& theta0) {
  if (x0.size() != p.dim_x || y0.size() != p.dim_y || theta0.size() != p.dim_theta) {
    throw std::invalid_argument("make_solver_state: initial point has wrong dimension");
  }
  SolverState st;
  st.x = x0;
  st.y = y0;
  st.x_prev = x0;
  st.y_prev = y0;
  st.grad_y_prev = p.grad_y(x0, y0, theta0);
  return st;
}

StepState make_step_state(const StepPolicy& policy) {
  StepState s;
  if (policy.mode == StepMode::Constant) {
    s.tau = policy.tau;
    s.sigma = policy.sigma;
    s.eta = policy.eta;
    s.sigma_prev = policy.sigma;
    return s;
  }
  s.tau = policy.tau_bar;
  s.gamma = policy.gamma0;
  s.sigma_prev = policy.gamma0 * policy.tau_bar;
  s.alpha = policy.c_alpha / s.sigma_prev;
  s.beta = policy.c_beta / s.sigma_prev;
  return s;
}

IterationReport naive_step(SolverState& st, StepState& steps, const SaddleProblem& p,
                           Learner& learner) {
  const Vec& theta = learner.theta();
  const double eta = steps.eta;
  const Vec s = (1.0 + eta) * p.grad_y(st.x, st.y, theta) - eta * p.grad_y(st.x_prev, st.y_prev, theta);
  Vec y_next = prox_step(p.h, -s, st.y, steps.sigma);
  Vec x_next = prox_step(p.f, p.grad_x(st.x, y_next, theta), st.x, steps.tau);

  IterationReport r;
  r.learner_backtracks = learner.advance();

  st.x_prev = std::move(st.x);
  st.y_prev = std::move(st.y);
  st.x = std::move(x_next);
  st.y = std::move(y_next);
  st.grad_y_prev = p.grad_y(st.x_prev, st.y_prev, learner.theta_prev());
  steps.t = 1.0;
  st.x_avg.add(st.x, steps.t);
  st.y_avg.add(st.y, steps.t);

  r.k = st.k;
  r.tau = steps.tau;
  r.sigma = steps.sigma;
  r.eta = eta;
  r.t = steps.t;
  ++st.k;
  return r;
}

IterationReport aware_step(SolverState& st, StepState& steps, const SaddleProblem& p,
                           Learner& learner, const StepPolicy& policy) {
  IterationReport r;
  r.learner_backtracks = learner.advance();
  const Vec& theta_next = learner.theta();
  const Vec& theta = learner.theta_prev();

  const Vec gy_now = p.grad_y(st.x, st.y, theta);
  StepState trial = steps;
  trial.alpha = policy.c_alpha / steps.sigma_prev;
  trial.beta = policy.c_beta / steps.sigma_prev;
  double tau = steps.tau;
  for (int backtracks = 0;; ++backtracks) {
    if (backtracks > policy.backtrack_cap) {
      throw NumericError("aware_step: backtrack cap of " + std::to_string(policy.backtrack_cap) +
                         " exceeded at k = " + std::to_string(st.k));
    }
    trial.tau = tau;
    trial.sigma = steps.gamma * tau;
    trial.eta = steps.sigma_prev / trial.sigma;
    trial.alpha_next = policy.c_alpha / trial.sigma;
    trial.beta_next = policy.c_beta / trial.sigma;

    const Vec s = (1.0 + trial.eta) * gy_now - trial.eta * st.grad_y_prev;
    Vec y_next = prox_step(p.h, -s, st.y, trial.sigma);
    Vec x_next = prox_step(p.f, p.grad_x(st.x, y_next, theta_next), st.x, tau);

    const TestValue test = eval_E(p, x_next, y_next, theta_next, st.x, st.y, theta, trial);
    if (!std::isfinite(test.value)) {
      throw NumericError("aware_step: non-finite backtracking test at k = " + std::to_string(st.k));
    }
    if (accepted(test)) {
      if (st.k == 0) {
        trial.sigma0 = trial.sigma;
      }
      trial.t = trial.sigma / trial.sigma0;

      st.x_prev = std::move(st.x);
      st.y_prev = std::move(st.y);
      st.x = std::move(x_next);
      st.y = std::move(y_next);
      st.grad_y_prev = gy_now;
      st.x_avg.add(st.x, trial.t);
      st.y_avg.add(st.y, trial.t);

      r.k = st.k;
      r.tau = trial.tau;
      r.sigma = trial.sigma;
      r.eta = trial.eta;
      r.backtracks = backtracks;
      r.test_value = test.value;
      r.test_scale = test.scale;
      r.t = trial.t;

      // gamma stays fixed, so tau_{k+1} = tau_k (times the optional growth factor).
      trial.sigma_prev = trial.sigma;
      trial.alpha = trial.alpha_next;
      trial.beta = trial.beta_next;
      trial.tau = tau * policy.growth;
      steps = trial;
      ++st.k;
      return r;
    }
    tau *= policy.shrink;
  }
}

SolveResult solve(const SaddleProblem& p, Learner& learner, const StepPolicy& policy, long K,
                  const Vec& x0, const Vec& y0, const SolveObserver& observer) {
  if (K < 1) {
    throw std::invalid_argument("solve: K must be at least 1");
  }
  policy.validate(p.constants);
  SolveResult res;
  res.state = make_solver_state(p, x0, y0, learner.theta());
  res.steps = make_step_state(policy);
  res.reports.reserve(static_cast<std::size_t>(K));
  try {
    for (long k = 0; k < K; ++k) {
      IterationReport r = policy.mode == StepMode::Constant
                              ? naive_step(res.state, res.steps, p, learner)
                              : aware_step(res.state, res.steps, p, learner, policy);
      res.reports.push_back(r);
      if (observer) observer(r, res.state, learner);
    }
  } catch (...) {
    res.error = std::current_exception();
  }
  if (res.state.x_avg.count() > 0) {
    res.x_bar = res.state.x_avg.mean();
    res.y_bar = res.state.y_avg.mean();
  }
  return res;
}

}  // namespace misspec
