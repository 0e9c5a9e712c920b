#include "misspec/multisol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace misspec {

DualBound dual_bound_B(const StructuredProblem& p, const Vec& theta_slater,
                       const std::vector<Vec>& samples, const std::vector<Vec>& theta_samples) {
  if (!(p.epsilon > 0.0)) {
    throw std::invalid_argument("dual_bound_B: epsilon must be positive");
  }
  if (p.dual_bound_numerator) {
    const double num = p.dual_bound_numerator(theta_slater);
    if (!std::isfinite(num) || num < 0.0) {
      throw NumericError("dual_bound_B: analytic numerator is not a finite nonnegative number");
    }
    return {1.0 + num / p.epsilon, "analytic"};
  }
  if (samples.empty() || theta_samples.empty()) {
    throw std::invalid_argument("dual_bound_B: no analytic bound and no samples supplied");
  }
  double sup = 0.0;
  for (const Vec& x : samples) {
    double inf_g1 = kInfinity;
    for (const Vec& th : theta_samples) inf_g1 = std::min(inf_g1, p.g1(x, th));
    sup = std::max(sup, p.g1(x, theta_slater) - inf_g1);
  }
  if (!std::isfinite(sup)) {
    throw NumericError("dual_bound_B: sampled numerator diverged");
  }
  return {1.0 + 2.0 * sup / p.epsilon, "sampled"};
}

namespace {

double weighted(double num, double den, const char* what) {
  if (num == 0.0) return 0.0;
  if (!(den > 0.0)) {
    throw std::invalid_argument(std::string("eval_Ebar: zero ") + what +
                                " with a nonzero numerator");
  }
  return num / den;
}

}  // namespace

TestValue eval_Ebar(const StructuredProblem& p, const MultiCandidate& n, const MultiCandidate& o,
                    const StepState& s) {
  const Vec dx = n.x - o.x;
  const double c1 = (p.g1_grad_x(n.x, n.theta) - p.g1_grad_x(o.x, n.theta)).dot(dx);
  const double c2 = (p.g2_grad_x(n.x, n.y) - p.g2_grad_x(o.x, n.y)).dot(dx);

  const double y1 = weighted((p.g2_grad_y(n.x, n.y) - p.g2_grad_y(o.x, n.y)).squaredNorm(),
                             2.0 * s.alpha_next, "alpha");
  const double y2 = weighted((p.g2_grad_y(o.x, n.y) - p.g2_grad_y(o.x, o.y)).squaredNorm(),
                             s.beta_next, "beta");

  const double th1 =
      weighted((p.g1_grad_theta(n.x, n.theta) - p.g1_grad_theta(o.x, n.theta)).squaredNorm(),
               s.alpha_next, "alpha");
  const double th2 =
      weighted((p.g1_grad_theta(o.x, n.theta) - p.g1_grad_theta(o.x, o.theta)).squaredNorm(),
               s.alpha_next, "alpha");

  const Vec gl_new = p.ell_grad(n.theta);
  const Vec gl_old = p.ell_grad(o.theta);
  const double w1 = weighted((-n.w * gl_new + o.w * gl_new).squaredNorm(), s.beta_next, "beta");
  const double w2 = weighted((-o.w * gl_new + o.w * gl_old).squaredNorm(), s.beta_next, "beta");

  const double dual_prox = -(1.0 / s.sigma - s.eta * (s.alpha + s.beta)) *
                           (bregman_dist(n.y, o.y) + bregman_dist(n.theta, o.theta));
  const double dw = n.w - o.w;
  const double primal_prox = -(bregman_dist(n.x, o.x) + 0.5 * dw * dw) / s.tau;

  TestValue v;
  v.value = c1 + c2 + y1 + y2 + th1 + th2 + w1 + w2 + dual_prox + primal_prox;
  v.scale = std::max({std::abs(c1), std::abs(c2), y1, y2, th1, th2, w1, w2, std::abs(dual_prox),
                      std::abs(primal_prox)});
  return v;
}

namespace {

Vec theta_ascent_direction(const StructuredProblem& p, const Vec& x, const Vec& theta, double w) {
  return p.g1_grad_theta(x, theta) - w * p.ell_grad(theta);
}

}  // namespace

MultiState make_multi_state(const StructuredProblem& p, const Vec& x0, double w0, const Vec& y0,
                            const Vec& theta0, double B, const StepPolicy& policy) {
  if (x0.size() != p.dim_x || y0.size() != p.dim_y || theta0.size() != p.dim_theta) {
    throw std::invalid_argument("make_multi_state: initial point has wrong dimension");
  }
  if (!(B >= 1.0) || w0 < 0.0 || w0 > B) {
    throw std::invalid_argument("make_multi_state: need B >= 1 and w0 in [0, B]");
  }
  if (!(p.epsilon > 0.0)) {
    throw std::invalid_argument("make_multi_state: epsilon must be positive");
  }
  if (policy.mode != StepMode::Backtracking) {
    throw std::invalid_argument("make_multi_state: the structured solver needs a backtracking policy");
  }
  if (!(policy.c_alpha > 0.0) || !(policy.c_beta > 0.0) || policy.c_alpha + policy.c_beta > 1.0 ||
      !(policy.shrink > 0.0 && policy.shrink < 1.0) || !(policy.tau_bar > 0.0) ||
      !(policy.gamma0 > 0.0)) {
    throw std::invalid_argument("make_multi_state: invalid backtracking policy");
  }
  if (!(p.ell_grad_lipschitz > 0.0)) {
    throw std::invalid_argument("make_multi_state: ell_grad_lipschitz must be positive");
  }
  MultiState st;
  st.x = x0;
  st.y = y0;
  st.theta = theta0;
  st.w = w0;
  st.x_prev = x0;
  st.y_prev = y0;
  st.theta_prev = theta0;
  st.w_prev = w0;
  st.grad_y_prev = p.g2_grad_y(x0, y0);
  st.grad_theta_prev = theta_ascent_direction(p, x0, theta0, w0);
  st.aux = make_apgd_state(theta0, 1.0 / p.ell_grad_lipschitz);
  st.ell_est = p.ell(theta0);
  st.B = B;
  st.steps = make_step_state(policy);
  return st;
}

IterationReport multisol_step(MultiState& st, const StructuredProblem& p,
                              const StepPolicy& policy) {
  // The auxiliary learner advances once per outer iteration; retries reuse its output.
  const APGDResult aux = apgd_step(st.aux, p.ell, p.ell_grad, p.project_theta);
  const double ell_next = aux.value;

  const Vec gy_now = p.g2_grad_y(st.x, st.y);
  const Vec gth_now = theta_ascent_direction(p, st.x, st.theta, st.w);
  const MultiCandidate prior{st.x, st.y, st.theta, st.w};

  StepState trial = st.steps;
  trial.alpha = policy.c_alpha / st.steps.sigma_prev;
  trial.beta = policy.c_beta / st.steps.sigma_prev;
  double tau = st.steps.tau;
  for (int backtracks = 0;; ++backtracks) {
    if (backtracks > policy.backtrack_cap) {
      throw NumericError("multisol_step: backtrack cap of " +
                         std::to_string(policy.backtrack_cap) + " exceeded at k = " +
                         std::to_string(st.k));
    }
    trial.tau = tau;
    trial.sigma = st.steps.gamma * tau;
    trial.eta = st.steps.sigma_prev / trial.sigma;
    trial.alpha_next = policy.c_alpha / trial.sigma;
    trial.beta_next = policy.c_beta / trial.sigma;

    const Vec sy = (1.0 + trial.eta) * gy_now - trial.eta * st.grad_y_prev;
    const Vec sth = (1.0 + trial.eta) * gth_now - trial.eta * st.grad_theta_prev;

    MultiCandidate next;
    next.y = prox_step(p.h, -sy, st.y, trial.sigma);
    next.theta = p.project_theta(st.theta + trial.sigma * sth);
    next.x = prox_step(p.f, p.g1_grad_x(st.x, next.theta) + p.g2_grad_x(st.x, next.y), st.x, tau);
    next.w = project_box(st.w + tau * (p.ell(next.theta) - ell_next - p.epsilon), 0.0, st.B);

    const TestValue test = eval_Ebar(p, next, prior, trial);
    if (!std::isfinite(test.value)) {
      throw NumericError("multisol_step: non-finite backtracking test at k = " +
                         std::to_string(st.k));
    }
    if (accepted(test)) {
      if (st.k == 0) trial.sigma0 = trial.sigma;
      trial.t = trial.sigma / trial.sigma0;

      IterationReport r;
      r.k = st.k;
      r.tau = trial.tau;
      r.sigma = trial.sigma;
      r.eta = trial.eta;
      r.backtracks = backtracks;
      r.test_value = test.value;
      r.test_scale = test.scale;
      r.t = trial.t;

      st.x_prev = std::move(st.x);
      st.y_prev = std::move(st.y);
      st.theta_prev = std::move(st.theta);
      st.w_prev = st.w;
      st.x = std::move(next.x);
      st.y = std::move(next.y);
      st.theta = std::move(next.theta);
      st.w = next.w;
      st.grad_y_prev = gy_now;
      st.grad_theta_prev = gth_now;

      st.aux_residual = (aux.state.current - st.aux.current).norm() /
                        std::max(1.0, st.aux.current.norm());
      st.aux = aux.state;
      st.ell_est = ell_next;

      st.x_avg.add(st.x, trial.t);
      st.w_avg.add(Vec::Constant(1, st.w), trial.t);
      st.y_avg.add(st.y, trial.t);
      st.theta_avg.add(st.theta, trial.t);

      trial.sigma_prev = trial.sigma;
      trial.alpha = trial.alpha_next;
      trial.beta = trial.beta_next;
      trial.tau = tau * policy.growth;
      st.steps = trial;
      ++st.k;
      return r;
    }
    tau *= policy.shrink;
  }
}

MultiResult multisol_solve(const StructuredProblem& p, const StepPolicy& policy, long K,
                           const Vec& x0, double w0, const Vec& y0, const Vec& theta0, double B,
                           const MultiObserver& observer) {
  if (K < 1) {
    throw std::invalid_argument("multisol_solve: K must be at least 1");
  }
  MultiResult res;
  res.state = make_multi_state(p, x0, w0, y0, theta0, B, policy);
  res.reports.reserve(static_cast<std::size_t>(K));
  try {
    for (long k = 0; k < K; ++k) {
      res.reports.push_back(multisol_step(res.state, p, policy));
      if (observer) observer(res.reports.back(), res.state);
    }
  } catch (...) {
    res.error = std::current_exception();
  }
  if (res.state.x_avg.count() > 0) {
    res.x_bar = res.state.x_avg.mean();
    res.y_bar = res.state.y_avg.mean();
    res.theta_bar = res.state.theta_avg.mean();
    res.w_bar = res.state.w_avg.mean()(0);
  }
  return res;
}

}  // namespace misspec
