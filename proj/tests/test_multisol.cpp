#include <doctest.h>

#include "misspec/metrics.hpp"
#include "misspec/multisol.hpp"
#include "misspec/portfolio.hpp"
#include "support.hpp"

using namespace misspec;

namespace {

StepState some_steps(double tau, double sigma) {
  StepState s;
  s.tau = tau;
  s.sigma = sigma;
  s.eta = 1.0;
  s.alpha = s.alpha_next = 0.4;
  s.beta = s.beta_next = 0.3;
  return s;
}

// Literal transcription of the structured backtracking test, written against the
// printed definition: every norm is squared, the first y-term carries 1/(2 alpha),
// all others a full 1/alpha or 1/beta.
double Ebar_literal(const StructuredProblem& p, const MultiCandidate& c, const MultiCandidate& k,
                    const StepState& s) {
  auto sq = [](const Vec& v) { return v.squaredNorm(); };
  double e = (p.g1_grad_x(c.x, c.theta) - p.g1_grad_x(k.x, c.theta)).dot(c.x - k.x);
  e += (p.g2_grad_x(c.x, c.y) - p.g2_grad_x(k.x, c.y)).dot(c.x - k.x);
  e += sq(p.g2_grad_y(c.x, c.y) - p.g2_grad_y(k.x, c.y)) / (2 * s.alpha_next);
  e += sq(p.g2_grad_y(k.x, c.y) - p.g2_grad_y(k.x, k.y)) / s.beta_next;
  e += sq(p.g1_grad_theta(c.x, c.theta) - p.g1_grad_theta(k.x, c.theta)) / s.alpha_next;
  e += sq(p.g1_grad_theta(k.x, c.theta) - p.g1_grad_theta(k.x, k.theta)) / s.alpha_next;
  e += sq(-c.w * p.ell_grad(c.theta) + k.w * p.ell_grad(c.theta)) / s.beta_next;
  e += sq(-k.w * p.ell_grad(c.theta) + k.w * p.ell_grad(k.theta)) / s.beta_next;
  e -= (1 / s.sigma - s.eta * (s.alpha + s.beta)) *
       (0.5 * sq(c.y - k.y) + 0.5 * sq(c.theta - k.theta));
  e -= 0.5 * sq(c.x - k.x) / s.tau;
  e -= 0.5 * (c.w - k.w) * (c.w - k.w) / s.tau;
  return e;
}

// g1 = x^T M theta + |x|^2 / 2 style coupling with curvature in x, for a nontrivial check.
StructuredProblem curved() {
  StructuredProblem p = toy_multisol_instance(0.1).problem;
  p.g1 = [](const Vec& x, const Vec& t) { return t.dot(x) + 0.5 * x.squaredNorm() * t(1); };
  p.g1_grad_x = [](const Vec& x, const Vec& t) -> Vec { return t + x * t(1); };
  p.g1_grad_theta = [](const Vec& x, const Vec&) -> Vec {
    return x + Vec::Unit(2, 1) * 0.5 * x.squaredNorm();
  };
  p.g2 = [](const Vec& x, const Vec& y) { return y.dot(x) - 0.25 * y.squaredNorm(); };
  p.g2_grad_x = [](const Vec&, const Vec& y) -> Vec { return y; };
  p.g2_grad_y = [](const Vec& x, const Vec& y) -> Vec { return x - 0.5 * y; };
  return p;
}

}  // namespace

TEST_CASE("structured test vanishes at the prior point") {
  const ToyMultisol t = toy_multisol_instance(0.1);
  const MultiCandidate c{t.x0, t.y0, t.theta0, 0.5};
  CHECK(eval_Ebar(t.problem, c, c, some_steps(1, 1)).value == 0.0);
}

TEST_CASE("structured test matches the literal transcription") {
  Rng rng(77);
  const ToyMultisol toy = toy_multisol_instance(0.1);
  for (const StructuredProblem& p : {toy.problem, curved()}) {
    for (int i = 0; i < 20; ++i) {
      const MultiCandidate c{oracle::random_simplex_point(rng, 2), oracle::random_vec(rng, 2, 0, 3),
                             oracle::random_vec(rng, 2, -2, 2), rng.uniform(0, 3)};
      const MultiCandidate k{oracle::random_simplex_point(rng, 2), oracle::random_vec(rng, 2, 0, 3),
                             oracle::random_vec(rng, 2, -2, 2), rng.uniform(0, 3)};
      StepState s = some_steps(rng.uniform(0.05, 1), rng.uniform(0.05, 1));
      s.alpha_next = rng.uniform(0.1, 2);
      s.beta_next = rng.uniform(0.1, 2);
      s.eta = rng.uniform(0.5, 2);
      const double lit = Ebar_literal(p, c, k, s);
      CHECK(eval_Ebar(p, c, k, s).value == doctest::Approx(lit).epsilon(1e-12));
    }
  }
}

TEST_CASE("structured test: x inner products vanish when g1 and g2 are linear in x") {
  const ToyMultisol t = toy_multisol_instance(0.1);
  const MultiCandidate k{(Vec(2) << 0.5, 0.5).finished(), Vec::Zero(2), Vec::Zero(2), 0.0};
  const MultiCandidate c{(Vec(2) << 0.6, 0.4).finished(), (Vec(2) << 0.1, 0.0).finished(),
                         (Vec(2) << 0.2, 0.0).finished(), 0.5};
  StepState s = some_steps(1.0, 1.0);
  // dx = (0.1, -0.1): g2_y difference |dx|^2 = 0.02 over 2 * 0.4; y-self term 0;
  // theta: |dx|^2 / 0.4 and 0; w terms: |(-0.5) grad ell(c)|^2 / 0.3 with grad ell = (-0.8, 0),
  // then 0 since w_k = 0; prox terms: -(1 - 0.7)(0.005 + 0.02) - (0.01 + 0.125).
  const double expect = 0.02 / 0.8 + 0.02 / 0.4 + 0.25 * 0.64 / 0.3 - 0.3 * 0.025 - 0.135;
  CHECK(eval_Ebar(t.problem, c, k, s).value == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("structured test decreases when steps shrink") {
  const ToyMultisol t = toy_multisol_instance(0.1);
  const MultiCandidate k{t.x0, t.y0, t.theta0, 0.0};
  const MultiCandidate c{(Vec(2) << 0.8, 0.2).finished(), (Vec(2) << 0.3, 0.1).finished(),
                         (Vec(2) << 0.5, -0.5).finished(), 0.2};
  const double before = eval_Ebar(t.problem, c, k, some_steps(1, 1)).value;
  const double after = eval_Ebar(t.problem, c, k, some_steps(0.1, 0.1)).value;
  CHECK(after < before);
}

TEST_CASE("multiplier update clamps to [0, B]") {
  // Closed form of the w block, checked on the three reference cases.
  auto w_next = [](double w, double drift, double tau, double B) {
    return project_box(w + tau * drift, 0.0, B);
  };
  CHECK(w_next(0.0, -0.3, 1.0, 1.0) == 0.0);
  CHECK(w_next(0.2, 0.5, 1.0, 1.0) == doctest::Approx(0.7));
  CHECK(w_next(0.0, 2.0, 1.0, 1.0) == 1.0);

  // And inside the stepper: with theta far from the solution set the drift is
  // positive and large, so w must stop at B.
  ToyMultisol t = toy_multisol_instance(0.1);
  StepPolicy pol = StepPolicy::backtracking(1.0 / 3, 1.0 / 3, 0.5, 1.0, 1.0);
  MultiState st = make_multi_state(t.problem, t.x0, 0.0, t.y0, (Vec(2) << -2.0, 0.0).finished(),
                                   1.0, pol);
  for (int k = 0; k < 20; ++k) {
    multisol_step(st, t.problem, pol);
    CHECK(st.w >= 0.0);
    CHECK(st.w <= 1.0);
  }
}

TEST_CASE("dual bound") {
  // Constant g1: zero numerator.
  StructuredProblem c = toy_multisol_instance(0.1).problem;
  c.dual_bound_numerator = nullptr;
  c.g1 = [](const Vec&, const Vec&) { return 4.0; };
  const std::vector<Vec> xs = {Vec::Unit(2, 0), Vec::Unit(2, 1)};
  const std::vector<Vec> ths = {Vec::Zero(2), Vec::Ones(2)};
  CHECK(dual_bound_B(c, Vec::Zero(2), xs, ths).B == 1.0);

  // Bilinear g1 on simplex x box: the analytic value equals vertex enumeration.
  const ToyMultisol t = toy_multisol_instance(0.1);
  std::vector<Vec> corners;
  for (double a : {-2.0, 2.0})
    for (double b : {-2.0, 2.0}) corners.push_back((Vec(2) << a, b).finished());
  double sup = 0.0;
  for (const Vec& x : xs) {
    double inf = kInfinity;
    for (const Vec& th : corners) inf = std::min(inf, th.dot(x));
    sup = std::max(sup, t.theta_slater.dot(x) - inf);
  }
  const DualBound B = dual_bound_B(t.problem, t.theta_slater);
  CHECK(B.source == "analytic");
  CHECK(B.B == doctest::Approx(1.0 + sup / 0.1));

  // Without the analytic form the sampled estimate is the vertex max inflated by 2.
  StructuredProblem s = t.problem;
  s.dual_bound_numerator = nullptr;
  const DualBound Bs = dual_bound_B(s, t.theta_slater, xs, corners);
  CHECK(Bs.source == "sampled");
  CHECK(Bs.B == doctest::Approx(1.0 + 2.0 * sup / 0.1));
  CHECK_THROWS_AS(dual_bound_B(s, t.theta_slater), std::invalid_argument);
}

TEST_CASE("portfolio dual bound dominates sampled quadratic forms") {
  SyntheticParams sp;
  sp.n = 8;
  sp.sectors = 2;
  const SyntheticData d = synthetic_instance(sp);
  const double eps = 0.05;
  const StructuredPortfolio s = build_markowitz_structured(d.instance, eps);
  const DualBound B = dual_bound_B(s.problem, s.theta_slater);
  CHECK(B.B <= 1.0 + s.lambda_max / (2 * eps) + 1e-9);
  Rng rng(3);
  const Index n = d.instance.assets();
  for (int i = 0; i < 200; ++i) {
    const Vec x = i < n ? Vec(Vec::Unit(n, i)) : oracle::random_simplex_point(rng, n);
    // inf over Theta of g1 is attained at Sigma = eps_psd I.
    const Vec lo = oracle::flat(d.instance.eps_psd * Mat::Identity(n, n));
    const double num = s.problem.g1(x, s.theta_slater) - s.problem.g1(x, lo);
    CHECK(1.0 + num / eps <= B.B + 1e-9);
  }
}

TEST_CASE("structured solver invariants on the toy instance") {
  const double eps = 0.1;
  ToyMultisol t = toy_multisol_instance(eps);
  const DualBound B = dual_bound_B(t.problem, t.theta_slater);
  CHECK(B.B >= 1.0);
  StepPolicy pol = StepPolicy::backtracking(1.0 / 3, 1.0 / 3, 0.5, 1.0, 1.0);
  std::vector<double> ws;
  const MultiResult r = multisol_solve(
      t.problem, pol, 2000, t.x0, 0.0, t.y0, t.theta0, B.B,
      [&](const IterationReport& rep, const MultiState& st) {
        CHECK(accepted({rep.test_value, rep.test_scale}));
        CHECK(st.w >= 0.0);
        CHECK(st.w <= B.B);
        CHECK(st.theta.cwiseAbs().maxCoeff() <= 2.0);
        CHECK(std::abs(st.x.sum() - 1.0) <= 1e-12);
        ws.push_back(st.w);
      });
  REQUIRE(r.ok());
  CHECK(r.w_bar >= 0.0);
  CHECK(r.w_bar <= B.B);
  // Streamed average of w against the stored sequence.
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < ws.size(); ++k) {
    num += r.reports[k].t * ws[k];
    den += r.reports[k].t;
  }
  CHECK(r.w_bar == doctest::Approx(num / den).epsilon(1e-12));
  for (std::size_t k = 0; k + 1 < r.reports.size(); ++k) {
    const auto &a = r.reports[k], &b = r.reports[k + 1];
    CHECK(a.t / b.t == doctest::Approx(b.eta).epsilon(1e-12));
  }
  // The averaged parameter approaches the relaxed level set ell = ell* + epsilon,
  // from either side, so only a modest overshoot is allowed.
  CHECK(t.problem.ell(r.theta_bar) - t.ell_star <= 1.1 * t.problem.epsilon);
}

TEST_CASE("auxiliary learner reaches the learning optimum inside the box") {
  ToyMultisol t = toy_multisol_instance(0.1);
  APGDState s = make_apgd_state((Vec(2) << -2.0, 1.5).finished(), 1.0 / t.problem.ell_grad_lipschitz);
  for (long k = 0; k < 1000; ++k) {
    s = apgd_step(s, t.problem.ell, t.problem.ell_grad, t.problem.project_theta).state;
    CHECK(s.current.cwiseAbs().maxCoeff() <= 2.0);
  }
  CHECK(t.problem.ell(s.current) <= 1e-8);
}

TEST_CASE("structured solver preconditions") {
  ToyMultisol t = toy_multisol_instance(0.1);
  const StepPolicy no_beta = StepPolicy::backtracking(0.5, 0.0, 0.5, 1.0, 1.0);
  CHECK_THROWS_AS(make_multi_state(t.problem, t.x0, 0.0, t.y0, t.theta0, 10.0, no_beta),
                  std::invalid_argument);
  const StepPolicy ok = StepPolicy::backtracking(0.3, 0.3, 0.5, 1.0, 1.0);
  CHECK_THROWS_AS(make_multi_state(t.problem, t.x0, 20.0, t.y0, t.theta0, 10.0, ok),
                  std::invalid_argument);
  CHECK_THROWS_AS(multisol_solve(t.problem, ok, 0, t.x0, 0.0, t.y0, t.theta0, 10.0),
                  std::invalid_argument);
  CHECK(default_epsilon(100) == doctest::Approx(0.1));
  CHECK_THROWS_AS(toy_multisol_instance(0.6), std::invalid_argument);
}
