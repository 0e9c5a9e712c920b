#include <doctest.h>

#include "misspec/learning.hpp"
#include "misspec/portfolio.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

using namespace misspec;

namespace {

// ell(theta) = (theta - c)^2 / 2 on the real line, no w block.
LearningProblem scalar_quadratic(double c, double curvature = 1.0) {
  LearningProblem lp;
  lp.name = "scalar";
  lp.dim_theta = 1;
  lp.dim_w = 0;
  lp.ell = [=](const Vec& t, const Vec&) { return 0.5 * curvature * (t(0) - c) * (t(0) - c); };
  lp.grad_theta = [=](const Vec& t, const Vec&) -> Vec { return Vec::Constant(1, curvature * (t(0) - c)); };
  lp.grad_w = [](const Vec&, const Vec&) -> Vec { return Vec(); };
  lp.f = zero_function();
  lp.h = zero_function();
  lp.modulus = curvature;
  return lp;
}

LearnerConfig config(double tau_bar) {
  LearnerConfig c;
  c.tau_bar = tau_bar;
  return c;
}

}  // namespace

TEST_CASE("learner leaves a stationary point alone") {
  const LearningProblem lp = scalar_quadratic(1.0);
  LearnerState s = make_learner_state(lp, Vec::Ones(1), Vec(), config(0.5));
  for (int i = 0; i < 5; ++i) {
    s = learner_step(s, lp, 0.5);
    CHECK(std::abs(s.theta(0) - 1.0) <= 1e-12);
  }
}

TEST_CASE("scalar quadratic follows the closed-form step recursion") {
  const LearningProblem lp = scalar_quadratic(1.0);
  LearnerState s = make_learner_state(lp, Vec::Zero(1), Vec(), config(0.5));
  // No backtracking happens for tau <= 1 / L = 1, so
  //   theta+ = theta - tau (theta - 1), gamma+ = gamma (1 + tau), tau+ = tau sqrt(gamma / gamma+).
  double theta = 0.0, tau = 0.5, gamma = 1.0;
  double err_prev = 1.0;
  for (int k = 0; k < 10; ++k) {
    s = learner_step(s, lp, 0.5);
    theta -= tau * (theta - 1.0);
    const double g = gamma * (1.0 + tau);
    tau *= std::sqrt(gamma / g);
    gamma = g;
    CHECK(s.backtracks_last == 0);
    CHECK(std::abs(s.theta(0) - theta) <= 1e-14);
    CHECK(s.tau == doctest::Approx(tau).epsilon(1e-14));
    const double err = std::abs(s.theta(0) - 1.0);
    CHECK(err < err_prev);
    err_prev = err;
  }
}

TEST_CASE("huge initial step backtracks geometrically to the smoothness threshold") {
  const LearningProblem lp = scalar_quadratic(1.0);
  const LearnerState s0 = make_learner_state(lp, Vec::Zero(1), Vec(), config(1e6));
  const LearnerState s1 = learner_step(s0, lp, 0.5);
  // The acceptance test reduces to (1 - 1/tau) (dtheta)^2 <= 0, i.e. tau <= 1.
  const double accepted_tau = 1e6 * std::pow(0.5, s1.backtracks_last);
  CHECK(accepted_tau <= 1.0);
  CHECK(accepted_tau >= 0.5);
  CHECK(s1.backtracks_last <= static_cast<int>(std::ceil(std::log2(1e6 * 2.0))) + 1);
}

TEST_CASE("backtrack cap is enforced") {
  const LearningProblem lp = scalar_quadratic(1.0, 1e30);
  const LearnerState s0 = make_learner_state(lp, Vec::Zero(1), Vec(), config(1.0));
  CHECK_THROWS_AS(learner_step(s0, lp, 0.5, 3), NumericError);
}

TEST_CASE("learner_run_until") {
  const LearningProblem lp = scalar_quadratic(1.0);
  const LearnerState s0 = make_learner_state(lp, Vec::Zero(1), Vec(), config(0.5));
  const LearnerRun run = learner_run_until(s0, lp, 0.5, 1e-10, 100000);
  CHECK(run.converged);
  // Error decays like k^-2 while the step residual decays like k^-3, so at the
  // stopping point the error is about k tol / 2.
  CHECK(std::abs(run.theta(0) - 1.0) <= run.iterations * 1e-10);

  const LearnerRun quick = learner_run_until(s0, lp, 0.5, 1e3, 100000);
  CHECK(quick.iterations == 1);
  CHECK_THROWS_AS(learner_run_until(s0, lp, 0.5, 0.0, 10), std::invalid_argument);
}

TEST_CASE("SCS learner: invariants along the run, and S recovered when v = 0") {
  Rng rng(8);
  const Index n = 5;
  PortfolioInstance inst;
  inst.mu = Vec::Zero(n);
  const Mat a = oracle::random_symmetric(rng, n, 0.4);
  inst.S = SymMat(a * a + 0.5 * Mat::Identity(n, n));
  inst.v = 0.0;
  inst.eps_psd = 1e-2;
  assign_sectors(inst, 1);
  const LearningProblem lp = build_scs_learning(inst);

  LearnerState s = make_learner_state(lp, Vec::Zero(n * n), Vec::Zero(n * n), LearnerConfig{});
  double gamma_prev = s.gamma;
  for (int k = 0; k < 200; ++k) {
    s = learner_step(s, lp, 0.5);
    CHECK(s.last_test <= kLearnerTestTol * (1.0 + s.last_scale));
    CHECK(s.gamma > gamma_prev);
    gamma_prev = s.gamma;
    Eigen::SelfAdjointEigenSolver<Mat> eig(oracle::unflat(s.w));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
  const LearnerRun run = learner_run_until(s, lp, 0.5, 1e-10, 100000);
  CHECK(run.converged);
  // Same k tol / 2 estimate as above, with k counted from the start and the
  // residual taken relative to ||theta||.
  const double allowance = run.state.k * 1e-10 * std::max(1.0, run.theta.norm());
  CHECK((oracle::unflat(run.theta) - inst.S.matrix()).norm() <= allowance);
  CHECK(run.state.w.norm() <= allowance);
}

TEST_CASE("SCS learner on a synthetic n = 6 instance converges before 1e5 steps") {
  SyntheticParams sp;
  sp.n = 6;
  sp.sectors = 2;
  sp.seed = 5;
  const SyntheticData d = synthetic_instance(sp);
  const LearningProblem lp = build_scs_learning(d.instance);
  const Index m = d.instance.assets() * d.instance.assets();
  const LearnerRun run = learner_run_until(
      make_learner_state(lp, Vec::Zero(m), Vec::Zero(m), LearnerConfig{}), lp, 0.5, 1e-10, 100000);
  CHECK(run.converged);
  // theta* sits above the floor up to the solver's residual.
  Eigen::SelfAdjointEigenSolver<Mat> eig(oracle::unflat(run.theta));
  CHECK(eig.eigenvalues().minCoeff() >= d.instance.eps_psd - 1e-6);
}

TEST_CASE("frozen learner does not move") {
  Learner l = Learner::frozen(Vec::Constant(2, 3.0));
  CHECK(l.is_frozen());
  CHECK(l.advance() == 0);
  CHECK(l.theta() == Vec::Constant(2, 3.0));
  CHECK(l.theta_prev() == Vec::Constant(2, 3.0));
}

TEST_CASE("live learner keeps the previous parameter") {
  Learner l(scalar_quadratic(1.0), config(0.5), Vec::Zero(1), Vec());
  l.advance();
  CHECK(l.theta_prev()(0) == 0.0);
  CHECK(l.theta()(0) == doctest::Approx(0.5));
}

TEST_CASE("APGD momentum edge cases") {
  auto ell = [](const Vec& t) { return 0.5 * (t.array() - 1.0).matrix().squaredNorm(); };
  auto grad = [](const Vec& t) -> Vec { return (t.array() - 1.0).matrix(); };
  auto id = [](const Vec& t) -> Vec { return t; };

  const APGDState s0 = make_apgd_state(Vec::Constant(2, 3.0), 0.5);
  const APGDResult r0 = apgd_step(s0, ell, grad, id);
  CHECK(r0.extrapolated == s0.current);

  APGDState s2;
  s2.current = Vec::Constant(2, 2.0);
  s2.previous = Vec::Constant(2, 5.0);
  s2.k = 2;
  s2.step = 0.5;
  const APGDResult r2 = apgd_step(s2, ell, grad, id);
  CHECK(r2.extrapolated == s2.current);
  CHECK(r2.state.current == Vec::Constant(2, 1.5));
  CHECK(r2.value == doctest::Approx(0.25));

  APGDState s3 = s2;
  s3.k = 5;
  const APGDResult r3 = apgd_step(s3, ell, grad, id);
  CHECK(r3.extrapolated == Vec::Constant(2, 2.0 + 3.0 / 6.0 * (2.0 - 5.0)));
}

TEST_CASE("APGD accelerated rate and projection invariant") {
  // Ill-conditioned quadratic so that the iteration does not finish in one step.
  const Vec d = (Vec(2) << 1.0, 0.01).finished();
  auto ell = [d](const Vec& t) { return 0.5 * (d.array() * (t.array() - 1.0).square()).sum(); };
  auto grad = [d](const Vec& t) -> Vec { return (d.array() * (t.array() - 1.0)).matrix(); };
  auto id = [](const Vec& t) -> Vec { return t; };
  // Step 1/L with L = 1: after j iterations ell - ell* <= 2 L |t0 - t*|^2 / (j + 1)^2.
  APGDState s = make_apgd_state(Vec::Constant(2, -4.0), 1.0);
  const double bound = 2.0 * 1.0 * 50.0;
  for (long k = 0; k < 1000; ++k) {
    const APGDResult r = apgd_step(s, ell, grad, id);
    s = r.state;
    CHECK(std::pow(static_cast<double>(k + 2), 2) * ell(s.current) <= bound);
  }

  auto box = [](const Vec& t) -> Vec { return project_box(t, 0.0, 0.5); };
  APGDState b = make_apgd_state(Vec::Zero(2), 1.0);
  for (int k = 0; k < 50; ++k) {
    b = apgd_step(b, ell, grad, box).state;
    CHECK(b.current.minCoeff() >= 0.0);
    CHECK(b.current.maxCoeff() <= 0.5);
  }
  CHECK(b.current(0) == doctest::Approx(0.5));
}
