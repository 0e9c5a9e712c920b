#include <doctest.h>

#include "misspec/errors.hpp"
#include "misspec/metrics.hpp"
#include "misspec/portfolio.hpp"
#include "support.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace misspec;

TEST_CASE("rate fit on exact power laws") {
  std::vector<std::pair<double, double>> inv, inv2, flat;
  for (int k = 1; k <= 200; ++k) {
    inv.emplace_back(k, 1.0 / k);
    inv2.emplace_back(k, 1.0 / (double(k) * k));
    flat.emplace_back(k, 3.0);
  }
  CHECK(rate_fit(inv, 10, 200) == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(rate_fit(inv2, 10, 200) == doctest::Approx(-2.0).epsilon(0.01));
  CHECK(std::abs(rate_fit(flat, 10, 200)) <= 0.01);
  CHECK_THROWS_AS(rate_fit(inv, 1, 5), std::invalid_argument);
  inv[50].second = 0.0;
  CHECK_THROWS_AS(rate_fit(inv, 10, 200), std::domain_error);
}

TEST_CASE("learning residual") {
  const Vec t = (Vec(2) << 0.3, 0.4).finished();
  CHECK(learning_residual(t, t) == 0.0);
  CHECK(learning_residual(t + (Vec(2) << 0.2, 0.0).finished(), t) == doctest::Approx(0.2));
  const Vec big = (Vec(2) << 0.0, 4.0).finished();
  CHECK(learning_residual(big + (Vec(2) << 1.0, 0.0).finished(), big) == doctest::Approx(0.25));
  CHECK_THROWS_AS(learning_residual(t, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("toy reference is analytic and the surrogate vanishes on it") {
  const ToySaddle toy = toy_saddle_instance();
  ReferenceOptions opt;
  ReferenceSolution a;
  a.theta = toy.theta_star;
  a.x = toy.x_star;
  a.y = toy.y_star;
  opt.analytic = a;
  opt.learner.tau_bar = 0.5;
  const ReferenceSolution ref =
      compute_reference(toy.saddle, toy.learning, toy.theta0, Vec(), toy.x0, toy.y0, opt);
  CHECK(ref.provenance == "analytic");
  CHECK_FALSE(ref.low_confidence);
  CHECK(ref.F == 2.0);
  CHECK(ref.saddle_residual == 0.0);
  CHECK(gap_surrogate(ref.x, ref.y, ref, toy.saddle) == 0.0);

  // Direct evaluation at (0, 0): L(0, -1; 2) - L(1, 0; 2) = 2 - 2.
  CHECK(gap_surrogate(Vec::Zero(1), Vec::Zero(1), ref, toy.saddle) == 0.0);
  CHECK(suboptimality(Vec::Zero(1), ref, toy.saddle) == doctest::Approx(8.0));
  CHECK_THROWS_AS(gap_surrogate(Vec::Constant(1, 9.0), Vec::Zero(1), ref, toy.saddle),
                  InfeasiblePointError);
}

TEST_CASE("long-run reference on the toy matches the analytic saddle") {
  const ToySaddle toy = toy_saddle_instance();
  ReferenceOptions opt;
  opt.learner.tau_bar = 0.5;
  opt.K_ref = 100000;
  const ReferenceSolution ref =
      compute_reference(toy.saddle, toy.learning, toy.theta0, Vec(), toy.x0, toy.y0, opt);
  CHECK(ref.provenance == "long-run");
  // The learner error decays like k^-2, so a step residual of tol leaves an error of
  // about k tol / 2 after k steps.
  CHECK(std::abs(ref.theta(0) - 2.0) <= 1e-10 * 1e5);
  CHECK(ref.learner_residual <= 1e-10);
  CHECK(std::abs(ref.x(0) - 1.0) <= 1e-6);
  CHECK(std::abs(ref.y(0) + 1.0) <= 1e-6);
}

TEST_CASE("SCS reference with v = 0 recovers S") {
  Rng rng(31);
  const Index n = 5;
  PortfolioInstance inst;
  inst.mu = oracle::random_vec(rng, n);
  const Mat a = oracle::random_symmetric(rng, n, 0.3);
  inst.S = SymMat(a * a + 0.2 * Mat::Identity(n, n));
  inst.v = 0.0;
  assign_sectors(inst, 1);
  const SaddleProblem sp = build_markowitz_sp(inst);
  const LearningProblem lp = build_scs_learning(inst);
  ReferenceOptions opt;
  opt.K_ref = 20000;
  Vec x0 = Vec::Zero(n);
  x0(0) = 1.0;
  const ReferenceSolution ref =
      compute_reference(sp, lp, Vec::Zero(n * n), Vec::Zero(n * n), x0, Vec::Zero(1), opt);
  CHECK((oracle::unflat(ref.theta) - inst.S.matrix()).norm() <= 1e-10 * opt.learner_max_iter);
  CHECK(ref.learner_residual <= 1e-10);
  CHECK(ref.saddle_residual <= 1e-8);
  CHECK_FALSE(ref.low_confidence);
  CHECK(suboptimality(ref.x, ref, sp) <= 1e-12);
}

TEST_CASE("reference tolerance contract") {
  const ToySaddle toy = toy_saddle_instance();
  ReferenceOptions opt;
  opt.tol = 0.0;
  CHECK_THROWS_AS(
      compute_reference(toy.saddle, toy.learning, toy.theta0, Vec(), toy.x0, toy.y0, opt),
      std::invalid_argument);
}

TEST_CASE("structured Lagrangian and surrogate") {
  const ToyMultisol t = toy_multisol_instance(0.08);
  ReferenceSolution ref;
  ref.x = t.x_star;
  ref.y = t.y_star;
  ref.theta = t.theta_star;
  ref.w = t.w_star;
  CHECK(gap_surrogate_structured(ref.x, ref.w, ref.y, ref.theta, ref, t.problem, t.ell_star) ==
        doctest::Approx(0.0).epsilon(1e-14));
  // The stated point is a saddle: perturbing either side cannot lower the surrogate below 0.
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const Vec x = oracle::random_simplex_point(rng, 2);
    const Vec y = oracle::random_vec(rng, 2, 0, 10);
    const Vec th = oracle::random_vec(rng, 2, -2, 2);
    const double w = rng.uniform(0, 1 + 3 / 0.08);
    CHECK(gap_surrogate_structured(x, w, y, th, ref, t.problem, t.ell_star) >= -1e-12);
  }
}

TEST_CASE("trace CSV round trip and checks") {
  Trace t;
  t.header = {{"problem", "toy-saddle"}, {"K", "2"}};
  TraceRow a;
  a.k = 1;
  a.tau = 0.1;
  a.sigma = 1.0 / 3.0;
  a.eta = 1.0;
  a.subopt = 1e-300;
  a.gap = 0.5;
  TraceRow b = a;
  b.k = 2;
  b.backtracks = 3;
  t.rows = {a, b};
  t.check();

  std::ostringstream os;
  write_trace_csv(os, t);
  const std::string text = os.str();
  CHECK(text.find(std::string(kTraceColumns) + "\n") != std::string::npos);
  CHECK(text.rfind("# problem=toy-saddle\n", 0) == 0);

  const auto path = (std::filesystem::temp_directory_path() / "misspec_trace.csv").string();
  write_trace_csv(path, t);
  const Trace back = read_trace_csv(path);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].sigma == a.sigma);
  CHECK(back.rows[0].subopt == a.subopt);
  CHECK(back.rows[1].backtracks == 3);
  CHECK(back.header == t.header);

  Trace bad = t;
  bad.rows[1].k = 1;
  CHECK_THROWS_AS(bad.check(), std::logic_error);
  bad = t;
  bad.rows[0].gap = std::nan("");
  CHECK_THROWS_AS(bad.check(), std::logic_error);

  std::ofstream(path) << "k,tau\n1,2\n";
  CHECK_THROWS_AS(read_trace_csv(path), DataError);
  CHECK_THROWS_AS(read_trace_csv("/nonexistent/trace.csv"), IoError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-310, 0.0}) {
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
}
