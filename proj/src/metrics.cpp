#include "misspec/metrics.hpp"

#include "misspec/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace misspec {

double saddle_residual(const SaddleProblem& p, const Vec& x, const Vec& y, const Vec& theta) {
  const Vec rx = x - p.f.prox(x - p.grad_x(x, y, theta), 1.0);
  const Vec ry = y - p.h.prox(y + p.grad_y(x, y, theta), 1.0);
  return rx.norm() + ry.norm();
}

ReferenceSolution compute_reference(const SaddleProblem& p, const LearningProblem& lp,
                                    const Vec& theta0, const Vec& w0, const Vec& x0,
                                    const Vec& y0, const ReferenceOptions& opt) {
  if (!(opt.tol > 0.0)) {
    throw std::invalid_argument("compute_reference: tol must be positive");
  }
  if (opt.analytic) {
    ReferenceSolution ref = *opt.analytic;
    ref.provenance = "analytic";
    ref.saddle_residual = saddle_residual(p, ref.x, ref.y, ref.theta);
    const LearnerState probe =
        learner_step(make_learner_state(lp, ref.theta, Vec::Zero(lp.dim_w), opt.learner), lp,
                     opt.learner.shrink, opt.learner.backtrack_cap);
    ref.learner_residual = learning_residual(probe.theta, ref.theta);
    if (p.primal_objective) ref.F = p.primal_objective(ref.x, ref.theta);
    ref.low_confidence = ref.saddle_residual > opt.saddle_tol || ref.learner_residual > opt.tol;
    return ref;
  }

  ReferenceSolution ref;
  ref.provenance = "long-run";
  const LearnerRun run = learner_run_until(make_learner_state(lp, theta0, w0, opt.learner), lp,
                                           opt.learner.shrink, opt.tol, opt.learner_max_iter,
                                           opt.learner.backtrack_cap);
  ref.theta = run.theta;
  ref.learner_residual = run.last_residual;

  Learner frozen = Learner::frozen(ref.theta);
  SolverState st = make_solver_state(p, x0, y0, ref.theta);
  StepState steps = make_step_state(opt.policy);
  opt.policy.validate(p.constants);
  double res = saddle_residual(p, st.x, st.y, ref.theta);
  for (long k = 0; k < opt.K_ref && res > opt.saddle_tol * 1e-2; ++k) {
    aware_step(st, steps, p, frozen, opt.policy);
    if (k % 50 == 49 || k + 1 == opt.K_ref) res = saddle_residual(p, st.x, st.y, ref.theta);
  }
  ref.x = st.x;
  ref.y = st.y;
  ref.saddle_residual = saddle_residual(p, ref.x, ref.y, ref.theta);
  if (p.primal_objective) ref.F = p.primal_objective(ref.x, ref.theta);
  ref.low_confidence =
      !run.converged || ref.saddle_residual > opt.saddle_tol || ref.learner_residual > opt.tol;
  return ref;
}

double suboptimality(const Vec& x, const ReferenceSolution& ref, const SaddleProblem& p) {
  if (!p.primal_objective) {
    throw std::invalid_argument("suboptimality: problem has no primal objective");
  }
  return std::abs(p.primal_objective(x, ref.theta) - ref.F);
}

double learning_residual(const Vec& theta_next, const Vec& theta) {
  require_same_dim(theta_next, theta, "learning_residual");
  return (theta_next - theta).norm() / std::max(1.0, theta.norm());
}

double gap_surrogate(const Vec& x_bar, const Vec& y_bar, const ReferenceSolution& ref,
                     const SaddleProblem& p) {
  const double upper = lagrangian(p, x_bar, ref.y, ref.theta);
  const double lower = lagrangian(p, ref.x, y_bar, ref.theta);
  if (!std::isfinite(upper) || !std::isfinite(lower)) {
    throw InfeasiblePointError("gap_surrogate: averaged iterate outside dom f x dom h");
  }
  return upper - lower;
}

double structured_lagrangian(const StructuredProblem& p, const Vec& x, double w, const Vec& y,
                             const Vec& theta, double ell_star) {
  return p.f(x) + p.g1(x, theta) + p.g2(x, y) - w * (p.ell(theta) - ell_star - p.epsilon) -
         p.h(y);
}

double gap_surrogate_structured(const Vec& x_bar, double w_bar, const Vec& y_bar,
                                const Vec& theta_bar, const ReferenceSolution& ref,
                                const StructuredProblem& p, double ell_star) {
  const double upper = structured_lagrangian(p, x_bar, w_bar, ref.y, ref.theta, ell_star);
  const double lower = structured_lagrangian(p, ref.x, ref.w, y_bar, theta_bar, ell_star);
  if (!std::isfinite(upper) || !std::isfinite(lower)) {
    throw InfeasiblePointError("gap_surrogate: averaged iterate outside the domain");
  }
  return upper - lower;
}

double rate_fit(const std::vector<std::pair<double, double>>& series, double k_lo, double k_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  long m = 0;
  for (const auto& [k, value] : series) {
    if (k < k_lo || k > k_hi) continue;
    if (!(value > 0.0) || !(k > 0.0)) {
      throw std::domain_error("rate_fit: nonpositive value in window at k = " +
                              format_double(k));
    }
    const double lx = std::log(k);
    const double ly = std::log(value);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 10) {
    throw std::invalid_argument("rate_fit: fewer than 10 points in window");
  }
  const double n = static_cast<double>(m);
  const double den = n * sxx - sx * sx;
  if (den <= 0.0) {
    throw std::invalid_argument("rate_fit: degenerate window");
  }
  return (n * sxy - sx * sy) / den;
}

void Trace::check() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TraceRow& r = rows[i];
    if (i > 0 && r.k <= rows[i - 1].k) {
      throw std::logic_error("trace: k not strictly increasing at row " + std::to_string(i));
    }
    for (double v : {r.tau, r.sigma, r.eta, r.subopt, r.infeas, r.learn_residual, r.gap}) {
      if (!std::isfinite(v)) {
        throw std::logic_error("trace: non-finite entry at k = " + std::to_string(r.k));
      }
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  for (const auto& [key, value] : trace.header) {
    out << "# " << key << '=' << value << '\n';
  }
  out << kTraceColumns << '\n';
  for (const TraceRow& r : trace.rows) {
    out << r.k << ',' << format_double(r.tau) << ',' << format_double(r.sigma) << ','
        << format_double(r.eta) << ',' << r.backtracks << ',' << format_double(r.subopt) << ','
        << format_double(r.infeas) << ',' << format_double(r.learn_residual) << ','
        << format_double(r.gap) << '\n';
  }
}

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write trace '" + path + "'");
  }
  write_trace_csv(out, trace);
  if (!out) {
    throw IoError("write to '" + path + "' failed");
  }
}

Trace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open trace '" + path + "'");
  }
  Trace t;
  std::string line;
  bool columns_seen = false;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        t.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      }
      continue;
    }
    if (!columns_seen) {
      if (line != kTraceColumns) {
        throw DataError(DataError::Kind::Shape, row, 0,
                        "trace '" + path + "' has unexpected columns: " + line);
      }
      columns_seen = true;
      continue;
    }
    std::istringstream cells(line);
    std::string cell;
    std::vector<std::string> v;
    while (std::getline(cells, cell, ',')) v.push_back(cell);
    if (v.size() != 9) {
      throw DataError(DataError::Kind::Ragged, row, static_cast<long>(v.size()),
                      "trace '" + path + "' row " + std::to_string(row) + " has " +
                          std::to_string(v.size()) + " cells");
    }
    try {
      TraceRow r;
      r.k = std::stol(v[0]);
      r.tau = std::stod(v[1]);
      r.sigma = std::stod(v[2]);
      r.eta = std::stod(v[3]);
      r.backtracks = std::stoi(v[4]);
      r.subopt = std::stod(v[5]);
      r.infeas = std::stod(v[6]);
      r.learn_residual = std::stod(v[7]);
      r.gap = std::stod(v[8]);
      t.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError(DataError::Kind::NonNumeric, row, 0,
                      "trace '" + path + "' row " + std::to_string(row) + " is not numeric");
    }
  }
  if (!columns_seen) {
    throw DataError(DataError::Kind::Empty, 0, 0, "trace '" + path + "' has no column line");
  }
  return t;
}

}  // namespace misspec
