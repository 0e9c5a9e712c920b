#include "misspec/cli.hpp"

#include "misspec/errors.hpp"
#include "misspec/multisol.hpp"
#include "misspec/portfolio.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace misspec {

using nlohmann::json;

namespace {

template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("problem", c.problem);
  f("solver", c.solver);
  f("K", c.K);
  f("seed", c.seed);
  f("c_alpha", c.c_alpha);
  f("c_beta", c.c_beta);
  f("rho", c.rho);
  f("tau_bar", c.tau_bar);
  f("gamma0", c.gamma0);
  f("growth", c.growth);
  f("backtrack_cap", c.backtrack_cap);
  f("alpha", c.alpha);
  f("beta", c.beta);
  f("learner_tau_bar", c.learner_tau_bar);
  f("learner_gamma0", c.learner_gamma0);
  f("learner_rho", c.learner_rho);
  f("n", c.n);
  f("sectors", c.sectors);
  f("kappa", c.kappa);
  f("v", c.v);
  f("eps_psd", c.eps_psd);
  f("y_cap", c.y_cap);
  f("eps_relax", c.eps_relax);
  f("ref_tol", c.ref_tol);
  f("ref_iters", c.ref_iters);
  f("data", c.data);
  f("out_trace", c.out_trace);
  f("out_summary", c.out_summary);
  f("cache_dir", c.cache_dir);
}

void apply_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) {
    throw ConfigError("configuration must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    visit_fields(cfg, [&](const char* name, auto& field) {
      if (key != name) return;
      found = true;
      try {
        field = value.get<std::decay_t<decltype(field)>>();
      } catch (const json::exception&) {
        throw ConfigError("configuration key '" + key + "' has the wrong type");
      }
    });
    if (!found) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

double resolved_epsilon(const RunConfig& cfg) {
  return cfg.eps_relax > 0.0 ? cfg.eps_relax : default_epsilon(cfg.K);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open data file '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

PortfolioInstance portfolio_instance(const RunConfig& cfg) {
  if (cfg.problem == "portfolio-synthetic") {
    SyntheticParams sp;
    sp.n = cfg.n;
    sp.sectors = cfg.sectors;
    sp.kappa = cfg.kappa;
    sp.v = cfg.v;
    sp.eps_psd = cfg.eps_psd;
    sp.y_cap = cfg.y_cap;
    sp.seed = cfg.seed;
    return synthetic_instance(sp).instance;
  }
  const ReturnsDataset ds = load_returns_csv(cfg.data);
  if (ds.periods() < 2) {
    throw DataError(DataError::Kind::Shape, 0, 0, "returns file needs at least 2 periods");
  }
  if (cfg.sectors > ds.assets()) {
    throw ConfigError("more sectors than assets in '" + cfg.data + "'");
  }
  PortfolioInstance inst = instance_from_returns(ds, cfg.sectors);
  inst.kappa = cfg.kappa;
  inst.v = cfg.v;
  inst.eps_psd = cfg.eps_psd;
  inst.y_cap = cfg.y_cap;
  inst.validate();
  return inst;
}

LearnerConfig learner_config(const RunConfig& cfg) {
  LearnerConfig lc;
  lc.tau_bar = cfg.learner_tau_bar;
  lc.gamma0 = cfg.learner_gamma0;
  lc.shrink = cfg.learner_rho;
  lc.backtrack_cap = cfg.backtrack_cap;
  return lc;
}

StepPolicy backtracking_policy(const RunConfig& cfg) {
  StepPolicy pol = StepPolicy::backtracking(cfg.c_alpha, cfg.c_beta, cfg.rho, cfg.tau_bar, cfg.gamma0);
  pol.growth = cfg.growth;
  pol.backtrack_cap = cfg.backtrack_cap;
  return pol;
}

using Header = std::vector<std::pair<std::string, std::string>>;

struct SaddleSetup {
  SaddleProblem p;
  LearningProblem lp;
  Vec theta0, w0, x0, y0;
  std::optional<ReferenceSolution> analytic;
  Header header;
};

SaddleSetup saddle_setup(const RunConfig& cfg) {
  SaddleSetup s;
  if (cfg.problem == "toy-saddle") {
    ToySaddle t = toy_saddle_instance();
    s.p = std::move(t.saddle);
    s.lp = std::move(t.learning);
    s.theta0 = t.theta0;
    s.w0 = Vec();
    s.x0 = t.x0;
    s.y0 = t.y0;
    ReferenceSolution ref;
    ref.theta = t.theta_star;
    ref.x = t.x_star;
    ref.y = t.y_star;
    ref.F = t.F_star;
    s.analytic = ref;
  } else {
    const PortfolioInstance inst = portfolio_instance(cfg);
    s.p = build_markowitz_sp(inst);
    s.lp = build_scs_learning(inst);
    s.theta0 = inst.S.flatten();
    s.w0 = Vec::Zero(s.lp.dim_w);
    s.x0 = Vec::Zero(inst.assets());
    s.x0(0) = 1.0;
    s.y0 = Vec::Zero(inst.sectors());
  }
  s.header.emplace_back("L_xx", format_double(s.p.constants.xx));
  s.header.emplace_back("L_yx", format_double(s.p.constants.yx));
  s.header.emplace_back("L_yy", format_double(s.p.constants.yy));
  return s;
}

struct StructuredSetup {
  StructuredProblem p;
  double ell_star = 0.0;
  Vec theta_slater, x0, y0, theta0;
  double w0 = 0.0;
  std::optional<ReferenceSolution> analytic;
};

StructuredSetup structured_setup(const RunConfig& cfg) {
  StructuredSetup s;
  const double eps = resolved_epsilon(cfg);
  if (cfg.problem == "toy-multisol") {
    ToyMultisol t = toy_multisol_instance(eps);
    s.p = std::move(t.problem);
    s.ell_star = t.ell_star;
    s.theta_slater = t.theta_slater;
    s.x0 = t.x0;
    s.y0 = t.y0;
    s.theta0 = t.theta0;
    ReferenceSolution ref;
    ref.x = t.x_star;
    ref.y = t.y_star;
    ref.theta = t.theta_star;
    ref.w = t.w_star;
    ref.F = structured_lagrangian(s.p, ref.x, ref.w, ref.y, ref.theta, s.ell_star);
    s.analytic = ref;
  } else {
    const PortfolioInstance inst = portfolio_instance(cfg);
    StructuredPortfolio sp = build_markowitz_structured(inst, eps);
    s.p = std::move(sp.problem);
    s.ell_star = sp.ell_star;
    s.theta_slater = sp.theta_slater;
    s.x0 = Vec::Zero(inst.assets());
    s.x0(0) = 1.0;
    s.y0 = Vec::Zero(inst.sectors());
    s.theta0 = s.p.project_theta(SymMat::identity(inst.assets()).flatten() * inst.eps_psd);
  }
  return s;
}

json cache_key(const RunConfig& cfg) {
  json k;
  k["kind"] = cfg.is_structured() ? "structured" : "saddle";
  k["problem"] = cfg.problem;
  if (cfg.problem.rfind("portfolio", 0) == 0) {
    k["sectors"] = cfg.sectors;
    k["kappa"] = cfg.kappa;
    k["v"] = cfg.v;
    k["eps_psd"] = cfg.eps_psd;
    k["y_cap"] = cfg.y_cap;
    if (cfg.problem == "portfolio-synthetic") {
      k["n"] = cfg.n;
      k["seed"] = cfg.seed;
    } else {
      k["data_digest"] = file_digest(cfg.data);
    }
  }
  if (cfg.is_structured()) {
    k["epsilon"] = resolved_epsilon(cfg);
  } else {
    k["learner"] = {cfg.learner_tau_bar, cfg.learner_gamma0, cfg.learner_rho};
  }
  k["policy"] = {cfg.c_alpha, cfg.c_beta, cfg.rho, cfg.tau_bar, cfg.gamma0, cfg.growth};
  k["ref_tol"] = cfg.ref_tol;
  k["ref_iters"] = cfg.ref_iters;
  return k;
}

json reference_json(const ReferenceSolution& r) {
  return json{{"theta", vec_json(r.theta)}, {"x", vec_json(r.x)},
              {"y", vec_json(r.y)},         {"w", r.w},
              {"F", r.F},                   {"provenance", r.provenance},
              {"low_confidence", r.low_confidence},
              {"learner_residual", r.learner_residual},
              {"saddle_residual", r.saddle_residual}};
}

ReferenceSolution reference_from_json(const json& j) {
  ReferenceSolution r;
  r.theta = json_vec(j.at("theta"));
  r.x = json_vec(j.at("x"));
  r.y = json_vec(j.at("y"));
  r.w = j.at("w").get<double>();
  r.F = j.at("F").get<double>();
  r.provenance = j.at("provenance").get<std::string>();
  r.low_confidence = j.at("low_confidence").get<bool>();
  r.learner_residual = j.at("learner_residual").get<double>();
  r.saddle_residual = j.at("saddle_residual").get<double>();
  return r;
}

ReferenceSolution compute_structured_reference(const RunConfig& cfg, const StructuredSetup& s,
                                               double B) {
  if (s.analytic) {
    ReferenceSolution r = *s.analytic;
    r.provenance = "analytic";
    return r;
  }
  const MultiResult run = multisol_solve(s.p, backtracking_policy(cfg), cfg.ref_iters, s.x0,
                                         s.w0, s.y0, s.theta0, B);
  if (!run.ok()) std::rethrow_exception(run.error);
  ReferenceSolution r;
  r.provenance = "long-run";
  r.x = run.state.x;
  r.y = run.state.y;
  r.theta = run.state.theta;
  r.w = run.state.w;
  r.F = structured_lagrangian(s.p, r.x, r.w, r.y, r.theta, s.ell_star);
  r.learner_residual = run.state.aux_residual;
  r.saddle_residual = (run.state.x - run.state.x_prev).norm() +
                      (run.state.y - run.state.y_prev).norm() +
                      (run.state.theta - run.state.theta_prev).norm() +
                      std::abs(run.state.w - run.state.w_prev);
  r.low_confidence = r.saddle_residual > 1e-8;
  return r;
}

template <class Compute>
ReferenceSolution cached_reference(const RunConfig& cfg, Compute&& compute) {
  if (cfg.cache_dir.empty()) return compute();
  const std::string key = cache_key(cfg).dump();
  const std::filesystem::path file =
      std::filesystem::path(cfg.cache_dir) / ("ref-" + hex64(fnv1a(key)) + ".json");
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    try {
      const json j = json::parse(in);
      if (j.at("key").get<std::string>() == key) return reference_from_json(j.at("reference"));
    } catch (const json::exception&) {
      // Unreadable cache entries are recomputed and overwritten.
    }
  }
  ReferenceSolution ref = compute();
  std::error_code ec;
  std::filesystem::create_directories(cfg.cache_dir, ec);
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write reference cache '" + file.string() + "'");
  }
  out << json{{"key", key}, {"reference", reference_json(ref)}}.dump(1) << '\n';
  return ref;
}

ReferenceSolution saddle_reference(const RunConfig& cfg, const SaddleSetup& s) {
  return cached_reference(cfg, [&] {
    ReferenceOptions opt;
    opt.tol = cfg.ref_tol;
    opt.K_ref = cfg.ref_iters;
    opt.learner = learner_config(cfg);
    opt.policy = backtracking_policy(cfg);
    opt.analytic = s.analytic;
    return compute_reference(s.p, s.lp, s.theta0, s.w0, s.x0, s.y0, opt);
  });
}

void add_slope(json& summary, const std::string& name, const std::vector<TraceRow>& rows,
               double TraceRow::*field) {
  if (rows.size() < 20) {
    summary["slope_" + name] = nullptr;
    return;
  }
  const double k_hi = static_cast<double>(rows.back().k);
  const double k_lo = std::max(10.0, k_hi / 10.0);
  std::vector<std::pair<double, double>> series;
  for (const TraceRow& r : rows) {
    const double k = static_cast<double>(r.k);
    if (k < k_lo) continue;
    if (!(r.*field > 0.0)) {
      summary["slope_" + name] = nullptr;
      return;
    }
    series.emplace_back(k, r.*field);
  }
  try {
    summary["slope_" + name] = rate_fit(series, k_lo, k_hi);
  } catch (const std::exception&) {
    summary["slope_" + name] = nullptr;
  }
}

void finish_summary(RunOutput& out, const RunConfig& resolved) {
  json& s = out.summary;
  const json echo = resolved.to_json();
  for (const auto& [key, value] : echo.items()) s[key] = value;
  s["iterations"] = out.trace.rows.size();
  if (!out.trace.rows.empty()) {
    const TraceRow& last = out.trace.rows.back();
    s["final_subopt"] = last.subopt;
    s["final_infeas"] = last.infeas;
    s["final_learn_residual"] = last.learn_residual;
    s["final_gap"] = last.gap;
    s["initial_subopt"] = out.trace.rows.front().subopt;
    s["initial_infeas"] = out.trace.rows.front().infeas;
  }
  if (!out.sup_gap.empty()) s["final_sup_gap"] = out.sup_gap.back();
  add_slope(s, "subopt", out.trace.rows, &TraceRow::subopt);
  add_slope(s, "infeas", out.trace.rows, &TraceRow::infeas);
  add_slope(s, "gap", out.trace.rows, &TraceRow::gap);
  s["ref_provenance"] = out.reference.provenance;
  s["ref_low_confidence"] = out.reference.low_confidence;
  s["ref_F"] = out.reference.F;
  s["ref_learner_residual"] = out.reference.learner_residual;
  s["ref_saddle_residual"] = out.reference.saddle_residual;
  if (out.error) {
    s["status"] = "error";
    try {
      std::rethrow_exception(out.error);
    } catch (const std::exception& e) {
      s["error"] = e.what();
    }
  } else {
    s["status"] = "ok";
  }
}

RunOutput run_saddle(const RunConfig& cfg) {
  RunConfig resolved = cfg;
  SaddleSetup s = saddle_setup(cfg);
  RunOutput out;
  out.reference = saddle_reference(cfg, s);

  StepPolicy policy;
  if (cfg.solver == "naive") {
    if (resolved.alpha <= 0.0) resolved.alpha = s.p.constants.yx > 0.0 ? s.p.constants.yx : 1.0;
    if (resolved.beta <= 0.0) resolved.beta = std::sqrt(2.0) * s.p.constants.yy;
    policy = StepPolicy::constant(step_sizes_constant(s.p.constants, resolved.alpha, resolved.beta));
  } else {
    policy = backtracking_policy(cfg);
  }

  out.trace.header = {{"problem", cfg.problem}, {"solver", cfg.solver},
                      {"K", std::to_string(cfg.K)}, {"seed", std::to_string(cfg.seed)}};
  for (const auto& h : s.header) out.trace.header.push_back(h);
  out.trace.header.emplace_back("reference", out.reference.provenance);
  if (policy.mode == StepMode::Constant) {
    out.trace.header.emplace_back("alpha", format_double(resolved.alpha));
    out.trace.header.emplace_back("beta", format_double(resolved.beta));
  } else {
    out.trace.header.emplace_back("c_alpha", format_double(cfg.c_alpha));
    out.trace.header.emplace_back("c_beta", format_double(cfg.c_beta));
    out.trace.header.emplace_back("rho", format_double(cfg.rho));
    out.trace.header.emplace_back("tau_bar", format_double(cfg.tau_bar));
    out.trace.header.emplace_back("gamma0", format_double(cfg.gamma0));
  }

  Learner learner(s.lp, learner_config(cfg), s.theta0, s.w0);
  const ReferenceSolution& ref = out.reference;
  auto observer = [&](const IterationReport& r, const SolverState& st, const Learner& l) {
    const Vec xb = st.x_avg.mean();
    const Vec yb = st.y_avg.mean();
    TraceRow row;
    row.k = r.k + 1;
    row.tau = r.tau;
    row.sigma = r.sigma;
    row.eta = r.eta;
    row.backtracks = r.backtracks;
    row.subopt = suboptimality(xb, ref, s.p);
    row.infeas = s.p.infeasibility ? s.p.infeasibility(xb) : 0.0;
    row.learn_residual = learning_residual(l.theta(), l.theta_prev());
    row.gap = gap_surrogate(xb, yb, ref, s.p);
    out.trace.rows.push_back(row);
    if (s.p.sup_gap) out.sup_gap.push_back(s.p.sup_gap(xb, yb, ref.theta));
  };
  SolveResult res = solve(s.p, learner, policy, cfg.K, s.x0, s.y0, observer);
  out.reports = std::move(res.reports);
  out.error = res.error;
  if (policy.mode == StepMode::Constant) {
    out.summary["naive_tau"] = policy.tau;
    out.summary["naive_sigma"] = policy.sigma;
  }
  finish_summary(out, resolved);
  return out;
}

RunOutput run_structured(const RunConfig& cfg) {
  RunConfig resolved = cfg;
  resolved.eps_relax = resolved_epsilon(cfg);
  StructuredSetup s = structured_setup(cfg);
  const DualBound B = dual_bound_B(s.p, s.theta_slater);
  RunOutput out;
  out.reference = cached_reference(cfg, [&] { return compute_structured_reference(cfg, s, B.B); });

  out.trace.header = {{"problem", cfg.problem},
                      {"solver", cfg.solver},
                      {"K", std::to_string(cfg.K)},
                      {"seed", std::to_string(cfg.seed)},
                      {"epsilon", format_double(resolved.eps_relax)},
                      {"B", format_double(B.B)},
                      {"B_source", B.source},
                      {"reference", out.reference.provenance},
                      {"c_alpha", format_double(cfg.c_alpha)},
                      {"c_beta", format_double(cfg.c_beta)},
                      {"rho", format_double(cfg.rho)},
                      {"tau_bar", format_double(cfg.tau_bar)},
                      {"gamma0", format_double(cfg.gamma0)}};

  const ReferenceSolution& ref = out.reference;
  auto observer = [&](const IterationReport& r, const MultiState& st) {
    const Vec xb = st.x_avg.mean();
    const Vec yb = st.y_avg.mean();
    const Vec thb = st.theta_avg.mean();
    const double wb = st.w_avg.mean()(0);
    TraceRow row;
    row.k = r.k + 1;
    row.tau = r.tau;
    row.sigma = r.sigma;
    row.eta = r.eta;
    row.backtracks = r.backtracks;
    row.subopt = s.p.ell(thb) - s.ell_star;
    row.infeas = s.p.infeasibility ? s.p.infeasibility(xb) : 0.0;
    row.learn_residual = st.aux_residual;
    row.gap = gap_surrogate_structured(xb, wb, yb, thb, ref, s.p, s.ell_star);
    out.trace.rows.push_back(row);
  };
  MultiResult res = multisol_solve(s.p, backtracking_policy(cfg), cfg.K, s.x0, s.w0, s.y0,
                                   s.theta0, B.B, observer);
  out.reports = std::move(res.reports);
  out.error = res.error;
  out.summary["B"] = B.B;
  out.summary["B_source"] = B.source;
  out.summary["ell_star"] = s.ell_star;
  if (res.state.w_avg.count() > 0) out.summary["final_w_bar"] = res.w_bar;
  finish_summary(out, resolved);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write '" + path + "'");
  }
  out << text;
  if (!out) {
    throw IoError("write to '" + path + "' failed");
  }
}

}  // namespace

json RunConfig::to_json() const {
  json j = json::object();
  visit_fields(*this, [&](const char* name, const auto& field) { j[name] = field; });
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_json(*this, json{{key, value}});
}

void RunConfig::validate() const {
  static const std::vector<std::string> problems = {"portfolio-synthetic", "portfolio-csv",
                                                    "toy-saddle", "toy-multisol"};
  if (std::find(problems.begin(), problems.end(), problem) == problems.end()) {
    throw ConfigError("unknown problem '" + problem + "'");
  }
  if (solver != "naive" && solver != "aware" && solver != "multisol") {
    throw ConfigError("unknown solver '" + solver + "'");
  }
  if (K < 1) {
    throw ConfigError("K must be at least 1");
  }
  if (solver == "multisol" && problem == "toy-saddle") {
    throw ConfigError("solver multisol needs a structured problem (toy-multisol or portfolio)");
  }
  if (solver != "multisol" && problem == "toy-multisol") {
    throw ConfigError("problem toy-multisol runs only with solver multisol");
  }
  if (problem == "portfolio-csv" && data.empty()) {
    throw ConfigError("problem portfolio-csv needs a data path");
  }
  if (problem == "portfolio-synthetic" && (n < 2 || n % 2 != 0)) {
    throw ConfigError("portfolio-synthetic needs an even n >= 2 (got " + std::to_string(n) + ")");
  }
  if (problem.rfind("portfolio", 0) == 0 && (sectors < 1 || (problem == "portfolio-synthetic" && sectors > n))) {
    throw ConfigError("sector count must lie in [1, n]");
  }
  if (problem == "toy-multisol" && resolved_epsilon(*this) >= 0.5) {
    throw ConfigError("toy-multisol needs epsilon < 0.5");
  }
  if (!(rho > 0.0 && rho < 1.0) || !(learner_rho > 0.0 && learner_rho < 1.0)) {
    throw ConfigError("shrink factors must lie in (0, 1)");
  }
  if (!(tau_bar > 0.0) || !(gamma0 > 0.0) || !(learner_tau_bar > 0.0) || !(learner_gamma0 > 0.0)) {
    throw ConfigError("initial steps and accumulation factors must be positive");
  }
  if (!(ref_tol > 0.0) || ref_iters < 1) {
    throw ConfigError("reference tolerance and iteration budget must be positive");
  }
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ReferenceSolution reference_for(const RunConfig& raw) {
  const RunConfig cfg = raw.resolved();
  if (cfg.is_structured()) {
    StructuredSetup s = structured_setup(cfg);
    const DualBound B = dual_bound_B(s.p, s.theta_slater);
    return cached_reference(cfg, [&] { return compute_structured_reference(cfg, s, B.B); });
  }
  return saddle_reference(cfg, saddle_setup(cfg));
}

RunConfig RunConfig::resolved() const {
  validate();
  RunConfig r = *this;
  const bool multi = is_structured();
  if (r.c_alpha < 0.0) r.c_alpha = multi ? 1.0 / 3.0 : 1.0;
  if (r.c_beta < 0.0) r.c_beta = multi ? 1.0 / 3.0 : 0.0;
  if (!(r.c_alpha > 0.0) || r.c_alpha + r.c_beta > 1.0) {
    throw ConfigError("c_alpha must be positive with c_alpha + c_beta <= 1");
  }
  if (multi && !(r.c_beta > 0.0 && r.c_alpha + r.c_beta < 1.0)) {
    throw ConfigError("multisol needs c_beta > 0 and c_alpha + c_beta < 1");
  }
  return r;
}

RunOutput run_experiment(const RunConfig& raw) {
  const RunConfig cfg = raw.resolved();
  return cfg.is_structured() ? run_structured(cfg) : run_saddle(cfg);
}

void generate_dataset(const RunConfig& cfg) {
  if (cfg.problem != "portfolio-synthetic") {
    throw ConfigError("gen needs problem portfolio-synthetic");
  }
  if (cfg.n < 2 || cfg.n % 2 != 0) {
    throw ConfigError("gen needs an even n >= 2 (got " + std::to_string(cfg.n) + ")");
  }
  if (cfg.data.empty()) {
    throw ConfigError("gen needs --data");
  }
  SyntheticParams sp;
  sp.n = cfg.n;
  sp.sectors = std::min<long>(cfg.sectors, cfg.n);
  sp.kappa = cfg.kappa;
  sp.v = cfg.v;
  sp.eps_psd = cfg.eps_psd;
  sp.y_cap = cfg.y_cap;
  sp.seed = cfg.seed;
  const SyntheticData d = synthetic_instance(sp);
  write_returns_csv(cfg.data, d.samples);
  const json meta = {{"n", cfg.n},
                     {"p", d.samples.periods()},
                     {"seed", cfg.seed},
                     {"covariance", "sigma_ij = max(1 - |i - j| / 10, 0)"},
                     {"mu0", vec_json(d.mu0)}};
  write_text(cfg.data + ".meta.json", meta.dump(1) + "\n");
}

void compare_traces(const std::vector<std::string>& paths, const std::vector<std::string>& labels,
                    const std::string& out_path) {
  if (paths.size() < 2) {
    throw ConfigError("compare needs at least two traces");
  }
  if (!labels.empty() && labels.size() != paths.size()) {
    throw ConfigError("compare needs one label per trace");
  }
  std::vector<Trace> traces;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!std::filesystem::exists(paths[i])) {
      throw IoError("trace '" + paths[i] + "' does not exist");
    }
    traces.push_back(read_trace_csv(paths[i]));
    std::string name = labels.empty() ? "" : labels[i];
    if (name.empty()) {
      for (const auto& [k, v] : traces.back().header) {
        if (k == "solver") name = v;
      }
    }
    if (name.empty()) name = "run" + std::to_string(i + 1);
    names.push_back(name);
  }
  for (std::size_t i = 1; i < traces.size(); ++i) {
    bool same = traces[i].rows.size() == traces[0].rows.size();
    for (std::size_t r = 0; same && r < traces[0].rows.size(); ++r) {
      same = traces[i].rows[r].k == traces[0].rows[r].k;
    }
    if (!same) {
      throw DataError(DataError::Kind::Shape, 0, 0,
                      "trace '" + paths[i] + "' has a different k-grid from '" + paths[0] + "'");
    }
  }
  std::ostringstream out;
  out << 'k';
  static const char* metrics[] = {"tau", "sigma", "eta", "backtracks", "subopt",
                                  "infeas", "learn_residual", "gap"};
  for (const auto& name : names) {
    for (const char* m : metrics) out << ',' << m << '_' << name;
  }
  out << '\n';
  for (std::size_t r = 0; r < traces[0].rows.size(); ++r) {
    out << traces[0].rows[r].k;
    for (const Trace& t : traces) {
      const TraceRow& row = t.rows[r];
      out << ',' << format_double(row.tau) << ',' << format_double(row.sigma) << ','
          << format_double(row.eta) << ',' << row.backtracks << ',' << format_double(row.subopt)
          << ',' << format_double(row.infeas) << ',' << format_double(row.learn_residual) << ','
          << format_double(row.gap);
    }
    out << '\n';
  }
  write_text(out_path, out.str());
}

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> problem, solver, data, out_trace, out_summary, cache_dir;
  std::optional<long> iters, n, sectors;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON configuration file");
  cmd->add_option("--problem", f.problem,
                  "portfolio-synthetic | portfolio-csv | toy-saddle | toy-multisol");
  cmd->add_option("--solver", f.solver, "naive | aware | multisol");
  cmd->add_option("--iters", f.iters, "iteration budget K");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--data", f.data, "returns CSV path");
  cmd->add_option("--out-trace", f.out_trace, "trace CSV output path");
  cmd->add_option("--out-summary", f.out_summary, "summary JSON output path");
  cmd->add_option("--cache-dir", f.cache_dir, "reference cache directory");
  cmd->add_option("--n", f.n, "number of assets (synthetic)");
  cmd->add_option("--sectors", f.sectors, "number of sectors");
  cmd->add_option("--set", f.overrides, "key=value configuration override")->take_all();
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) {
      throw IoError("cannot open config '" + f.config_path + "'");
    }
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw ConfigError("config '" + f.config_path + "' is not valid JSON");
    }
    apply_json(cfg, j);
  }
  if (f.problem) cfg.problem = *f.problem;
  if (f.solver) cfg.solver = *f.solver;
  if (f.iters) cfg.K = *f.iters;
  if (f.seed) cfg.seed = *f.seed;
  if (f.data) cfg.data = *f.data;
  if (f.out_trace) cfg.out_trace = *f.out_trace;
  if (f.out_summary) cfg.out_summary = *f.out_summary;
  if (f.cache_dir) cfg.cache_dir = *f.cache_dir;
  if (f.n) cfg.n = *f.n;
  if (f.sectors) cfg.sectors = *f.sectors;
  for (const auto& o : f.overrides) cfg.set(o);
  return cfg;
}

int cmd_solve(const RunConfig& cfg) {
  const RunOutput out = run_experiment(cfg);
  if (!cfg.out_trace.empty()) write_trace_csv(cfg.out_trace, out.trace);
  const std::string summary = out.summary.dump(1) + "\n";
  if (!cfg.out_summary.empty()) {
    write_text(cfg.out_summary, summary);
  } else {
    std::cout << summary;
  }
  if (out.error) std::rethrow_exception(out.error);
  return kExitOk;
}

int cmd_reference(const RunConfig& cfg) {
  const ReferenceSolution ref = reference_for(cfg);
  const std::string text = reference_json(ref).dump(1) + "\n";
  if (!cfg.out_summary.empty()) {
    write_text(cfg.out_summary, text);
  } else {
    std::cout << text;
  }
  return kExitOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Solvers for saddle-point problems with a learned parameter"};
  app.require_subcommand(1);

  CommonFlags gen_flags, solve_flags, ref_flags;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic returns dataset");
  add_common(gen, gen_flags);
  CLI::App* solve_cmd = app.add_subcommand("solve", "run one solver and write trace and summary");
  add_common(solve_cmd, solve_flags);
  CLI::App* ref = app.add_subcommand("reference", "compute (and cache) the reference solution");
  add_common(ref, ref_flags);

  std::vector<std::string> cmp_traces, cmp_labels;
  std::string cmp_out;
  CLI::App* cmp = app.add_subcommand("compare", "join traces into one wide CSV");
  cmp->add_option("--trace", cmp_traces, "trace CSV (repeat)")->required();
  cmp->add_option("--label", cmp_labels, "label per trace (repeat)");
  cmp->add_option("--out", cmp_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      generate_dataset(resolve(gen_flags));
      return kExitOk;
    }
    if (solve_cmd->parsed()) return cmd_solve(resolve(solve_flags));
    if (ref->parsed()) return cmd_reference(resolve(ref_flags));
    if (cmp->parsed()) {
      compare_traces(cmp_traces, cmp_labels, cmp_out);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const InfeasiblePointError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}

}  // namespace misspec
