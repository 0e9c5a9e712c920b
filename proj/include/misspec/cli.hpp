#pragma once

#include "misspec/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

namespace misspec {

struct RunConfig {
  std::string problem = "toy-saddle";  // portfolio-synthetic | portfolio-csv | toy-saddle | toy-multisol
  std::string solver = "aware";        // naive | aware | multisol
  long K = 1000;
  std::uint64_t seed = 42;

  // Learning-aware / structured solver. Negative c_alpha, c_beta select the
  // solver default: (1, 0) for aware, (1/3, 1/3) for multisol.
  double c_alpha = -1.0;
  double c_beta = -1.0;
  double rho = 0.5;
  double tau_bar = 1.0;
  double gamma0 = 1.0;
  double growth = 1.0;
  int backtrack_cap = 60;

  // Naive solver; values <= 0 select alpha = L_yx and beta = sqrt(2) L_yy.
  double alpha = 0.0;
  double beta = 0.0;

  // Learner.
  double learner_tau_bar = 0.5;
  double learner_gamma0 = 1.0;
  double learner_rho = 0.5;

  // Portfolio instance.
  long n = 20;
  long sectors = 10;
  double kappa = 0.1;
  double v = 0.4;
  double eps_psd = 1e-2;
  double y_cap = 1e3;

  // Structured solver relaxation; <= 0 selects 1 / sqrt(K).
  double eps_relax = 0.0;

  // Reference solution.
  double ref_tol = 1e-10;
  long ref_iters = 10000;

  std::string data;
  std::string out_trace;
  std::string out_summary;
  std::string cache_dir;  // empty disables the reference cache

  nlohmann::json to_json() const;
  /// Unknown keys and ill-typed values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  /// Applies one "key=value" override, with the value parsed as JSON when possible.
  void set(const std::string& assignment);
  void validate() const;
  /// Copy with the auto-selected values filled in; throws ConfigError when invalid.
  RunConfig resolved() const;
  bool is_structured() const { return solver == "multisol"; }
};

struct RunOutput {
  Trace trace;
  nlohmann::json summary;
  ReferenceSolution reference;
  std::vector<IterationReport> reports;
  std::vector<double> sup_gap;  // exact gap per row when the instance provides it
  std::exception_ptr error;     // partial trace is kept when set
};

/// Builds the instance, reference and solver described by cfg and runs K iterations.
RunOutput run_experiment(const RunConfig& cfg);

/// Reference for cfg, read from cfg.cache_dir when a matching record exists.
ReferenceSolution reference_for(const RunConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Joins traces with identical k-grids into one wide table with a metric block per label.
void compare_traces(const std::vector<std::string>& paths, const std::vector<std::string>& labels,
                    const std::string& out_path);

/// Writes the synthetic returns to cfg.data and metadata to cfg.data + ".meta.json".
void generate_dataset(const RunConfig& cfg);

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

int cli_main(int argc, char** argv);

}  // namespace misspec
