#pragma once

#include "misspec/problem.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace misspec {

struct ReturnsDataset {
  Mat returns;  // T x n
  std::vector<std::string> tickers;

  Index periods() const { return returns.rows(); }
  Index assets() const { return returns.cols(); }
};

/// First row: ticker labels. Every following row: one period of decimal returns.
ReturnsDataset load_returns_csv(const std::string& path);
void write_returns_csv(const std::string& path, const ReturnsDataset& ds);

struct SampleStats {
  Vec mean;
  SymMat cov;  // unbiased, divisor T - 1
};
SampleStats sample_stats(const ReturnsDataset& ds);

struct PortfolioInstance {
  Vec mu;
  double kappa = 0.1;
  Mat A;  // s x n, 0/1 sector membership
  Vec b;
  SymMat S;
  double v = 0.4;
  double eps_psd = 1e-2;
  double y_cap = 1e3;

  Index assets() const { return mu.size(); }
  Index sectors() const { return A.rows(); }
  void validate() const;
};

/// s contiguous groups of near-equal size, caps b_j = 2 / s.
void assign_sectors(PortfolioInstance& inst, Index s);

PortfolioInstance instance_from_returns(const ReturnsDataset& ds, Index sectors);

/// Portable generator: mt19937_64 for bits, own transforms for uniforms and normals,
/// so that a seed yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SyntheticParams {
  Index n = 20;
  Index sectors = 10;
  double kappa = 0.1;
  double v = 0.4;
  double eps_psd = 1e-2;
  double y_cap = 1e3;
  std::uint64_t seed = 42;
};

struct SyntheticData {
  PortfolioInstance instance;
  SymMat sigma0;
  Vec mu0;
  ReturnsDataset samples;  // p = n / 2 draws from N(mu0, Sigma0)
};

/// Banded covariance sigma_ij = max(1 - |i - j| / 10, 0).
SymMat banded_covariance(Index n);

SyntheticData synthetic_instance(const SyntheticParams& params);

/// Largest singular value by power iteration on A^T A.
double spectral_norm(const Mat& A, int max_iter = 1000, double tol = 1e-14);

double infeasibility(const Vec& x, const Mat& A, const Vec& b);

/// Static over-bound on ||Sigma||_2 along the learner trajectory: 2 (||S||_2 + v n + eps_psd).
double markowitz_lxx_bound(const PortfolioInstance& inst);

/// Phi(x, y; Sigma) = x^T Sigma x / 2 - kappa mu^T x + y^T (A x - b), x on the simplex,
/// y in [0, y_cap]^s, Sigma passed flattened.
SaddleProblem build_markowitz_sp(const PortfolioInstance& inst);

/// ell(Sigma, W) = ||Sigma - S||_F^2 / 2 - <W, Sigma - eps I>, f' = v * offdiag l1,
/// h' = indicator of the PSD cone; both blocks flattened.
LearningProblem build_scs_learning(const PortfolioInstance& inst);

/// Structured variant for the multiple-solutions solver:
///   g1 = x^T Sigma x / 2 - kappa mu^T x, g2 = y^T (A x - b), ell(Sigma) = ||Sigma - S||_F^2 / 2,
///   Theta = {eps_psd I <= Sigma <= lambda_max I} with lambda_max = 2 ||S||_2 + eps_psd.
struct StructuredPortfolio {
  StructuredProblem problem;
  double lambda_max = 0.0;
  double ell_star = 0.0;
  Vec theta_slater;  // argmin of ell over Theta
};
StructuredPortfolio build_markowitz_structured(const PortfolioInstance& inst, double epsilon);

struct ToySaddle {
  SaddleProblem saddle;
  LearningProblem learning;
  Vec theta0, x0, y0;
  Vec theta_star, x_star, y_star;
  double F_star = 0.0;
};

/// Phi = theta x y + 2x - 2y on [-5, 5]^2, learner ell = (theta - 2)^2 / 2 on Theta = [1, 3].
ToySaddle toy_saddle_instance();

struct ToyMultisol {
  StructuredProblem problem;
  double ell_star = 0.0;
  Vec theta_slater;
  Vec x0, y0, theta0;
  // Saddle point of the epsilon-relaxed pessimistic problem.
  Vec x_star, y_star, theta_star;
  double w_star = 0.0;
};

/// g1 = theta^T x, g2 = y^T (x - b) with b = (0.7, 0.7), x on the 2-simplex, y in [0, 10]^2,
/// Theta = [-2, 2]^2, ell = ||P theta - q||^2 / 2 with P = diag(1, 0), q = (1, 0).
ToyMultisol toy_multisol_instance(double epsilon);

}  // namespace misspec
