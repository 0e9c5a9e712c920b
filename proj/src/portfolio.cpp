#include "misspec/portfolio.hpp"

#include "misspec/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace misspec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

}  // namespace

ReturnsDataset load_returns_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open returns file '" + path + "'");
  }
  std::string line;
  std::vector<std::string> header;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) {
      header = split_commas(trim(line));
      break;
    }
  }
  if (header.empty()) {
    throw DataError(DataError::Kind::Empty, 0, 0, "returns file '" + path + "' is empty");
  }
  std::vector<std::vector<double>> body;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto cells = split_commas(t);
    if (cells.size() != header.size()) {
      throw DataError(DataError::Kind::Ragged, row, static_cast<long>(cells.size()),
                      "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                          " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], values[c])) {
        throw DataError(DataError::Kind::NonNumeric, row, static_cast<long>(c + 1),
                        "non-numeric cell '" + cells[c] + "' at row " + std::to_string(row) +
                            ", column " + std::to_string(c + 1));
      }
    }
    body.push_back(std::move(values));
  }
  if (body.empty()) {
    throw DataError(DataError::Kind::Empty, 0, 0, "returns file '" + path + "' has no data rows");
  }
  ReturnsDataset ds;
  ds.tickers = std::move(header);
  ds.returns.resize(static_cast<Index>(body.size()), static_cast<Index>(ds.tickers.size()));
  for (std::size_t r = 0; r < body.size(); ++r) {
    for (std::size_t c = 0; c < body[r].size(); ++c) {
      ds.returns(static_cast<Index>(r), static_cast<Index>(c)) = body[r][c];
    }
  }
  return ds;
}

void write_returns_csv(const std::string& path, const ReturnsDataset& ds) {
  if (static_cast<Index>(ds.tickers.size()) != ds.assets()) {
    throw std::invalid_argument("write_returns_csv: ticker count does not match columns");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write returns file '" + path + "'");
  }
  for (std::size_t i = 0; i < ds.tickers.size(); ++i) {
    out << (i ? "," : "") << ds.tickers[i];
  }
  out << '\n';
  char buf[32];
  for (Index r = 0; r < ds.periods(); ++r) {
    for (Index c = 0; c < ds.assets(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.returns(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("write to '" + path + "' failed");
  }
}

SampleStats sample_stats(const ReturnsDataset& ds) {
  const Index T = ds.periods();
  if (T < 2) {
    throw std::invalid_argument("sample_stats: need at least 2 periods");
  }
  SampleStats st;
  st.mean = ds.returns.colwise().mean().transpose();
  const Mat centered = ds.returns.rowwise() - st.mean.transpose();
  st.cov = SymMat(centered.transpose() * centered / static_cast<double>(T - 1));
  return st;
}

void PortfolioInstance::validate() const {
  const Index n = assets();
  if (n < 1 || S.size() != n || A.cols() != n || A.rows() != b.size()) {
    throw std::invalid_argument("portfolio instance: inconsistent dimensions");
  }
  if ((A.array() != 0.0 && A.array() != 1.0).any()) {
    throw std::invalid_argument("portfolio instance: sector matrix must be 0/1");
  }
  for (Index j = 0; j < A.rows(); ++j) {
    if (A.row(j).sum() == 0.0) {
      throw std::invalid_argument("portfolio instance: sector " + std::to_string(j) + " is empty");
    }
  }
  if ((b.array() <= 0.0).any() || !(kappa > 0.0) || v < 0.0 || !(eps_psd > 0.0) ||
      !(y_cap > 0.0)) {
    throw std::invalid_argument("portfolio instance: need b > 0, kappa > 0, v >= 0, eps_psd > 0, y_cap > 0");
  }
}

void assign_sectors(PortfolioInstance& inst, Index s) {
  const Index n = inst.assets();
  if (s < 1 || s > n) {
    throw std::invalid_argument("assign_sectors: need 1 <= s <= n");
  }
  inst.A = Mat::Zero(s, n);
  for (Index i = 0; i < n; ++i) {
    inst.A(i * s / n, i) = 1.0;
  }
  inst.b = Vec::Constant(s, 2.0 / static_cast<double>(s));
}

PortfolioInstance instance_from_returns(const ReturnsDataset& ds, Index sectors) {
  const SampleStats st = sample_stats(ds);
  PortfolioInstance inst;
  inst.mu = st.mean;
  inst.S = st.cov;
  assign_sectors(inst, sectors);
  return inst;
}

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

SymMat banded_covariance(Index n) {
  Mat m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      m(i, j) = std::max(1.0 - static_cast<double>(std::abs(i - j)) / 10.0, 0.0);
    }
  }
  return SymMat(m);
}

SyntheticData synthetic_instance(const SyntheticParams& params) {
  const Index n = params.n;
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("synthetic_instance: n must be even and at least 2");
  }
  SyntheticData d;
  d.sigma0 = banded_covariance(n);
  Rng rng(params.seed);
  d.mu0.resize(n);
  for (Index i = 0; i < n; ++i) d.mu0(i) = rng.uniform(-1.0, 1.0);

  const Mat jittered = d.sigma0.matrix() + 1e-12 * Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(jittered);
  if (llt.info() != Eigen::Success) {
    throw NumericError("synthetic_instance: Cholesky factorization failed");
  }
  const Mat L = llt.matrixL();
  const Index p = n / 2;
  d.samples.returns.resize(p, n);
  Vec z(n);
  for (Index r = 0; r < p; ++r) {
    for (Index i = 0; i < n; ++i) z(i) = rng.normal();
    d.samples.returns.row(r) = (d.mu0 + L * z).transpose();
  }
  d.samples.tickers.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) d.samples.tickers.push_back("A" + std::to_string(i + 1));

  const SampleStats st = sample_stats(d.samples);
  d.instance.mu = d.mu0;
  d.instance.S = st.cov;
  d.instance.kappa = params.kappa;
  d.instance.v = params.v;
  d.instance.eps_psd = params.eps_psd;
  d.instance.y_cap = params.y_cap;
  assign_sectors(d.instance, params.sectors);
  d.instance.validate();
  return d;
}

double spectral_norm(const Mat& A, int max_iter, double tol) {
  if (A.size() == 0) return 0.0;
  const Mat G = A.transpose() * A;
  Vec v = Vec::Ones(G.cols()) / std::sqrt(static_cast<double>(G.cols()));
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec next = G * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double change = std::abs(norm - lambda);
    lambda = norm;
    v = std::move(next);
    if (change <= tol * lambda) break;
  }
  return std::sqrt(lambda);
}

double infeasibility(const Vec& x, const Mat& A, const Vec& b) {
  return (A * x - b).cwiseMax(0.0).norm();
}

double markowitz_lxx_bound(const PortfolioInstance& inst) {
  const double s_norm = spectral_norm(inst.S.matrix());
  return 2.0 * (s_norm + inst.v * static_cast<double>(inst.assets()) + inst.eps_psd);
}

namespace {

Mat unflatten_mat(const Vec& flat, Index n) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), n, n);
}

Vec flatten_mat(const Mat& m) {
  Vec out(m.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.data(), m.rows(), m.cols()) = m;
  return out;
}

}  // namespace

SaddleProblem build_markowitz_sp(const PortfolioInstance& inst) {
  inst.validate();
  const Index n = inst.assets();
  const Index s = inst.sectors();
  const Vec kmu = inst.kappa * inst.mu;
  const Mat A = inst.A;
  const Vec b = inst.b;

  SaddleProblem p;
  p.name = "markowitz";
  p.dim_x = n;
  p.dim_y = s;
  p.dim_theta = n * n;
  p.phi = [n, kmu, A, b](const Vec& x, const Vec& y, const Vec& th) {
    const Mat sig = unflatten_mat(th, n);
    return 0.5 * x.dot(sig * x) - kmu.dot(x) + y.dot(A * x - b);
  };
  p.grad_x = [n, kmu, A](const Vec& x, const Vec& y, const Vec& th) -> Vec {
    return unflatten_mat(th, n) * x - kmu + A.transpose() * y;
  };
  p.grad_y = [A, b](const Vec& x, const Vec&, const Vec&) -> Vec { return A * x - b; };
  p.f = simplex_indicator();
  p.h = box_indicator(0.0, inst.y_cap);
  p.constants.xx = markowitz_lxx_bound(inst);
  p.constants.yx = spectral_norm(A);
  p.constants.yy = 0.0;
  p.constants.x_theta = 1.0;
  p.constants.y_theta = 0.0;
  p.constants.phi_theta = 0.5;
  p.primal_objective = [n, kmu](const Vec& x, const Vec& th) {
    return 0.5 * x.dot(unflatten_mat(th, n) * x) - kmu.dot(x);
  };
  p.infeasibility = [A, b](const Vec& x) { return misspec::infeasibility(x, A, b); };
  return p;
}

LearningProblem build_scs_learning(const PortfolioInstance& inst) {
  inst.validate();
  const Index n = inst.assets();
  const Vec s_flat = inst.S.flatten();
  const Vec eps_flat = flatten_mat(inst.eps_psd * Mat::Identity(n, n));

  LearningProblem lp;
  lp.name = "scs";
  lp.dim_theta = n * n;
  lp.dim_w = n * n;
  lp.ell = [s_flat, eps_flat](const Vec& th, const Vec& w) {
    return 0.5 * (th - s_flat).squaredNorm() - w.dot(th - eps_flat);
  };
  lp.grad_theta = [s_flat](const Vec& th, const Vec& w) -> Vec { return th - s_flat - w; };
  lp.grad_w = [eps_flat](const Vec& th, const Vec&) -> Vec { return -(th - eps_flat); };
  lp.f = offdiag_l1(inst.v);
  lp.h = psd_indicator();
  lp.modulus = 1.0;
  return lp;
}

StructuredPortfolio build_markowitz_structured(const PortfolioInstance& inst, double epsilon) {
  inst.validate();
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("build_markowitz_structured: epsilon must be positive");
  }
  const Index n = inst.assets();
  const Vec kmu = inst.kappa * inst.mu;
  const Mat A = inst.A;
  const Vec b = inst.b;
  const Vec s_flat = inst.S.flatten();
  const double lo = inst.eps_psd;

  StructuredPortfolio out;
  out.lambda_max = 2.0 * spectral_norm(inst.S.matrix()) + inst.eps_psd;
  const double hi = out.lambda_max;
  out.theta_slater = project_spectral_box(inst.S, lo, hi).flatten();
  out.ell_star = 0.5 * (out.theta_slater - s_flat).squaredNorm();

  StructuredProblem& p = out.problem;
  p.name = "markowitz-structured";
  p.dim_x = n;
  p.dim_y = inst.sectors();
  p.dim_theta = n * n;
  p.g1 = [n, kmu](const Vec& x, const Vec& th) {
    return 0.5 * x.dot(unflatten_mat(th, n) * x) - kmu.dot(x);
  };
  p.g1_grad_x = [n, kmu](const Vec& x, const Vec& th) -> Vec {
    return unflatten_mat(th, n) * x - kmu;
  };
  p.g1_grad_theta = [](const Vec& x, const Vec&) -> Vec {
    return 0.5 * flatten_mat(x * x.transpose());
  };
  p.g2 = [A, b](const Vec& x, const Vec& y) { return y.dot(A * x - b); };
  p.g2_grad_x = [A](const Vec&, const Vec& y) -> Vec { return A.transpose() * y; };
  p.g2_grad_y = [A, b](const Vec& x, const Vec&) -> Vec { return A * x - b; };
  p.ell = [s_flat](const Vec& th) { return 0.5 * (th - s_flat).squaredNorm(); };
  p.ell_grad = [s_flat](const Vec& th) -> Vec { return th - s_flat; };
  p.ell_grad_lipschitz = 1.0;
  p.project_theta = [lo, hi](const Vec& th) -> Vec {
    return project_spectral_box(SymMat::unflatten(th), lo, hi).flatten();
  };
  p.f = simplex_indicator();
  p.h = box_indicator(0.0, inst.y_cap);
  p.epsilon = epsilon;
  // On the simplex, x^T Sigma_s x / 2 - inf_Theta x^T Sigma x / 2 <= lambda_max / 2.
  p.dual_bound_numerator = [hi](const Vec&) { return 0.5 * hi; };
  p.infeasibility = [A, b](const Vec& x) { return misspec::infeasibility(x, A, b); };

  const double B = 1.0 + 0.5 * hi / epsilon;
  const double s_norm = spectral_norm(inst.S.matrix());
  StructuredConstants& c = p.constants;
  c.g1_xx = hi;
  c.g1_xtheta = 1.0;
  c.g2_xx = 0.0;
  c.g2_xy = spectral_norm(A);
  c.g2_yx = c.g2_xy;
  c.g2_yy = 0.0;
  c.g1_thetax = 1.0;
  c.g1_thetatheta = 0.0;
  c.ell_theta = B;
  c.ell_w = std::sqrt(static_cast<double>(n)) * (hi + s_norm);
  return out;
}

ToySaddle toy_saddle_instance() {
  ToySaddle t;
  SaddleProblem& p = t.saddle;
  p.name = "toy-saddle";
  p.dim_x = 1;
  p.dim_y = 1;
  p.dim_theta = 1;
  p.phi = [](const Vec& x, const Vec& y, const Vec& th) {
    return th(0) * x(0) * y(0) + 2.0 * x(0) - 2.0 * y(0);
  };
  p.grad_x = [](const Vec&, const Vec& y, const Vec& th) -> Vec {
    return Vec::Constant(1, th(0) * y(0) + 2.0);
  };
  p.grad_y = [](const Vec& x, const Vec&, const Vec& th) -> Vec {
    return Vec::Constant(1, th(0) * x(0) - 2.0);
  };
  p.f = box_indicator(-5.0, 5.0);
  p.h = box_indicator(-5.0, 5.0);
  p.constants.xx = 0.0;
  p.constants.yx = 3.0;  // sup |theta| over Theta = [1, 3]
  p.constants.yy = 0.0;
  p.constants.x_theta = 5.0;
  p.constants.y_theta = 5.0;
  p.constants.phi_theta = 25.0;
  // F(x; theta) = sup_{|y| <= 5} L(x, y; theta)
  p.primal_objective = [](const Vec& x, const Vec& th) {
    return 2.0 * x(0) + 5.0 * std::abs(th(0) * x(0) - 2.0);
  };
  p.infeasibility = [](const Vec&) { return 0.0; };
  p.sup_gap = [](const Vec& xb, const Vec& yb, const Vec& th) {
    const double sup_y = 2.0 * xb(0) + 5.0 * std::abs(th(0) * xb(0) - 2.0);
    const double inf_x = -5.0 * std::abs(th(0) * yb(0) + 2.0) - 2.0 * yb(0);
    return sup_y - inf_x;
  };

  LearningProblem& lp = t.learning;
  lp.name = "toy-quadratic";
  lp.dim_theta = 1;
  lp.dim_w = 0;
  lp.ell = [](const Vec& th, const Vec&) { return 0.5 * (th(0) - 2.0) * (th(0) - 2.0); };
  lp.grad_theta = [](const Vec& th, const Vec&) -> Vec { return Vec::Constant(1, th(0) - 2.0); };
  lp.grad_w = [](const Vec&, const Vec&) -> Vec { return Vec(); };
  lp.f = box_indicator(1.0, 3.0);
  lp.h = zero_function();
  lp.modulus = 1.0;

  t.theta0 = Vec::Constant(1, 1.0);
  t.x0 = Vec::Zero(1);
  t.y0 = Vec::Zero(1);
  t.theta_star = Vec::Constant(1, 2.0);
  t.x_star = Vec::Constant(1, 1.0);
  t.y_star = Vec::Constant(1, -1.0);
  t.F_star = 2.0;
  return t;
}

ToyMultisol toy_multisol_instance(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw std::invalid_argument("toy_multisol_instance: need 0 < epsilon < 0.5");
  }
  ToyMultisol t;
  StructuredProblem& p = t.problem;
  const Vec b = Vec::Constant(2, 0.7);
  Mat P = Mat::Zero(2, 2);
  P(0, 0) = 1.0;
  const Vec q = (Vec(2) << 1.0, 0.0).finished();

  p.name = "toy-multisol";
  p.dim_x = 2;
  p.dim_y = 2;
  p.dim_theta = 2;
  p.g1 = [](const Vec& x, const Vec& th) { return th.dot(x); };
  p.g1_grad_x = [](const Vec&, const Vec& th) -> Vec { return th; };
  p.g1_grad_theta = [](const Vec& x, const Vec&) -> Vec { return x; };
  p.g2 = [b](const Vec& x, const Vec& y) { return y.dot(x - b); };
  p.g2_grad_x = [](const Vec&, const Vec& y) -> Vec { return y; };
  p.g2_grad_y = [b](const Vec& x, const Vec&) -> Vec { return x - b; };
  p.ell = [P, q](const Vec& th) { return 0.5 * (P * th - q).squaredNorm(); };
  p.ell_grad = [P, q](const Vec& th) -> Vec { return P.transpose() * (P * th - q); };
  p.ell_grad_lipschitz = 1.0;  // ||P^T P||_2
  p.project_theta = [](const Vec& th) -> Vec { return project_box(th, -2.0, 2.0); };
  p.f = simplex_indicator();
  p.h = box_indicator(0.0, 10.0);
  p.epsilon = epsilon;
  // sup over the simplex of theta_s^T x + 2 (inf over the box of theta^T x is -2).
  p.dual_bound_numerator = [](const Vec& ts) { return ts.maxCoeff() + 2.0; };
  p.infeasibility = [b](const Vec& x) { return (x - b).cwiseMax(0.0).norm(); };

  t.ell_star = 0.0;
  t.theta_slater = q;
  const double B = 1.0 + 3.0 / epsilon;
  StructuredConstants& c = p.constants;
  c.g1_xx = 0.0;
  c.g1_xtheta = 1.0;
  c.g2_xx = 0.0;
  c.g2_xy = 1.0;
  c.g2_yx = 1.0;
  c.g2_yy = 0.0;
  c.g1_thetax = 1.0;
  c.g1_thetatheta = 0.0;
  c.ell_theta = B;
  c.ell_w = 3.0;  // sup |theta_1 - 1| over Theta

  t.x0 = (Vec(2) << 0.5, 0.5).finished();
  t.y0 = Vec::Zero(2);
  t.theta0 = Vec::Zero(2);

  // x1 <= 0.7 binds; theta_1 = 1 + r with r = sqrt(2 epsilon) hits the relaxed level set.
  const double r = std::sqrt(2.0 * epsilon);
  t.x_star = (Vec(2) << 0.7, 0.3).finished();
  t.y_star = (Vec(2) << 1.0 - r, 0.0).finished();
  t.theta_star = (Vec(2) << 1.0 + r, 2.0).finished();
  t.w_star = 0.7 / r;
  return t;
}

}  // namespace misspec
