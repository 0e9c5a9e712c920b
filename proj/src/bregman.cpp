#include "misspec/bregman.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace misspec {

double bregman_dist(BregmanGeometry geom, const Vec& u, const Vec& v) {
  require_same_dim(u, v, "bregman_dist");
  switch (geom) {
    case BregmanGeometry::SquaredEuclidean:
      return 0.5 * (u - v).squaredNorm();
  }
  throw std::invalid_argument("bregman_dist: unknown geometry");
}

Vec project_simplex(const Vec& v) {
  const Index n = v.size();
  if (n == 0) {
    throw std::invalid_argument("project_simplex: empty vector");
  }
  // Sort descending, find the largest prefix whose shifted entries stay positive.
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double shift = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) {
      shift = candidate;
    }
  }
  return (v.array() - shift).max(0.0).matrix();
}

Vec project_nonneg(const Vec& v) { return v.cwiseMax(0.0); }

double project_box(double v, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("project_box: lo > hi");
  }
  return std::clamp(v, lo, hi);
}

Vec project_box(const Vec& v, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("project_box: lo > hi");
  }
  return v.cwiseMax(lo).cwiseMin(hi);
}

Vec project_box(const Vec& v, const Vec& lo, const Vec& hi) {
  require_same_dim(v, lo, "project_box");
  require_same_dim(v, hi, "project_box");
  if ((lo.array() > hi.array()).any()) {
    throw std::invalid_argument("project_box: lo > hi");
  }
  return v.cwiseMax(lo).cwiseMin(hi);
}

namespace {

SymMat clamp_spectrum(const SymMat& m, double lo, double hi) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(m.matrix());
  if (eig.info() != Eigen::Success) {
    throw NumericError("symmetric eigensolver did not converge");
  }
  const Vec clamped = eig.eigenvalues().cwiseMax(lo).cwiseMin(hi);
  const Mat& q = eig.eigenvectors();
  return SymMat(q * clamped.asDiagonal() * q.transpose());
}

}  // namespace

SymMat project_psd_floor(const SymMat& m, double floor) {
  if (floor < 0.0) {
    throw std::invalid_argument("project_psd_floor: negative floor");
  }
  return clamp_spectrum(m, floor, kInfinity);
}

SymMat project_spectral_box(const SymMat& m, double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("project_spectral_box: lo > hi");
  }
  return clamp_spectrum(m, lo, hi);
}

SymMat soft_threshold_offdiag(const SymMat& m, double v, double weight) {
  if (v < 0.0 || weight <= 0.0) {
    throw std::invalid_argument("soft_threshold_offdiag: need v >= 0 and weight > 0");
  }
  const double t = v * weight;
  Mat out = m.matrix();
  const Index n = m.size();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double a = out(i, j);
      out(i, j) = std::copysign(std::max(std::abs(a) - t, 0.0), a);
    }
  }
  return SymMat(out);
}

ProxOperator zero_function() {
  return {[](const Vec&) { return 0.0; }, [](const Vec& p, double) { return p; }};
}

ProxOperator simplex_indicator() {
  return {[](const Vec& x) {
            const bool ok = (x.array() >= -kIndicatorTol).all() &&
                            std::abs(x.sum() - 1.0) <= kIndicatorTol * (1.0 + x.size());
            return ok ? 0.0 : kInfinity;
          },
          [](const Vec& p, double) { return project_simplex(p); }};
}

ProxOperator nonneg_indicator() {
  return {[](const Vec& x) { return (x.array() >= -kIndicatorTol).all() ? 0.0 : kInfinity; },
          [](const Vec& p, double) { return project_nonneg(p); }};
}

ProxOperator box_indicator(double lo, double hi) {
  if (lo > hi) {
    throw std::invalid_argument("box_indicator: lo > hi");
  }
  return {[lo, hi](const Vec& x) {
            const bool ok = (x.array() >= lo - kIndicatorTol).all() &&
                            (x.array() <= hi + kIndicatorTol).all();
            return ok ? 0.0 : kInfinity;
          },
          [lo, hi](const Vec& p, double) { return project_box(p, lo, hi); }};
}

ProxOperator box_indicator(Vec lo, Vec hi) {
  if (lo.size() != hi.size() || (lo.array() > hi.array()).any()) {
    throw std::invalid_argument("box_indicator: invalid bounds");
  }
  return {[lo, hi](const Vec& x) {
            const bool ok = (x.array() >= lo.array() - kIndicatorTol).all() &&
                            (x.array() <= hi.array() + kIndicatorTol).all();
            return ok ? 0.0 : kInfinity;
          },
          [lo, hi](const Vec& p, double) { return project_box(p, lo, hi); }};
}

ProxOperator psd_indicator() {
  return {[](const Vec& x) {
            Eigen::SelfAdjointEigenSolver<Mat> eig(SymMat::unflatten(x).matrix(),
                                                   Eigen::EigenvaluesOnly);
            return eig.eigenvalues().minCoeff() >= -kIndicatorTol ? 0.0 : kInfinity;
          },
          [](const Vec& p, double) {
            return project_psd_floor(SymMat::unflatten(p), 0.0).flatten();
          }};
}

ProxOperator offdiag_l1(double v) {
  if (v < 0.0) {
    throw std::invalid_argument("offdiag_l1: negative weight");
  }
  return {[v](const Vec& x) {
            const Mat m = SymMat::unflatten(x).matrix();
            return v * (m.cwiseAbs().sum() - m.diagonal().cwiseAbs().sum());
          },
          [v](const Vec& p, double step) {
            return soft_threshold_offdiag(SymMat::unflatten(p), v, step).flatten();
          }};
}

Vec prox_step(BregmanGeometry geom, const ProxOperator& f, const Vec& gradient_term,
              const Vec& anchor, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("prox_step: step must be positive");
  }
  if (!f.prox) {
    throw std::invalid_argument("prox_step: function has no registered prox");
  }
  require_same_dim(gradient_term, anchor, "prox_step");
  switch (geom) {
    case BregmanGeometry::SquaredEuclidean:
      return f.prox(anchor - step * gradient_term, step);
  }
  throw std::invalid_argument("prox_step: unknown geometry");
}

}  // namespace misspec
