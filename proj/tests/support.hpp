#pragma once

// Test-side oracles. Nothing here calls into the library's numerics, so a bug
// shared between library and oracle cannot hide.

#include "misspec/linalg.hpp"
#include "misspec/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using misspec::Mat;
using misspec::Vec;

// Held-Wolfe-Crowder: theta = (sum of the rho largest - 1) / rho with rho the last
// index where the sorted entry exceeds the running threshold.
inline Vec simplex_sort(const Vec& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.rbegin(), u.rend());
  double acc = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    acc += u[j];
    const double t = (acc - 1.0) / static_cast<double>(j + 1);
    if (u[j] > t) theta = t;
  }
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = std::max(v(i) - theta, 0.0);
  return out;
}

// Bisection on the shift; independent of sorting.
inline Vec simplex_bisect(const Vec& v) {
  double lo = v.minCoeff() - 1.0, hi = v.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::max(v(i) - mid, 0.0);
    (s > 1.0 ? lo : hi) = mid;
  }
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = std::max(v(i) - 0.5 * (lo + hi), 0.0);
  return out;
}

inline Mat random_symmetric(misspec::Rng& rng, Eigen::Index n, double scale = 1.0) {
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = scale * rng.normal();
  return m;
}

inline Vec random_vec(misspec::Rng& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

inline Vec random_simplex_point(misspec::Rng& rng, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

inline Vec flat(const Mat& m) {
  Vec v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
  return v;
}

inline Mat unflat(const Vec& v) {
  const auto n = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(v.size()))));
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v(i * n + j);
  return m;
}

// Textbook two-pass mean and covariance with divisor T - 1.
inline void two_pass_cov(const Mat& r, Vec& mean, Mat& cov) {
  const Eigen::Index T = r.rows(), n = r.cols();
  mean = Vec::Zero(n);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < n; ++i) mean(i) += r(t, i);
  mean /= static_cast<double>(T);
  cov = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) s += (r(t, i) - mean(i)) * (r(t, j) - mean(j));
      cov(i, j) = s / static_cast<double>(T - 1);
    }
}

inline double slope(const std::vector<std::pair<double, double>>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [k, v] : pts) {
    const double a = std::log(k), b = std::log(v);
    sx += a; sy += b; sxx += a * a; sxy += a * b;
  }
  const double n = static_cast<double>(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
