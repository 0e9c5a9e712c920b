#pragma once

#include "misspec/linalg.hpp"

#include <functional>
#include <limits>

namespace misspec {

/// Reference geometry for Bregman distances. Only the squared-Euclidean
/// kernel phi(u) = ||u||^2 / 2 is provided.
enum class BregmanGeometry { SquaredEuclidean };

/// D(u, v) = phi(u) - phi(v) - <grad phi(v), u - v>; equals ||u - v||^2 / 2 here.
double bregman_dist(BregmanGeometry geom, const Vec& u, const Vec& v);
inline double bregman_dist(const Vec& u, const Vec& v) {
  return bregman_dist(BregmanGeometry::SquaredEuclidean, u, v);
}

/// Euclidean projection onto the unit simplex {x >= 0, sum x = 1}.
Vec project_simplex(const Vec& v);

Vec project_nonneg(const Vec& v);

double project_box(double v, double lo, double hi);
Vec project_box(const Vec& v, double lo, double hi);
Vec project_box(const Vec& v, const Vec& lo, const Vec& hi);

/// Frobenius projection onto {X : X >= floor * I}. Eigenvalues below the
/// floor are lifted to it; floor = 0 gives the PSD-cone projection.
SymMat project_psd_floor(const SymMat& m, double floor);

/// Frobenius projection onto {X : lo * I <= X <= hi * I}.
SymMat project_spectral_box(const SymMat& m, double lo, double hi);

/// Prox of weight * v * (sum of |m_ij| over i != j): off-diagonal soft thresholding.
SymMat soft_threshold_offdiag(const SymMat& m, double v, double weight);

/// A closed convex function known through its value and its prox map.
/// prox(point, step) = argmin_x { f(x) + ||x - point||^2 / (2 step) }.
/// value returns +infinity outside dom f.
struct ProxOperator {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&, double)> prox;

  double operator()(const Vec& x) const { return value ? value(x) : 0.0; }
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Tolerance used by indicator functions when deciding membership.
inline constexpr double kIndicatorTol = 1e-9;

ProxOperator zero_function();
ProxOperator simplex_indicator();
ProxOperator nonneg_indicator();
ProxOperator box_indicator(double lo, double hi);
ProxOperator box_indicator(Vec lo, Vec hi);
/// Indicator of the PSD cone on flattened n*n symmetric matrices.
ProxOperator psd_indicator();
/// v * off-diagonal l1 norm on flattened n*n symmetric matrices.
ProxOperator offdiag_l1(double v);

/// argmin_x { f(x) + <gradient_term, x> + D(x, anchor) / step }.
Vec prox_step(BregmanGeometry geom, const ProxOperator& f, const Vec& gradient_term,
              const Vec& anchor, double step);
inline Vec prox_step(const ProxOperator& f, const Vec& gradient_term, const Vec& anchor,
                     double step) {
  return prox_step(BregmanGeometry::SquaredEuclidean, f, gradient_term, anchor, step);
}

}  // namespace misspec
