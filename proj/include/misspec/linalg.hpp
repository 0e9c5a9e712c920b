#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace misspec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when an eigensolver or an iterative routine fails to produce a usable answer.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense symmetric matrix. Every construction re-symmetrizes via (M + M^T) / 2,
/// so floating-point drift never reaches the eigensolver.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(const Mat& m);
  static SymMat zero(Index n) { return SymMat(Mat::Zero(n, n)); }
  static SymMat identity(Index n) { return SymMat(Mat::Identity(n, n)); }

  Index size() const { return m_.rows(); }
  const Mat& matrix() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// Row-major flattening of all n*n entries; Euclidean geometry on the
  /// flattened vector equals Frobenius geometry on the matrix.
  Vec flatten() const;
  static SymMat unflatten(const Vec& v);

  SymMat operator+(const SymMat& o) const { return SymMat(m_ + o.m_); }
  SymMat operator-(const SymMat& o) const { return SymMat(m_ - o.m_); }
  SymMat operator*(double s) const { return SymMat(m_ * s); }

 private:
  Mat m_;
};

void require_same_dim(const Vec& a, const Vec& b, const char* what);

/// Side length n of a flattened n*n matrix; throws if v.size() is not a square.
Index square_side(Index flat_size);

}  // namespace misspec
