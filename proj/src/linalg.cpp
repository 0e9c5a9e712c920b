#include "misspec/linalg.hpp"

#include <cmath>

namespace misspec {

SymMat::SymMat(const Mat& m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("SymMat: matrix is not square");
  }
  m_ = 0.5 * (m + m.transpose());
}

Vec SymMat::flatten() const {
  const Index n = size();
  Vec out(n * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      out(i * n + j) = m_(i, j);
    }
  }
  return out;
}

SymMat SymMat::unflatten(const Vec& v) {
  const Index n = square_side(v.size());
  Mat m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      m(i, j) = v(i * n + j);
    }
  }
  return SymMat(m);
}

void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

Index square_side(Index flat_size) {
  const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(flat_size))));
  if (n * n != flat_size) {
    throw std::invalid_argument("flattened size " + std::to_string(flat_size) +
                                " is not a perfect square");
  }
  return n;
}

}  // namespace misspec
