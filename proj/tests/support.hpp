#pragma once

#include <cmath>

#include "selftune/linalg.hpp"
#include "selftune/rng.hpp"

namespace selftune::test {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// G G' + shift I with G standard normal.
inline Matrix random_spd(Eigen::Index n, Rng& rng, double shift = 0.1) {
  const Matrix G = rng.normal_matrix(n, n);
  return symmetrize(G * G.transpose() + shift * Matrix::Identity(n, n));
}

inline Matrix random_psd(Eigen::Index n, Eigen::Index rank, Rng& rng) {
  const Matrix G = rng.normal_matrix(n, rank);
  return symmetrize(G * G.transpose());
}

// Entries uniform in [-scale, scale].
inline Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace selftune::test
