#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace selftune {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexSet = std::vector<std::size_t>;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Matrix& m);

// Square, symmetric within sym_tol (max abs entry of m - m^T) and with
// smallest eigenvalue >= -psd_tol.
bool is_symmetric_psd(const Matrix& m, double psd_tol = 1e-9, double sym_tol = 1e-9);

bool is_symmetric_pd(const Matrix& m, double sym_tol = 1e-9);

// True when b - a is PSD up to tol (a <= b in the Loewner order).
bool loewner_leq(const Matrix& a, const Matrix& b, double tol);

Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);
Matrix principal_submatrix(const Matrix& m, std::span<const std::size_t> idx);

}  // namespace selftune
