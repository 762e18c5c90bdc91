#include "selftune/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace selftune {

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_symmetric_psd(const Matrix& m, double psd_tol, double sym_tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  return min_eigenvalue(m) >= -psd_tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

bool is_symmetric_pd(const Matrix& m, double sym_tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  return llt.info() == Eigen::Success;
}

bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  return min_eigenvalue(b - a) >= -tol;
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Matrix principal_submatrix(const Matrix& m, std::span<const std::size_t> idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Matrix out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      out(i, j) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
  return out;
}

}  // namespace selftune
