#include <limits>

#include "selftune/greedy.hpp"

namespace selftune {

StateFeedbackSelector::StateFeedbackSelector(Matrix A, Matrix actuator_pool, Matrix Q,
                                             Matrix R_pool, DareOptions options)
    : A_(std::move(A)),
      pool_(std::move(actuator_pool)),
      Q_(std::move(Q)),
      R_pool_(std::move(R_pool)),
      options_(options) {
  const auto n = A_.rows();
  if (A_.cols() != n || pool_.rows() != n || Q_.rows() != n || Q_.cols() != n)
    throw std::invalid_argument("StateFeedbackSelector: dimension mismatch");
  if (R_pool_.rows() != pool_.cols() || R_pool_.cols() != pool_.cols())
    throw std::invalid_argument("StateFeedbackSelector: R must be M x M");
  if (!is_symmetric_psd(Q_)) throw std::domain_error("Q must be symmetric PSD");
  if (!is_symmetric_pd(R_pool_)) throw std::domain_error("R must be symmetric PD");
}

const DareSolution& StateFeedbackSelector::dare(const IndexSet& actuators) {
  auto it = cache_.find(actuators);
  if (it != cache_.end()) return it->second;
  const Matrix B = select_columns(pool_, actuators);
  const Matrix R = principal_submatrix(R_pool_, actuators);
  auto sol = solve_dare(A_, B, Q_, R, options_);
  return cache_.emplace(actuators, std::move(sol)).first->second;
}

StateFeedbackPolicy StateFeedbackSelector::select(const Vector& x, std::size_t cardinality) {
  const auto M = static_cast<std::size_t>(pool_.cols());
  if (cardinality > M) throw std::invalid_argument("actuator cardinality exceeds pool size");
  if (x.size() != A_.rows()) throw std::invalid_argument("state has wrong dimension");

  auto score = [&](const IndexSet& set) {
    const auto& sol = dare(set);
    if (!sol.converged()) return std::numeric_limits<double>::infinity();
    return x.dot(sol.P * x);
  };
  StateFeedbackPolicy out;
  out.actuators = greedy_select(M, score, cardinality);

  const auto& sol = dare(out.actuators);
  const auto k = static_cast<Eigen::Index>(out.actuators.size());
  out.P = sol.P;
  if (!sol.converged()) {
    out.bounded = false;
    out.K = Matrix::Zero(k, A_.rows());
  } else {
    const Matrix B = select_columns(pool_, out.actuators);
    out.K = -lqr_gain(A_, B, principal_submatrix(R_pool_, out.actuators), sol.P);
  }
  out.u = out.K * x;
  return out;
}

StateFeedbackPolicy greedy_actuator_state_feedback(const Matrix& A, const Matrix& actuator_pool,
                                                   const Vector& x, const Matrix& Q,
                                                   const Matrix& R_pool, std::size_t cardinality,
                                                   const DareOptions& options) {
  StateFeedbackSelector selector(A, actuator_pool, Q, R_pool, options);
  return selector.select(x, cardinality);
}

}  // namespace selftune
