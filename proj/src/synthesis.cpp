#include "selftune/synthesis.hpp"

#include <cmath>
#include <string>

namespace selftune {

namespace {

void require_psd(const Matrix& m, const char* name) {
  if (!is_symmetric_psd(m)) throw std::domain_error(std::string(name) + " must be symmetric PSD");
}

void require_pd(const Matrix& m, const char* name) {
  if (!is_symmetric_pd(m)) throw std::domain_error(std::string(name) + " must be symmetric PD");
}

void require_square(const Matrix& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n)
    throw std::invalid_argument(std::string(name) + " has wrong dimensions");
}

}  // namespace

namespace detail {

RiccatiStep riccati_step_unchecked(const Matrix& A, const Matrix& B, const Matrix& Q,
                                   const Matrix& R, const Matrix& P_next) {
  const Matrix PA = P_next * A;
  Matrix P = A.transpose() * PA + Q;
  if (B.cols() == 0) return {Matrix::Zero(0, A.cols()), symmetrize(P)};

  const Matrix BtP = B.transpose() * P_next;
  const Matrix S = symmetrize(BtP * B + R);
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw SolverError("B'PB + R is not positive definite");
  Matrix K = llt.solve(B.transpose() * PA);
  P.noalias() -= PA.transpose() * B * K;
  return {std::move(K), symmetrize(P)};
}

KalmanStep kalman_step_unchecked(const Matrix& A, const Matrix& C, const Matrix& W,
                                 const Matrix& V, const Matrix& E) {
  const auto n = A.rows();
  if (C.rows() == 0) return {Matrix::Zero(n, 0), symmetrize(A * E * A.transpose() + W)};

  const Matrix CE = C * E;
  const Matrix S = symmetrize(CE * C.transpose() + V);
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw SolverError("innovation covariance C E C' + V is singular");
  Matrix L = llt.solve(CE).transpose();
  const Matrix E_post = E - L * CE;
  return {std::move(L), symmetrize(A * E_post * A.transpose() + W)};
}

}  // namespace detail

RiccatiStep riccati_step(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                         const Matrix& P_next) {
  const auto n = A.rows();
  require_square(A, n, "A");
  require_square(Q, n, "Q");
  require_square(P_next, n, "P_next");
  if (B.rows() != n) throw std::invalid_argument("B has wrong row count");
  require_square(R, B.cols(), "R");
  require_psd(Q, "Q");
  require_psd(P_next, "P_next");
  require_pd(R, "R");
  return detail::riccati_step_unchecked(A, B, Q, R, P_next);
}

GainSchedule lqr_backward(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                          const Matrix& Q_T, std::size_t T) {
  if (T < 1) throw std::invalid_argument("lqr_backward: horizon must be >= 1");
  const auto n = A.rows();
  require_square(A, n, "A");
  require_square(Q, n, "Q");
  require_square(Q_T, n, "Q_T");
  if (B.rows() != n) throw std::invalid_argument("B has wrong row count");
  require_square(R, B.cols(), "R");
  require_psd(Q, "Q");
  require_psd(Q_T, "Q_T");
  require_pd(R, "R");

  GainSchedule g;
  g.horizon = T;
  g.K.resize(T);
  g.P.resize(T + 1);
  g.P[T] = symmetrize(Q_T);
  for (std::size_t tau = T; tau-- > 0;) {
    auto step = detail::riccati_step_unchecked(A, B, Q, R, g.P[tau + 1]);
    g.K[tau] = std::move(step.K);
    g.P[tau] = std::move(step.P);
  }
  return g;
}

Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P) {
  if (B.cols() == 0) return Matrix::Zero(0, A.cols());
  const Matrix BtP = B.transpose() * P;
  Eigen::LLT<Matrix> llt(symmetrize(BtP * B + R));
  if (llt.info() != Eigen::Success) throw SolverError("B'PB + R is not positive definite");
  return llt.solve(BtP * A);
}

double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P) {
  auto step = detail::riccati_step_unchecked(A, B, Q, R, P);
  return (P - step.P).norm();
}

namespace {

bool blown_up(const Matrix& P, double guard) { return !P.allFinite() || P.norm() > guard; }

DareSolution dare_fixed_point(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                              const DareOptions& opt) {
  DareSolution out;
  Matrix P = symmetrize(Q);
  for (std::size_t k = 1; k <= opt.max_iter; ++k) {
    Matrix next = detail::riccati_step_unchecked(A, B, Q, R, P).P;
    out.iterations = k;
    if (blown_up(next, opt.overflow_guard)) {
      out.P = std::move(next);
      return out;
    }
    const double step = (next - P).norm();
    P = std::move(next);
    if (step < opt.tol * std::max(1.0, P.norm())) {
      out.status = DareStatus::converged;
      out.P = std::move(P);
      return out;
    }
  }
  out.P = std::move(P);
  return out;
}

// Structure-preserving doubling: H_k is the Riccati iterate after 2^k steps,
// so it converges quadratically where the fixed-point iteration is linear.
DareSolution dare_doubling(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                           const DareOptions& opt) {
  const auto n = A.rows();
  DareSolution out;
  Matrix Ak = A;
  Matrix G = Matrix::Zero(n, n);
  if (B.cols() > 0) {
    Eigen::LLT<Matrix> llt(symmetrize(R));
    if (llt.info() != Eigen::Success) throw SolverError("R is not positive definite");
    G = symmetrize(B * llt.solve(B.transpose()));
  }
  Matrix H = symmetrize(Q);
  const Matrix I = Matrix::Identity(n, n);
  for (std::size_t k = 1; k <= opt.max_iter; ++k) {
    Eigen::PartialPivLU<Matrix> lu(I + G * H);
    const Matrix X = lu.solve(Ak);
    const Matrix Y = lu.solve(G);
    Matrix H_next = symmetrize(H + Ak.transpose() * H * X);
    G = symmetrize(G + Ak * Y * Ak.transpose());
    Ak = Ak * X;
    out.iterations = k;
    if (blown_up(H_next, opt.overflow_guard) || !G.allFinite() || !Ak.allFinite()) {
      out.P = std::move(H_next);
      return out;
    }
    const double step = (H_next - H).norm();
    H = std::move(H_next);
    if (step < opt.tol * std::max(1.0, H.norm())) {
      out.status = DareStatus::converged;
      out.P = std::move(H);
      return out;
    }
  }
  out.P = std::move(H);
  return out;
}

}  // namespace

DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        const DareOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_dare: tol must be > 0");
  const auto n = A.rows();
  require_square(A, n, "A");
  require_square(Q, n, "Q");
  if (B.rows() != n) throw std::invalid_argument("B has wrong row count");
  require_square(R, B.cols(), "R");
  require_psd(Q, "Q");
  require_pd(R, "R");
  return options.method == DareMethod::doubling ? dare_doubling(A, B, Q, R, options)
                                                : dare_fixed_point(A, B, Q, R, options);
}

KalmanStep kalman_step(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                       const Matrix& E) {
  const auto n = A.rows();
  require_square(A, n, "A");
  require_square(W, n, "W");
  require_square(E, n, "E");
  if (C.cols() != n) throw std::invalid_argument("C has wrong column count");
  require_square(V, C.rows(), "V");
  require_psd(W, "W");
  require_psd(E, "E");
  require_psd(V, "V");
  return detail::kalman_step_unchecked(A, C, W, V, E);
}

GainSchedule kalman_forward(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                            const Matrix& E_0, std::size_t T) {
  if (T < 1) throw std::invalid_argument("kalman_forward: horizon must be >= 1");
  const auto n = A.rows();
  require_square(A, n, "A");
  require_square(W, n, "W");
  require_square(E_0, n, "E_0");
  if (C.cols() != n) throw std::invalid_argument("C has wrong column count");
  require_square(V, C.rows(), "V");
  require_psd(W, "W");
  require_psd(E_0, "E_0");
  require_psd(V, "V");

  GainSchedule g;
  g.horizon = T;
  g.L.resize(T);
  g.E.resize(T + 1);
  g.E[0] = symmetrize(E_0);
  for (std::size_t tau = 0; tau < T; ++tau) {
    auto step = detail::kalman_step_unchecked(A, C, W, V, g.E[tau]);
    g.L[tau] = std::move(step.L);
    g.E[tau + 1] = std::move(step.E_next);
  }
  return g;
}

Vector estimator_update(const LinearNetworkSystem& system, const Architecture& arch,
                        const Matrix& K0, const Matrix& L0, const Vector& x_hat, const Vector& y) {
  const Matrix B = build_input_matrix(system, arch);
  const Matrix C = build_output_matrix(system, arch);
  const auto n = system.n();
  if (x_hat.size() != n || y.size() != C.rows() || K0.rows() != B.cols() || K0.cols() != n ||
      L0.rows() != n || L0.cols() != C.rows())
    throw std::invalid_argument("estimator_update: dimension mismatch");
  const Vector u = -K0 * x_hat;
  const Vector innovation = y - C * x_hat;
  return system.A() * (x_hat + L0 * innovation) + B * u;
}

}  // namespace selftune
