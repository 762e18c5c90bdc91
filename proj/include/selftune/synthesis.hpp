#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "selftune/linalg.hpp"
#include "selftune/network.hpp"

namespace selftune {

// A factorization that should succeed (input cost or innovation matrix)
// failed.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Gains and cost/covariance matrices over one prediction horizon.
// K[tau] and L[tau] for tau = 0..T-1; P[tau] and E[tau] for tau = 0..T.
// lqr_backward fills K and P, kalman_forward fills L and E.
struct GainSchedule {
  std::size_t horizon = 0;
  std::vector<Matrix> K;
  std::vector<Matrix> P;
  std::vector<Matrix> L;
  std::vector<Matrix> E;
};

struct RiccatiStep {
  Matrix K;
  Matrix P;
};

// One step of the LQR backward recursion:
//   K = (B'P+B + R)^-1 B'P+A
//   P = A'P+A - A'P+B (B'P+B + R)^-1 B'P+A + Q
// B may have zero columns (uncontrolled step). Throws std::domain_error for
// non-PSD Q/P_next or non-PD R.
RiccatiStep riccati_step(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                         const Matrix& P_next);

// Finite-horizon LQR: P[T] = Q_T, riccati_step backwards to tau = 0.
GainSchedule lqr_backward(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                          const Matrix& Q_T, std::size_t T);

enum class DareMethod {
  fixed_point,  // repeated riccati_step from P = Q
  doubling,     // structure-preserving doubling, same fixed point
};

struct DareOptions {
  double tol = 1e-10;
  std::size_t max_iter = 10000;
  double overflow_guard = 1e12;
  DareMethod method = DareMethod::doubling;
};

enum class DareStatus { converged, diverged };

struct DareSolution {
  DareStatus status = DareStatus::diverged;
  Matrix P;
  std::size_t iterations = 0;

  bool converged() const { return status == DareStatus::converged; }
};

// Stabilizing solution of the discrete algebraic Riccati equation. Iterates
// until the Frobenius step is below tol * max(1, |P|_F). Reports diverged when
// |P|_F exceeds the overflow guard, a non-finite value appears, or max_iter is
// reached; callers treat a diverged architecture as having infinite cost.
DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        const DareOptions& options = {});

// K = (B'PB + R)^-1 B'PA.
Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P);

// |P - (A'PA - A'PB (B'PB + R)^-1 B'PA + Q)|_F.
double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P);

struct KalmanStep {
  Matrix L;
  Matrix E_next;
};

// One step of the Kalman covariance recursion:
//   L      = E C' (C E C' + V)^-1
//   E_next = A E A' - A E C' (C E C' + V)^-1 C E A' + W
// An empty C gives open-loop propagation E_next = A E A' + W.
KalmanStep kalman_step(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                       const Matrix& E);

// E[0] = E_0, kalman_step forwards to tau = T.
GainSchedule kalman_forward(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                            const Matrix& E_0, std::size_t T);

// x_hat+ = A (I - L0 C) x_hat + A L0 y + B u with u = -K0 x_hat.
Vector estimator_update(const LinearNetworkSystem& system, const Architecture& arch,
                        const Matrix& K0, const Matrix& L0, const Vector& x_hat, const Vector& y);

namespace detail {
// Recursion bodies without input validation; inputs must already satisfy the
// PSD/PD preconditions.
RiccatiStep riccati_step_unchecked(const Matrix& A, const Matrix& B, const Matrix& Q,
                                   const Matrix& R, const Matrix& P_next);
KalmanStep kalman_step_unchecked(const Matrix& A, const Matrix& C, const Matrix& W,
                                 const Matrix& V, const Matrix& E);
}  // namespace detail

}  // namespace selftune
