#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "selftune/linalg.hpp"

namespace selftune {

// Raised when an exact enumeration would exceed its size guard.
class SizeGuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// One quadratic x' P x + q of a piecewise-quadratic value function.
// `architecture` is the index (into k_subsets) of the actuator set chosen at
// this stage; the terminal piece has none.
struct QuadraticPiece {
  Matrix P;
  double q = 0.0;
  std::optional<std::size_t> architecture;
  std::size_t parent = 0;  // piece index at the next stage
};

// value(x) = min over pieces of x' P x + q.
struct PiecewiseQuadratic {
  std::vector<QuadraticPiece> pieces;
};

struct PieceValue {
  double value = 0.0;
  std::size_t piece = 0;
  std::optional<std::size_t> architecture;
};

// Minimizing piece; ties go to the lowest piece index.
PieceValue evaluate(const PiecewiseQuadratic& pwq, const Vector& x);

// All k-subsets of {0..m-1} in lexicographic order.
std::vector<IndexSet> k_subsets(std::size_t m, std::size_t k);

// Switched LQ problem over actuator sets of fixed cardinality drawn from a
// column pool. R is M x M over the pool; its principal block is used for
// each set.
struct SwitchedLqProblem {
  Matrix A;
  Matrix actuator_pool;
  Matrix Q;
  Matrix R;
  Matrix Q_T;
  Matrix W;
  std::size_t horizon = 1;
  std::size_t cardinality = 1;
};

struct DpOptions {
  bool prune_dominated = false;
  std::size_t max_pieces = 1000000;
};

// Backward recursion over pieces: J_T = {(Q_T, 0)}; every piece (P+, q+) and
// every architecture B yields (A'P+A + Q - A'P+B (B'P+B + R)^-1 B'P+A,
// q+ + tr(P+ W)). Returns J_0 .. J_T. Optional pruning drops a piece when
// another has P_j <= P_i (Loewner) and q_j <= q_i.
std::vector<PiecewiseQuadratic> dp_backward(const SwitchedLqProblem& problem,
                                            const DpOptions& options = {});

// Exhaustive minimum over all architecture sequences (B_0 .. B_{T-1}) of
// x' P_0 x + sum of trace offsets, each sequence scored by its own
// time-varying Riccati recursion. Guarded at 1e5 sequences.
double brute_force_value(const SwitchedLqProblem& problem, const Vector& x);

// Removes pieces dominated by another piece (used by dp_backward).
PiecewiseQuadratic prune_dominated(const PiecewiseQuadratic& pwq, double tol = 1e-12);

}  // namespace selftune
