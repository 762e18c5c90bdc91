#include "selftune/exact_dp.hpp"

#include <limits>

#include "selftune/synthesis.hpp"

namespace selftune {

PieceValue evaluate(const PiecewiseQuadratic& pwq, const Vector& x) {
  if (pwq.pieces.empty()) throw std::invalid_argument("evaluate: empty piecewise quadratic");
  PieceValue best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pwq.pieces.size(); ++i) {
    const auto& piece = pwq.pieces[i];
    const double v = x.dot(piece.P * x) + piece.q;
    if (i == 0 || v < best.value) best = {v, i, piece.architecture};
  }
  return best;
}

std::vector<IndexSet> k_subsets(std::size_t m, std::size_t k) {
  std::vector<IndexSet> out;
  if (k > m) return out;
  IndexSet cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = i;
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == m - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

namespace {

struct Arch {
  Matrix B;
  Matrix R;
};

std::vector<Arch> architectures(const SwitchedLqProblem& p) {
  const auto n = p.A.rows();
  const auto M = static_cast<std::size_t>(p.actuator_pool.cols());
  if (p.A.cols() != n || p.actuator_pool.rows() != n || p.Q.rows() != n || p.Q_T.rows() != n ||
      p.W.rows() != n || p.R.rows() != static_cast<Eigen::Index>(M))
    throw std::invalid_argument("SwitchedLqProblem: dimension mismatch");
  if (!is_symmetric_psd(p.Q) || !is_symmetric_psd(p.Q_T) || !is_symmetric_psd(p.W))
    throw std::domain_error("Q, Q_T and W must be symmetric PSD");
  if (!is_symmetric_pd(p.R)) throw std::domain_error("R must be symmetric PD");
  if (p.cardinality > M) throw std::invalid_argument("cardinality exceeds pool size");
  std::vector<Arch> out;
  for (const auto& set : k_subsets(M, p.cardinality))
    out.push_back({select_columns(p.actuator_pool, set), principal_submatrix(p.R, set)});
  return out;
}

double checked_power(std::size_t base, std::size_t exp, double limit) {
  double v = 1.0;
  for (std::size_t i = 0; i < exp; ++i) {
    v *= static_cast<double>(base);
    if (v > limit) return v;
  }
  return v;
}

}  // namespace

PiecewiseQuadratic prune_dominated(const PiecewiseQuadratic& pwq, double tol) {
  const auto& pieces = pwq.pieces;
  std::vector<bool> dropped(pieces.size(), false);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    for (std::size_t j = 0; j < pieces.size() && !dropped[i]; ++j) {
      if (i == j || dropped[j]) continue;
      if (pieces[j].q <= pieces[i].q + tol && loewner_leq(pieces[j].P, pieces[i].P, tol)) {
        // Identical pieces: keep the lower index.
        const bool mutual = pieces[i].q <= pieces[j].q + tol &&
                            loewner_leq(pieces[i].P, pieces[j].P, tol);
        if (!mutual || j < i) dropped[i] = true;
      }
    }
  }
  PiecewiseQuadratic out;
  for (std::size_t i = 0; i < pieces.size(); ++i)
    if (!dropped[i]) out.pieces.push_back(pieces[i]);
  return out;
}

std::vector<PiecewiseQuadratic> dp_backward(const SwitchedLqProblem& problem,
                                            const DpOptions& options) {
  const auto archs = architectures(problem);
  const std::size_t T = problem.horizon;
  if (!options.prune_dominated &&
      checked_power(archs.size(), T, static_cast<double>(options.max_pieces)) >
          static_cast<double>(options.max_pieces))
    throw SizeGuardError("dp_backward: piece count exceeds guard");

  std::vector<PiecewiseQuadratic> J(T + 1);
  J[T].pieces.push_back({symmetrize(problem.Q_T), 0.0, std::nullopt, 0});
  for (std::size_t t = T; t-- > 0;) {
    const auto& next = J[t + 1].pieces;
    if (next.size() * archs.size() > options.max_pieces)
      throw SizeGuardError("dp_backward: piece count exceeds guard");
    PiecewiseQuadratic stage;
    stage.pieces.reserve(next.size() * archs.size());
    for (std::size_t p = 0; p < next.size(); ++p) {
      const double offset = next[p].q + (next[p].P * problem.W).trace();
      for (std::size_t a = 0; a < archs.size(); ++a) {
        auto step = detail::riccati_step_unchecked(problem.A, archs[a].B, problem.Q, archs[a].R,
                                                   next[p].P);
        stage.pieces.push_back({std::move(step.P), offset, a, p});
      }
    }
    J[t] = options.prune_dominated ? prune_dominated(stage) : std::move(stage);
  }
  return J;
}

double brute_force_value(const SwitchedLqProblem& problem, const Vector& x) {
  const auto archs = architectures(problem);
  const std::size_t T = problem.horizon;
  if (checked_power(archs.size(), T, 1e5) > 1e5)
    throw SizeGuardError("brute_force_value: sequence count exceeds guard");
  if (x.size() != problem.A.rows()) throw std::invalid_argument("brute_force_value: bad state");

  std::vector<std::size_t> seq(T, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Matrix P = symmetrize(problem.Q_T);
    double offset = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      offset += (P * problem.W).trace();
      P = detail::riccati_step_unchecked(problem.A, archs[seq[t]].B, problem.Q, archs[seq[t]].R, P)
              .P;
    }
    best = std::min(best, x.dot(P * x) + offset);

    std::size_t d = 0;
    while (d < T && ++seq[d] == archs.size()) seq[d++] = 0;
    if (d == T) break;
  }
  return best;
}

}  // namespace selftune
