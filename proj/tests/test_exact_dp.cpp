#include <doctest.h>

#include <cmath>
#include <limits>

#include "selftune/exact_dp.hpp"
#include "selftune/synthesis.hpp"
#include "support.hpp"

using namespace selftune;
using test::scalar;

namespace {

SwitchedLqProblem random_problem(Rng& rng, Eigen::Index n, std::size_t M, std::size_t K,
                                 std::size_t T, bool noise) {
  SwitchedLqProblem p;
  p.A = rng.normal_matrix(n, n) * 0.8;
  p.actuator_pool = rng.normal_matrix(n, static_cast<Eigen::Index>(M));
  p.Q = test::random_spd(n, rng);
  p.R = test::random_spd(static_cast<Eigen::Index>(M), rng);
  p.Q_T = test::random_spd(n, rng);
  p.W = noise ? test::random_psd(n, n, rng) : Matrix::Zero(n, n);
  p.horizon = T;
  p.cardinality = K;
  return p;
}

// Deterministic optimum for a given architecture sequence by minimizing the
// quadratic in the stacked inputs directly.
double open_loop_optimum(const SwitchedLqProblem& p, const std::vector<IndexSet>& seq,
                         const Vector& x0) {
  const auto n = p.A.rows();
  const std::size_t T = seq.size();
  std::vector<Eigen::Index> offset(T + 1, 0);
  for (std::size_t t = 0; t < T; ++t)
    offset[t + 1] = offset[t] + static_cast<Eigen::Index>(seq[t].size());
  const Eigen::Index N = offset[T];
  std::vector<Matrix> F(T + 1), G(T + 1);
  F[0] = Matrix::Identity(n, n);
  G[0] = Matrix::Zero(n, N);
  for (std::size_t t = 0; t < T; ++t) {
    F[t + 1] = p.A * F[t];
    G[t + 1] = p.A * G[t];
    G[t + 1].middleCols(offset[t], static_cast<Eigen::Index>(seq[t].size())) +=
        select_columns(p.actuator_pool, seq[t]);
  }
  Matrix H = Matrix::Zero(N, N);
  Vector g = Vector::Zero(N);
  double c = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    const Matrix& W = t == T ? p.Q_T : p.Q;
    H += G[t].transpose() * W * G[t];
    g += G[t].transpose() * W * F[t] * x0;
    c += x0.dot(F[t].transpose() * W * F[t] * x0);
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto k = static_cast<Eigen::Index>(seq[t].size());
    H.block(offset[t], offset[t], k, k) += principal_submatrix(p.R, seq[t]);
  }
  const Vector U = H.ldlt().solve(-g);
  return U.dot(H * U) + 2.0 * g.dot(U) + c;
}

}  // namespace

TEST_CASE("k-subsets are lexicographic") {
  const auto s = k_subsets(4, 2);
  REQUIRE(s.size() == 6);
  CHECK(s[0] == IndexSet{0, 1});
  CHECK(s[1] == IndexSet{0, 2});
  CHECK(s[5] == IndexSet{2, 3});
  CHECK(k_subsets(3, 0).size() == 1);
  CHECK(k_subsets(3, 3).size() == 1);
}

TEST_CASE("zero horizon gives the terminal piece") {
  Rng rng(1);
  auto p = random_problem(rng, 2, 3, 1, 0, true);
  const auto J = dp_backward(p);
  REQUIRE(J.size() == 1);
  REQUIRE(J[0].pieces.size() == 1);
  CHECK(test::max_abs_diff(J[0].pieces[0].P, p.Q_T) < 1e-15);
  CHECK(J[0].pieces[0].q == 0.0);
}

TEST_CASE("single architecture reproduces the finite-horizon recursion") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_problem(rng, 1 + trial % 3, 1, 1, 4, true);
    const auto J = dp_backward(p);
    const auto g = lqr_backward(p.A, p.actuator_pool, p.Q, p.R, p.Q_T, 4);
    double offset = 0.0;
    for (std::size_t t = 4; t-- > 0;) {
      offset += (g.P[t + 1] * p.W).trace();
      REQUIRE(J[t].pieces.size() == 1);
      CHECK(test::max_abs_diff(J[t].pieces[0].P, g.P[t]) < 1e-10 * std::max(1.0, g.P[t].norm()));
      CHECK(J[t].pieces[0].q == doctest::Approx(offset).epsilon(1e-12));
    }
    const Vector x = rng.normal_vector(p.A.rows());
    CHECK(evaluate(J[0], x).value == doctest::Approx(brute_force_value(p, x)).epsilon(1e-12));
  }
}

TEST_CASE("scalar two-architecture example") {
  SwitchedLqProblem p;
  p.A = scalar(2);
  p.actuator_pool = Matrix(1, 2);
  p.actuator_pool << 1, 0.1;
  p.Q = scalar(1);
  p.R = Matrix::Identity(2, 2);
  p.Q_T = scalar(1);
  p.W = scalar(0);
  p.horizon = 1;
  p.cardinality = 1;
  const auto J = dp_backward(p);
  REQUIRE(J[0].pieces.size() == 2);
  CHECK(J[0].pieces[0].P(0, 0) == doctest::Approx(3.0));
  CHECK(J[0].pieces[1].P(0, 0) == doctest::Approx(5.0 - 0.04 / 1.01));
  const auto v = evaluate(J[0], scalar(2));
  CHECK(v.value == doctest::Approx(12.0));
  REQUIRE(v.architecture.has_value());
  CHECK(*v.architecture == 0);

  // Brute force over an input grid for each architecture.
  double best = std::numeric_limits<double>::infinity();
  for (double b : {1.0, 0.1})
    for (int i = -100000; i <= 0; ++i) {
      const double u = i * 1e-4;
      const double x1 = 4.0 + b * u;
      best = std::min(best, 4.0 + u * u + x1 * x1);
    }
  CHECK(best == doctest::Approx(12.0).epsilon(1e-8));
}

TEST_CASE("evaluate at the origin returns the smallest offset") {
  PiecewiseQuadratic pwq;
  pwq.pieces.push_back({scalar(1), 3.0, 0, 0});
  pwq.pieces.push_back({scalar(5), 1.0, 1, 0});
  pwq.pieces.push_back({scalar(2), 1.0, 2, 0});
  const auto v = evaluate(pwq, scalar(0));
  CHECK(v.value == 1.0);
  CHECK(v.piece == 1);
  CHECK(evaluate(pwq, scalar(2)).value == doctest::Approx(7.0));
  PiecewiseQuadratic single;
  single.pieces.push_back({scalar(4), 0.5, std::nullopt, 0});
  CHECK(evaluate(single, scalar(3)).value == doctest::Approx(36.5));
  CHECK_THROWS(evaluate(PiecewiseQuadratic{}, scalar(1)));
}

TEST_CASE("dynamic programming equals brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_problem(rng, 2, 3, 1, 3, true);
    const auto J = dp_backward(p);
    CHECK(J[0].pieces.size() == 27);
    for (int k = 0; k < 20; ++k) {
      const Vector x = rng.normal_vector(2) * 3;
      CHECK(std::abs(evaluate(J[0], x).value - brute_force_value(p, x)) < 1e-8);
    }
  }
}

TEST_CASE("deterministic value equals the best open-loop sequence") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_problem(rng, 2, 3, 1 + trial % 2, 2, false);
    const auto archs = k_subsets(3, p.cardinality);
    const auto J = dp_backward(p);
    for (int k = 0; k < 5; ++k) {
      const Vector x = rng.normal_vector(2);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& a0 : archs)
        for (const auto& a1 : archs) best = std::min(best, open_loop_optimum(p, {a0, a1}, x));
      CHECK(evaluate(J[0], x).value == doctest::Approx(best).epsilon(1e-8));
    }
  }
}

TEST_CASE("noiseless value is homogeneous of degree two") {
  Rng rng(5);
  auto p = random_problem(rng, 3, 4, 2, 2, false);
  const auto J = dp_backward(p);
  for (int k = 0; k < 30; ++k) {
    const Vector x = rng.normal_vector(3);
    const double alpha = rng.uniform(-4, 4);
    if (std::abs(alpha) < 1e-3) continue;
    const auto base = evaluate(J[0], x);
    const auto scaled = evaluate(J[0], alpha * x);
    CHECK(scaled.value == doctest::Approx(alpha * alpha * base.value).epsilon(1e-10));
    CHECK(scaled.architecture == base.architecture);
  }
}

TEST_CASE("dominance pruning preserves values") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_problem(rng, 2, 3, 1, 3, trial % 2 == 0);
    const auto full = dp_backward(p);
    DpOptions opt;
    opt.prune_dominated = true;
    const auto pruned = dp_backward(p, opt);
    CHECK(pruned[0].pieces.size() <= full[0].pieces.size());
    for (int k = 0; k < 50; ++k) {
      const Vector x = rng.normal_vector(2) * 2;
      CHECK(std::abs(evaluate(pruned[0], x).value - evaluate(full[0], x).value) <=
            1e-10 * std::max(1.0, evaluate(full[0], x).value));
    }
  }
}

TEST_CASE("DP value is no worse than random fixed sequences") {
  Rng rng(7);
  auto p = random_problem(rng, 2, 3, 1, 3, true);
  const auto J = dp_backward(p);
  const auto archs = k_subsets(3, 1);
  const Vector x = rng.normal_vector(2);
  const double v = evaluate(J[0], x).value;
  for (int k = 0; k < 100; ++k) {
    Matrix P = p.Q_T;
    double q = 0.0;
    for (int t = 2; t >= 0; --t) {
      q += (P * p.W).trace();
      const auto& a = archs[rng.below(archs.size())];
      P = riccati_step(p.A, select_columns(p.actuator_pool, a), p.Q, principal_submatrix(p.R, a), P).P;
    }
    CHECK(v <= x.dot(P * x) + q + 1e-9);
  }
}

TEST_CASE("size guards") {
  Rng rng(8);
  auto p = random_problem(rng, 2, 10, 5, 3, false);
  CHECK_THROWS_AS(dp_backward(p), SizeGuardError);
  CHECK_THROWS_AS(brute_force_value(p, Vector::Ones(2)), SizeGuardError);
  p.cardinality = 11;
  CHECK_THROWS(dp_backward(p));
}
