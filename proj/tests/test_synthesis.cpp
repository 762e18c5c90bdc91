#include <doctest.h>

#include <cmath>
#include <limits>

#include "selftune/linalg.hpp"
#include "selftune/network.hpp"
#include "selftune/synthesis.hpp"
#include "support.hpp"

using namespace selftune;
using test::scalar;

namespace {

// Minimizes sum_{t<T} x'Qx + u'Ru + x_T' Q_T x_T over stacked inputs for the
// deterministic system, by writing x_t = A^t x0 + sum_k A^{t-1-k} B u_k and
// solving the normal equations. Independent of any Riccati recursion.
double open_loop_optimum(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                         const Matrix& Q_T, std::size_t T, const Vector& x0) {
  const auto n = A.rows();
  const auto m = B.cols();
  const auto N = static_cast<Eigen::Index>(T) * m;
  // x_t = F_t x0 + G_t U
  std::vector<Matrix> F(T + 1), G(T + 1);
  F[0] = Matrix::Identity(n, n);
  G[0] = Matrix::Zero(n, N);
  for (std::size_t t = 0; t < T; ++t) {
    F[t + 1] = A * F[t];
    G[t + 1] = A * G[t];
    G[t + 1].block(0, static_cast<Eigen::Index>(t) * m, n, m) += B;
  }
  Matrix H = Matrix::Zero(N, N);
  Vector g = Vector::Zero(N);
  double c = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    const Matrix& W = t == T ? Q_T : Q;
    H += G[t].transpose() * W * G[t];
    g += G[t].transpose() * W * F[t] * x0;
    c += x0.dot(F[t].transpose() * W * F[t] * x0);
  }
  for (std::size_t t = 0; t < T; ++t)
    H.block(static_cast<Eigen::Index>(t) * m, static_cast<Eigen::Index>(t) * m, m, m) += R;
  const Vector U = H.ldlt().solve(-g);
  return U.dot(H * U) + 2.0 * g.dot(U) + c;
}

}  // namespace

TEST_CASE("riccati step scalar example") {
  const auto step = riccati_step(scalar(2), scalar(1), scalar(1), scalar(1), scalar(1));
  CHECK(step.K(0, 0) == doctest::Approx(1.0));
  CHECK(step.P(0, 0) == doctest::Approx(3.0));

  // One-step cost q x^2 + r u^2 + p (a x + b u)^2 at x = 1 over a fine grid.
  double best = std::numeric_limits<double>::infinity(), best_u = 0.0;
  for (int i = -40000; i <= 40000; ++i) {
    const double u = i * 1e-4;
    const double cost = 1.0 + u * u + (2.0 + u) * (2.0 + u);
    if (cost < best) best = cost, best_u = u;
  }
  CHECK(best == doctest::Approx(step.P(0, 0)).epsilon(1e-8));
  CHECK(-best_u == doctest::Approx(step.K(0, 0)).epsilon(1e-4));
}

TEST_CASE("riccati step degenerate cases") {
  Rng rng(3);
  const Matrix A = rng.normal_matrix(3, 3);
  const Matrix B = rng.normal_matrix(3, 2);
  const Matrix Q = test::random_spd(3, rng);
  const auto zero = riccati_step(A, B, Q, Matrix::Identity(2, 2), Matrix::Zero(3, 3));
  CHECK(zero.K.cwiseAbs().maxCoeff() == 0.0);
  CHECK(test::max_abs_diff(zero.P, Q) < 1e-14);

  const Matrix P_next = test::random_spd(3, rng);
  const auto open = riccati_step(A, Matrix::Zero(3, 0), Q, Matrix::Zero(0, 0), P_next);
  CHECK(open.K.rows() == 0);
  CHECK(open.K.cols() == 3);
  CHECK(test::max_abs_diff(open.P, A.transpose() * P_next * A + Q) < 1e-12);
}

TEST_CASE("riccati step rejects invalid inputs") {
  CHECK_THROWS_AS(riccati_step(scalar(1), scalar(1), scalar(-1), scalar(1), scalar(1)),
                  std::domain_error);
  CHECK_THROWS_AS(riccati_step(scalar(1), scalar(1), scalar(1), scalar(0), scalar(1)),
                  std::domain_error);
  CHECK_THROWS_AS(riccati_step(scalar(1), scalar(1), scalar(1), scalar(1), scalar(-2)),
                  std::domain_error);
  CHECK_THROWS(riccati_step(Matrix::Identity(2, 2), scalar(1), scalar(1), scalar(1), scalar(1)));
}

TEST_CASE("lqr backward recursion") {
  const auto g1 = lqr_backward(scalar(2), scalar(1), scalar(1), scalar(1), scalar(1), 1);
  REQUIRE(g1.K.size() == 1);
  REQUIRE(g1.P.size() == 2);
  CHECK(g1.P[1](0, 0) == 1.0);
  CHECK(g1.K[0](0, 0) == doctest::Approx(1.0));

  const auto g2 = lqr_backward(scalar(2), scalar(1), scalar(1), scalar(1), scalar(1), 2);
  CHECK(g2.P[1](0, 0) == doctest::Approx(3.0));
  CHECK(g2.P[0](0, 0) == doctest::Approx(4.0));
  const auto twice = riccati_step(scalar(2), scalar(1), scalar(1), scalar(1),
                                  riccati_step(scalar(2), scalar(1), scalar(1), scalar(1),
                                               scalar(1)).P);
  CHECK(g2.P[0](0, 0) == doctest::Approx(twice.P(0, 0)));

  Rng rng(5);
  const Matrix Q = test::random_spd(3, rng);
  const auto memoryless = lqr_backward(Matrix::Zero(3, 3), rng.normal_matrix(3, 2), Q,
                                       Matrix::Identity(2, 2), test::random_spd(3, rng), 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(memoryless.K[t].cwiseAbs().maxCoeff() < 1e-14);
    CHECK(test::max_abs_diff(memoryless.P[t], Q) < 1e-14);
  }
  CHECK_THROWS_AS(lqr_backward(scalar(1), scalar(1), scalar(1), scalar(1), scalar(1), 0),
                  std::invalid_argument);
}

TEST_CASE("finite-horizon value equals the open-loop optimum") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = trial % 2 == 0 ? 1 : 2;
    const Eigen::Index m = 1 + trial % 2;
    const Matrix A = test::random_uniform(n, n, rng, 1.5);
    const Matrix B = rng.normal_matrix(n, m);
    const Matrix Q = test::random_spd(n, rng);
    const Matrix R = test::random_spd(m, rng);
    const Matrix Q_T = test::random_spd(n, rng);
    const std::size_t T = 1 + static_cast<std::size_t>(trial % 4);
    const Vector x0 = rng.normal_vector(n);
    const auto g = lqr_backward(A, B, Q, R, Q_T, T);
    const double expected = open_loop_optimum(A, B, Q, R, Q_T, T, x0);
    CHECK(x0.dot(g.P[0] * x0) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("finite-horizon value against a brute-force input grid") {
  // Scalar a = 1.2, b = 1, q = r = q_T = 1, T = 2, x0 = 1. For each u0 the
  // best u1 is found on a grid too.
  const double a = 1.2;
  const auto g = lqr_backward(scalar(a), scalar(1), scalar(1), scalar(1), scalar(1), 2);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1500; i <= 0; ++i) {
    const double u0 = i * 1e-3;
    const double x1 = a + u0;
    for (int j = -1500; j <= 0; ++j) {
      const double u1 = j * 1e-3;
      const double x2 = a * x1 + u1;
      best = std::min(best, 1.0 + u0 * u0 + x1 * x1 + u1 * u1 + x2 * x2);
    }
  }
  CHECK(best == doctest::Approx(g.P[0](0, 0)).epsilon(1e-5));
}

TEST_CASE("dare scalar closed forms") {
  for (auto method : {DareMethod::doubling, DareMethod::fixed_point}) {
    DareOptions opt;
    opt.method = method;
    const auto s = solve_dare(scalar(2), scalar(1), scalar(1), scalar(1), opt);
    REQUIRE(s.converged());
    CHECK(std::abs(s.P(0, 0) - (2.0 + std::sqrt(5.0))) < 1e-8);

    const auto stable = solve_dare(scalar(0.5), Matrix::Zero(1, 0), scalar(1), Matrix(0, 0), opt);
    REQUIRE(stable.converged());
    CHECK(std::abs(stable.P(0, 0) - 4.0 / 3.0) < 1e-8);

    const auto unstable = solve_dare(scalar(2), Matrix::Zero(1, 0), scalar(1), Matrix(0, 0), opt);
    CHECK_FALSE(unstable.converged());
  }
  CHECK_THROWS(solve_dare(scalar(2), scalar(1), scalar(1), scalar(1), DareOptions{0.0}));
}

TEST_CASE("dare unstabilizable direction diverges") {
  Matrix A(2, 2);
  A << 1.5, 0, 0, 0.5;
  Matrix B(2, 1);
  B << 0, 1;
  for (auto method : {DareMethod::doubling, DareMethod::fixed_point}) {
    DareOptions opt;
    opt.method = method;
    CHECK_FALSE(solve_dare(A, B, Matrix::Identity(2, 2), scalar(1), opt).converged());
  }
}

TEST_CASE("dare residual and method agreement on random instances") {
  Rng rng(99);
  int tested = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 1 + trial % 8;
    const Eigen::Index m = 1 + trial % 3;
    const Matrix A = rng.normal_matrix(n, n) / std::sqrt(static_cast<double>(n));
    const Matrix B = rng.normal_matrix(n, m);
    const Matrix Q = test::random_spd(n, rng);
    const Matrix R = test::random_spd(m, rng);
    DareOptions fp;
    fp.method = DareMethod::fixed_point;
    const auto d = solve_dare(A, B, Q, R);
    const auto f = solve_dare(A, B, Q, R, fp);
    if (!d.converged()) continue;
    ++tested;
    REQUIRE(f.converged());
    const double scale = std::max(1.0, d.P.norm());
    CHECK(dare_residual(A, B, Q, R, d.P) < 10 * 1e-10 * scale);
    CHECK((d.P - f.P).norm() < 1e-7 * scale);
    CHECK(is_symmetric_psd(d.P));
  }
  CHECK(tested >= 30);
}

TEST_CASE("kalman step scalar example") {
  const auto k = kalman_step(scalar(1), scalar(1), scalar(1), scalar(1), scalar(1));
  CHECK(k.L(0, 0) == doctest::Approx(0.5));
  CHECK(k.E_next(0, 0) == doctest::Approx(1.5));

  const auto open = kalman_step(scalar(1), Matrix::Zero(0, 1), scalar(1), Matrix(0, 0), scalar(1));
  CHECK(open.L.rows() == 1);
  CHECK(open.L.cols() == 0);
  CHECK(open.E_next(0, 0) == doctest::Approx(2.0));

  double previous = 0.0;
  for (double v : {1.0, 10.0, 100.0}) {
    const double e = kalman_step(scalar(1), scalar(1), scalar(1), scalar(v), scalar(1)).E_next(0, 0);
    CHECK(e > previous);
    previous = e;
  }
}

TEST_CASE("kalman forward recursion") {
  const auto g = kalman_forward(scalar(1), scalar(1), scalar(1), scalar(1), scalar(1), 2);
  CHECK(g.E[1](0, 0) == doctest::Approx(1.5));
  CHECK(g.E[2](0, 0) == doctest::Approx(1.6));

  const auto one = kalman_forward(scalar(0.7), scalar(2), scalar(0.3), scalar(0.5), scalar(2), 1);
  const auto step = kalman_step(scalar(0.7), scalar(2), scalar(0.3), scalar(0.5), scalar(2));
  CHECK(one.L[0](0, 0) == doctest::Approx(step.L(0, 0)));
  CHECK(one.E[1](0, 0) == doctest::Approx(step.E_next(0, 0)));

  Rng rng(4);
  const auto perfect = kalman_forward(rng.normal_matrix(3, 3), rng.normal_matrix(2, 3),
                                      Matrix::Zero(3, 3), Matrix::Identity(2, 2),
                                      Matrix::Zero(3, 3), 5);
  for (std::size_t t = 0; t <= 5; ++t) CHECK(perfect.E[t].cwiseAbs().maxCoeff() < 1e-14);
  for (std::size_t t = 0; t < 5; ++t) CHECK(perfect.L[t].cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kalman step with noiseless singular innovation fails") {
  Matrix C(2, 2);
  C << 1, 0, 1, 0;
  CHECK_THROWS_AS(kalman_step(Matrix::Identity(2, 2), C, Matrix::Identity(2, 2),
                              Matrix::Zero(2, 2), Matrix::Identity(2, 2)),
                  SolverError);
}

TEST_CASE("estimator update") {
  const auto sys = LinearNetworkSystem::with_canonical_pools(scalar(1), scalar(1), 1.0);
  const Architecture arch({0}, {0});
  Vector x(1), y(1);
  x << 2;
  y << 4;
  CHECK(estimator_update(sys, arch, scalar(0.5), scalar(0.5), x, y)(0) == doctest::Approx(2.0));

  Rng rng(8);
  Matrix A = rng.normal_matrix(3, 3);
  const auto net = LinearNetworkSystem::with_canonical_pools(A, Matrix::Identity(3, 3), 1.0);
  const Architecture a2({0, 2}, {1});
  const Matrix K = rng.normal_matrix(2, 3);
  const Vector xh = rng.normal_vector(3);
  const Vector yy = rng.normal_vector(1);
  const Vector pred = estimator_update(net, a2, K, Matrix::Zero(3, 1), xh, yy);
  CHECK(test::max_abs_diff(pred, (A - build_input_matrix(net, a2) * K) * xh) < 1e-12);
  CHECK(estimator_update(net, a2, K, rng.normal_matrix(3, 1), Vector::Zero(3), Vector::Zero(1))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK_THROWS(estimator_update(net, a2, K, Matrix::Zero(3, 2), xh, yy));
}

TEST_CASE("more sensors never increase the error covariance") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const Matrix A = rng.normal_matrix(n, n);
    const Matrix pool = rng.normal_matrix(n, n);
    const Matrix W = test::random_psd(n, n, rng);
    const Matrix E = test::random_spd(n, rng);
    const double v = rng.uniform(0.1, 2.0);
    // S = rows {0}, S' = rows {0, 1, ...}
    const Eigen::Index extra = 1 + trial % (n - 1);
    const Matrix C = pool.topRows(1);
    const Matrix C_big = pool.topRows(1 + extra);
    const auto small = kalman_step(A, C, W, v * Matrix::Identity(1, 1), E);
    const auto big = kalman_step(A, C_big, W, v * Matrix::Identity(1 + extra, 1 + extra), E);
    CHECK(loewner_leq(big.E_next, small.E_next, 1e-8));
  }
}

TEST_CASE("more actuators never increase the cost matrix") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const Matrix A = rng.normal_matrix(n, n);
    const Matrix pool = rng.normal_matrix(n, n);
    const Matrix Q = test::random_psd(n, n, rng);
    const Matrix R_pool = test::random_spd(n, rng);
    const Matrix P_next = test::random_spd(n, rng);
    const Eigen::Index k = 1 + trial % (n - 1);
    const auto small = riccati_step(A, pool.leftCols(1), Q, R_pool.topLeftCorner(1, 1), P_next);
    const auto big =
        riccati_step(A, pool.leftCols(k + 1), Q, R_pool.topLeftCorner(k + 1, k + 1), P_next);
    CHECK(loewner_leq(big.P, small.P, 1e-8));
  }
}

TEST_CASE("recursions stay symmetric and PSD") {
  Rng rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    const Matrix A = rng.normal_matrix(n, n);
    const Matrix B = rng.normal_matrix(n, 2);
    const Matrix C = rng.normal_matrix(2, n);
    const auto lqr = lqr_backward(A, B, test::random_psd(n, 1, rng), Matrix::Identity(2, 2),
                                  test::random_psd(n, 2, rng), 8);
    const auto kf = kalman_forward(A, C, test::random_psd(n, 1, rng), 0.5 * Matrix::Identity(2, 2),
                                   test::random_psd(n, 2, rng), 8);
    for (std::size_t t = 0; t <= 8; ++t) {
      CHECK((lqr.P[t] - lqr.P[t].transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((kf.E[t] - kf.E[t].transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(is_symmetric_psd(lqr.P[t]));
      CHECK(is_symmetric_psd(kf.E[t]));
    }
  }
}
