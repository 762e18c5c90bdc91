#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "selftune/cost.hpp"
#include "selftune/network.hpp"
#include "selftune/synthesis.hpp"
#include "support.hpp"

using namespace selftune;
using test::scalar;

namespace {

LinearNetworkSystem scalar_system(double a, double w, double v) {
  return LinearNetworkSystem::with_canonical_pools(scalar(a), scalar(w), v);
}

// Predicted cost by propagating the second moment of X = [x; x_hat] forwards:
// Sigma_0 = X X', Sigma_{tau+1} = A_bar Sigma A_bar' + W_bar.
double forward_moment_cost(const LinearNetworkSystem& sys, const Architecture& arch,
                           const GainSchedule& g, const Vector& x_hat, const CostParameters& p) {
  const auto n = sys.n();
  Vector X(2 * n);
  X << x_hat, x_hat;
  Matrix Sigma = X * X.transpose();
  double J = 0.0;
  for (std::size_t tau = 0; tau < p.horizon; ++tau) {
    const auto aug = build_augmented(sys, arch, g, tau, p);
    J += (aug.Q_bar * Sigma).trace();
    Sigma = aug.A_bar * Sigma * aug.A_bar.transpose() + aug.W_bar;
  }
  return J + (p.Q_T * Sigma.topLeftCorner(n, n)).trace();
}

struct Instance {
  LinearNetworkSystem sys;
  CostParameters params;
  Architecture arch;
  Vector x_hat;
  Matrix E;
};

Instance random_instance(Rng& rng, Eigen::Index n, std::size_t M, std::size_t L,
                         std::size_t T, bool symmetric) {
  Matrix A = rng.normal_matrix(n, n) / std::sqrt(static_cast<double>(n)) * 1.1;
  if (symmetric) A = symmetrize(A);
  const Matrix act = rng.normal_matrix(n, static_cast<Eigen::Index>(M));
  const Matrix sen = rng.normal_matrix(static_cast<Eigen::Index>(L), n);
  LinearNetworkSystem sys(A, act, sen, test::random_psd(n, n, rng), rng.uniform(0.2, 2.0));
  auto p = CostParameters::identity(n, M, L, T);
  p.Q = test::random_psd(n, n, rng);
  p.Q_T = test::random_psd(n, 2, rng);
  p.R1 = test::random_spd(static_cast<Eigen::Index>(M), rng);
  IndexSet acts, sens;
  for (std::size_t i = 0; i < M; ++i)
    if (rng.uniform() < 0.5) acts.push_back(i);
  for (std::size_t j = 0; j < L; ++j)
    if (rng.uniform() < 0.5) sens.push_back(j);
  return {sys, p, Architecture(acts, sens), rng.normal_vector(n), test::random_spd(n, rng)};
}

}  // namespace

TEST_CASE("augmented system scalar example") {
  const auto sys = scalar_system(1, 0.3, 1);
  const Architecture arch({0}, {0});
  GainSchedule g;
  g.horizon = 1;
  g.K = {scalar(0.5)};
  g.L = {scalar(0.5)};
  const auto p = CostParameters::identity(1, 1, 1, 1);
  const auto aug = build_augmented(sys, arch, g, 0, p);
  Matrix expected(2, 2);
  expected << 1, -0.5, 0.5, 0;
  CHECK(test::max_abs_diff(aug.A_bar, expected) < 1e-15);
  CHECK(aug.F.rows() == 2);
  CHECK(aug.F.cols() == 2);
  CHECK(aug.Q_bar(1, 1) == doctest::Approx(0.25));
  CHECK(aug.W_bar(0, 0) == doctest::Approx(0.3));
  CHECK(aug.W_bar(1, 1) == doctest::Approx(0.25));
  CHECK(aug.W_bar(0, 1) == 0.0);
}

TEST_CASE("augmented system without feedback is open loop") {
  Rng rng(1);
  const Matrix A = rng.normal_matrix(3, 3);
  const LinearNetworkSystem sys(A, Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                                test::random_psd(3, 3, rng), 1.0);
  const Architecture arch({0, 1}, {2});
  GainSchedule g;
  g.horizon = 1;
  g.K = {Matrix::Zero(2, 3)};
  g.L = {Matrix::Zero(3, 1)};
  const auto aug = build_augmented(sys, arch, g, 0, CostParameters::identity(3, 3, 3, 1));
  CHECK(test::max_abs_diff(aug.A_bar.topLeftCorner(3, 3), A) == 0.0);
  CHECK(test::max_abs_diff(aug.A_bar.bottomRightCorner(3, 3), A) == 0.0);
  CHECK(aug.A_bar.topRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(aug.A_bar.bottomLeftCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(test::max_abs_diff(aug.W_bar.topLeftCorner(3, 3), sys.W()) < 1e-15);
  CHECK(aug.W_bar.bottomRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(aug.Q_bar.bottomRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(build_augmented(sys, arch, g, 1, CostParameters::identity(3, 3, 3, 1)));
}

TEST_CASE("predicted cost scalar example") {
  const auto sys = scalar_system(1, 0, 1);
  const Architecture arch({0}, {0});
  const auto p = CostParameters::identity(1, 1, 1, 1);
  const auto pc = predicted_cost(sys, arch, scalar(1), scalar(1), p);
  CHECK(pc.J == doctest::Approx(1.5));
  CHECK(pc.gains.K[0](0, 0) == doctest::Approx(0.5));
  CHECK(pc.gains.L[0](0, 0) == doctest::Approx(0.5));

  // Z_0 = A_bar' Z_1 A_bar + Q_bar with Z_1 = blkdiag(1, 0).
  const auto aug = build_augmented(sys, arch, pc.gains, 0, p);
  Matrix Z1 = Matrix::Zero(2, 2);
  Z1(0, 0) = 1;
  const Matrix Z0 = aug.A_bar.transpose() * Z1 * aug.A_bar + aug.Q_bar;
  Matrix expected(2, 2);
  expected << 2, -0.5, -0.5, 0.5;
  CHECK(test::max_abs_diff(Z0, expected) < 1e-14);
}

TEST_CASE("predicted cost at zero state without process noise") {
  const auto sys = scalar_system(1.3, 0, 2.5);
  const auto pc = predicted_cost(sys, Architecture({0}, {0}), scalar(0), scalar(1),
                                 CostParameters::identity(1, 1, 1, 1));
  CHECK(pc.J == doctest::Approx(0.0));
  auto p = CostParameters::identity(1, 1, 1, 1);
  p.horizon = 0;
  CHECK_THROWS_AS(predicted_cost(sys, Architecture({0}, {0}), scalar(1), scalar(1), p),
                  std::invalid_argument);
}

TEST_CASE("predicted cost matches forward moment propagation") {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    auto in = random_instance(rng, 1 + trial % 5, 3, 3, 1 + trial % 6, trial % 2 == 0);
    const auto pc = predicted_cost(in.sys, in.arch, in.x_hat, in.E, in.params);
    const double oracle = forward_moment_cost(in.sys, in.arch, pc.gains, in.x_hat, in.params);
    CHECK(pc.J == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(pc.J >= 0.0);
  }
}

TEST_CASE("fast predictor equals the reference") {
  Rng rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    auto in = random_instance(rng, 1 + trial % 6, 4, 4, 1 + trial % 7, trial % 2 == 0);
    const CostPredictor fast(in.sys, in.params);
    CHECK(fast.diagonalized() == (trial % 2 == 0));
    const auto state = fast.prepare(in.x_hat, in.E);
    const double ref = predicted_cost(in.sys, in.arch, in.x_hat, in.E, in.params).J;
    CHECK(fast.predicted(in.arch, state) == doctest::Approx(ref).epsilon(1e-9));
    // Cached terms give the same answer on reuse.
    CHECK(fast.predicted(in.arch, state) == doctest::Approx(ref).epsilon(1e-9));
    const Architecture empty;
    CHECK(fast.predicted(empty, state) ==
          doctest::Approx(predicted_cost(in.sys, empty, in.x_hat, in.E, in.params).J)
              .epsilon(1e-9));
  }
}

TEST_CASE("predicted cost is nondecreasing in the terminal weight") {
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, 2 + trial % 3, 3, 3, 3, false);
    const double base = predicted_cost(in.sys, in.arch, in.x_hat, in.E, in.params).J;
    in.params.Q_T += test::random_psd(in.sys.n(), 1, rng);
    const double heavier = predicted_cost(in.sys, in.arch, in.x_hat, in.E, in.params).J;
    CHECK(heavier >= base - 1e-9 * std::max(1.0, base));
  }
}

TEST_CASE("predicted cost agrees with Monte Carlo rollouts") {
  Rng rng(15);
  auto in = random_instance(rng, 3, 2, 2, 4, false);
  in.arch = Architecture({0}, {1});
  const auto pc = predicted_cost(in.sys, in.arch, in.x_hat, in.E, in.params);
  const auto n = in.sys.n();
  std::vector<AugmentedStep> aug;
  for (std::size_t tau = 0; tau < in.params.horizon; ++tau)
    aug.push_back(build_augmented(in.sys, in.arch, pc.gains, tau, in.params));
  Eigen::SelfAdjointEigenSolver<Matrix> es(in.sys.W());
  const Matrix W_root = es.eigenvectors() * es.eigenvalues().cwiseMax(0).cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
  const double v_std = std::sqrt(in.sys.v_var());

  Rng mc(16);
  const int rollouts = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    Vector X(2 * n);
    X << in.x_hat, in.x_hat;
    double cost = 0.0;
    for (std::size_t tau = 0; tau < in.params.horizon; ++tau) {
      cost += X.dot(aug[tau].Q_bar * X);
      Vector noise(aug[tau].F.cols());
      noise << W_root * mc.normal_vector(n), v_std * mc.normal_vector(noise.size() - n);
      X = aug[tau].A_bar * X + aug[tau].F * noise;
    }
    cost += X.head(n).dot(in.params.Q_T * X.head(n));
    sum += cost;
    sum_sq += cost * cost;
  }
  const double mean = sum / rollouts;
  const double se = std::sqrt((sum_sq / rollouts - mean * mean) / rollouts);
  CHECK(std::abs(mean - pc.J) < 3 * se);
}

TEST_CASE("true stage cost") {
  GainSchedule g;
  g.K = {scalar(0.5)};
  const auto p = CostParameters::identity(1, 1, 1, 1);
  const Architecture arch({0}, {});
  CHECK(true_stage_cost(scalar(2), scalar(1), arch, g, p) == doctest::Approx(4.25));
  CHECK(true_stage_cost(scalar(0), scalar(0), arch, g, p) == 0.0);
  g.K = {scalar(0)};
  CHECK(true_stage_cost(scalar(3), scalar(1), arch, g, p) == doctest::Approx(9.0));
}

TEST_CASE("running cost") {
  auto p = CostParameters::identity(2, 3, 3, 1);
  p.R2_act.setConstant(100);
  p.R2_sen.setConstant(100);
  CHECK(running_cost(Architecture({0, 1, 2}, {0, 2}), p) == doctest::Approx(500));
  CHECK(running_cost(Architecture(), p) == 0.0);
  p.R2_act << 1, 2, 3;
  p.R2_sen.setZero();
  CHECK(running_cost(Architecture({0, 2}, {1}), p) == doctest::Approx(4));
}

TEST_CASE("switching cost") {
  auto p = CostParameters::identity(2, 2, 2, 1);
  p.R3_act.setConstant(100);
  p.R3_sen.setConstant(100);
  const Architecture a({0}, {1});
  CHECK(switching_cost(a, a, p) == 0.0);
  CHECK(switching_cost(Architecture({0}, {1}), Architecture({1}, {1}), p) == doctest::Approx(200));
  CHECK(switching_cost(Architecture({0}, {0, 1}), a, p) == doctest::Approx(100));

  p.switching = SwitchingConvention::signed_;
  CHECK(switching_cost(Architecture({0}, {1}), Architecture({1}, {1}), p) == doctest::Approx(0));
  CHECK(switching_cost(Architecture({}, {1}), Architecture({1}, {1}), p) == doctest::Approx(-100));
}

TEST_CASE("switching cost is symmetric under the absolute convention") {
  Rng rng(17);
  auto p = CostParameters::identity(2, 6, 6, 1);
  for (Eigen::Index i = 0; i < 6; ++i) {
    p.R3_act(i) = rng.uniform(0, 10);
    p.R3_sen(i) = rng.uniform(0, 10);
  }
  auto draw = [&] {
    IndexSet a, s;
    for (std::size_t i = 0; i < 6; ++i) {
      if (rng.uniform() < 0.5) a.push_back(i);
      if (rng.uniform() < 0.5) s.push_back(i);
    }
    return Architecture(a, s);
  };
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = draw(), b = draw();
    CHECK(switching_cost(a, b, p) == doctest::Approx(switching_cost(b, a, p)));
    CHECK(switching_cost(a, a, p) == 0.0);
  }
}

TEST_CASE("total estimated cost") {
  const auto sys = scalar_system(1, 0, 1);
  auto p = CostParameters::identity(1, 1, 1, 1);
  const Architecture arch({0}, {0});
  const auto plain = total_estimated_cost(sys, arch, arch, scalar(1), scalar(1), p);
  CHECK(plain.breakdown.total == doctest::Approx(1.5));
  CHECK(plain.breakdown.control == doctest::Approx(1.5));

  p.R2_act.setConstant(250);
  p.R2_sen.setConstant(250);
  p.R3_act.setConstant(100);
  p.R3_sen.setConstant(100);
  const auto with_costs = total_estimated_cost(sys, arch, arch, scalar(1), scalar(1), p);
  CHECK(with_costs.breakdown.total == doctest::Approx(501.5));
  CHECK(with_costs.breakdown.switching == 0.0);
  const auto switched =
      total_estimated_cost(sys, arch, Architecture({}, {0}), scalar(1), scalar(1), p);
  CHECK(switched.breakdown.switching == doctest::Approx(100));
  CHECK(switched.breakdown.total == doctest::Approx(601.5));
}

TEST_CASE("cost ledger accumulation") {
  CostLedger first;
  first.accumulate_true_cost(0, 0, 100, 0);
  CHECK(first.cumulative() == 0.0);

  CostLedger zero;
  zero.accumulate_true_cost(0, 0, 0, 0);
  zero.accumulate_true_cost(0, 0, 0, 1);
  CHECK(zero.cumulative() == 0.0);

  CostLedger l;
  l.accumulate_true_cost(1, 2, 5, 0);
  l.accumulate_true_cost(1, 2, 5, 1);
  CHECK(l.cumulative() == doctest::Approx(11));
  CHECK(l.entries()[0].cumulative_true == doctest::Approx(3));
  CHECK_THROWS(l.accumulate_true_cost(1, 1, 1, 5));
}

TEST_CASE("ledger replay equals incremental accumulation") {
  Rng rng(18);
  std::vector<double> stage(50), running(50), switching(50);
  CostLedger incremental;
  double prev = 0.0;
  for (std::size_t t = 0; t < 50; ++t) {
    stage[t] = rng.uniform(0, 10);
    running[t] = rng.uniform(0, 10);
    switching[t] = rng.uniform(0, 10);
    incremental.accumulate_true_cost(stage[t], running[t], switching[t], t);
    CHECK(incremental.cumulative() >= prev);
    prev = incremental.cumulative();
  }
  CostLedger replay;
  for (std::size_t t = 0; t < 50; ++t)
    replay.accumulate_true_cost(stage[t], running[t], switching[t], t);
  CHECK(replay.cumulative() == incremental.cumulative());
  double direct = 0.0;
  for (std::size_t t = 0; t < 50; ++t) direct += stage[t] + running[t] + (t > 0 ? switching[t] : 0);
  CHECK(incremental.cumulative() == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("cost parameter validation") {
  const auto sys = scalar_system(1, 1, 1);
  auto p = CostParameters::identity(1, 1, 1, 1);
  CHECK_NOTHROW(p.validate(sys));
  p.R2_act(0) = -1;
  CHECK_THROWS(p.validate(sys));
  p = CostParameters::identity(1, 1, 1, 1);
  p.R1(0, 0) = 0;
  CHECK_THROWS(p.validate(sys));
  p = CostParameters::identity(1, 2, 1, 1);
  CHECK_THROWS(p.validate(sys));
}
