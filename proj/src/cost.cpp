#include "selftune/cost.hpp"

#include <cmath>
#include <string>

namespace selftune {

CostParameters CostParameters::identity(Eigen::Index n, std::size_t num_actuators,
                                        std::size_t num_sensors, std::size_t horizon) {
  const auto M = static_cast<Eigen::Index>(num_actuators);
  const auto L = static_cast<Eigen::Index>(num_sensors);
  CostParameters p;
  p.Q = Matrix::Identity(n, n);
  p.R1 = Matrix::Identity(M, M);
  p.Q_T = Matrix::Identity(n, n);
  p.R2_act = Vector::Zero(M);
  p.R2_sen = Vector::Zero(L);
  p.R3_act = Vector::Zero(M);
  p.R3_sen = Vector::Zero(L);
  p.horizon = horizon;
  return p;
}

void CostParameters::validate(const LinearNetworkSystem& system) const {
  const auto n = system.n();
  const auto M = static_cast<Eigen::Index>(system.num_actuators());
  const auto L = static_cast<Eigen::Index>(system.num_sensors());
  if (horizon < 1) throw std::invalid_argument("prediction horizon must be >= 1");
  if (Q.rows() != n || Q.cols() != n || !is_symmetric_psd(Q))
    throw std::invalid_argument("Q must be an n x n symmetric PSD matrix");
  if (Q_T.rows() != n || Q_T.cols() != n || !is_symmetric_psd(Q_T))
    throw std::invalid_argument("Q_T must be an n x n symmetric PSD matrix");
  if (R1.rows() != M || R1.cols() != M || !is_symmetric_pd(R1))
    throw std::invalid_argument("R1 must be an M x M symmetric PD matrix");
  auto check = [](const Vector& v, Eigen::Index len, const char* name) {
    if (v.size() != len) throw std::invalid_argument(std::string(name) + " has wrong length");
    if (v.size() > 0 && !(v.minCoeff() >= 0.0))
      throw std::invalid_argument(std::string(name) + " must be elementwise >= 0");
  };
  check(R2_act, M, "R2_act");
  check(R2_sen, L, "R2_sen");
  check(R3_act, M, "R3_act");
  check(R3_sen, L, "R3_sen");
}

Matrix CostParameters::active_input_cost(const Architecture& arch) const {
  return principal_submatrix(R1, arch.actuators());
}

AugmentedStep build_augmented(const LinearNetworkSystem& system, const Architecture& arch,
                              const GainSchedule& gains, std::size_t tau,
                              const CostParameters& params) {
  if (tau >= gains.K.size() || tau >= gains.L.size())
    throw std::invalid_argument("build_augmented: gain schedule shorter than tau + 1");
  const Matrix B = build_input_matrix(system, arch);
  const Matrix C = build_output_matrix(system, arch);
  const Matrix& A = system.A();
  const Matrix& K = gains.K[tau];
  const Matrix& L = gains.L[tau];
  const auto n = system.n();
  const auto s = C.rows();
  if (K.rows() != B.cols() || K.cols() != n || L.rows() != n || L.cols() != s)
    throw std::invalid_argument("build_augmented: gains do not match the architecture");

  const Matrix BK = B * K;
  const Matrix AL = A * L;
  const Matrix ALC = AL * C;

  AugmentedStep out;
  out.A_bar.resize(2 * n, 2 * n);
  out.A_bar << A, -BK, ALC, A - ALC - BK;

  out.F = Matrix::Zero(2 * n, n + s);
  out.F.topLeftCorner(n, n).setIdentity();
  out.F.bottomRightCorner(n, s) = AL;

  out.Q_bar = Matrix::Zero(2 * n, 2 * n);
  out.Q_bar.topLeftCorner(n, n) = params.Q;
  out.Q_bar.bottomRightCorner(n, n) =
      symmetrize(K.transpose() * params.active_input_cost(arch) * K);

  Matrix noise = Matrix::Zero(n + s, n + s);
  noise.topLeftCorner(n, n) = system.W();
  noise.bottomRightCorner(s, s) = system.v_var() * Matrix::Identity(s, s);
  out.W_bar = symmetrize(out.F * noise * out.F.transpose());
  return out;
}

PredictedCost predicted_cost(const LinearNetworkSystem& system, const Architecture& arch,
                             const Vector& x_hat, const Matrix& E_t,
                             const CostParameters& params) {
  const std::size_t T = params.horizon;
  if (T < 1) throw std::invalid_argument("predicted_cost: horizon must be >= 1");
  const auto n = system.n();
  if (x_hat.size() != n) throw std::invalid_argument("predicted_cost: x_hat has wrong length");

  const Matrix B = build_input_matrix(system, arch);
  const Matrix C = build_output_matrix(system, arch);
  const Matrix V = system.v_var() * Matrix::Identity(C.rows(), C.rows());

  PredictedCost out;
  out.gains = lqr_backward(system.A(), B, params.Q, params.active_input_cost(arch), params.Q_T, T);
  auto est = kalman_forward(system.A(), C, system.W(), V, E_t, T);
  out.gains.L = std::move(est.L);
  out.gains.E = std::move(est.E);

  Matrix Z = Matrix::Zero(2 * n, 2 * n);
  Z.topLeftCorner(n, n) = params.Q_T;
  double noise_cost = 0.0;
  for (std::size_t tau = T; tau-- > 0;) {
    const auto aug = build_augmented(system, arch, out.gains, tau, params);
    noise_cost += (Z * aug.W_bar).trace();
    Z = symmetrize(aug.A_bar.transpose() * Z * aug.A_bar + aug.Q_bar);
  }
  Vector X(2 * n);
  X << x_hat, x_hat;
  out.J = X.dot(Z * X) + noise_cost;
  return out;
}

double true_stage_cost(const Vector& x, const Vector& x_hat, const Architecture& arch,
                       const GainSchedule& gains, const CostParameters& params) {
  if (gains.K.empty()) throw std::invalid_argument("true_stage_cost: empty gain schedule");
  const Matrix& K0 = gains.K.front();
  if (x.size() != params.Q.rows() || x_hat.size() != K0.cols() ||
      K0.rows() != static_cast<Eigen::Index>(arch.actuators().size()))
    throw std::invalid_argument("true_stage_cost: dimension mismatch");
  const Vector u = K0 * x_hat;
  return x.dot(params.Q * x) + u.dot(params.active_input_cost(arch) * u);
}

double running_cost(const Architecture& arch, const CostParameters& params) {
  double c = 0.0;
  for (auto i : arch.actuators()) c += params.R2_act(static_cast<Eigen::Index>(i));
  for (auto j : arch.sensors()) c += params.R2_sen(static_cast<Eigen::Index>(j));
  return c;
}

namespace {

double toggle_cost(const IndexSet& now, const IndexSet& prev, const Vector& r3, bool absolute) {
  // Walk the two sorted sets; elements in only one of them toggled.
  double c = 0.0;
  std::size_t i = 0, j = 0;
  while (i < now.size() || j < prev.size()) {
    if (j == prev.size() || (i < now.size() && now[i] < prev[j])) {
      c += r3(static_cast<Eigen::Index>(now[i++]));  // activated
    } else if (i == now.size() || prev[j] < now[i]) {
      const double r = r3(static_cast<Eigen::Index>(prev[j++]));  // deactivated
      c += absolute ? r : -r;
    } else {
      ++i;
      ++j;
    }
  }
  return c;
}

}  // namespace

double switching_cost(const Architecture& arch, const Architecture& arch_prev,
                      const CostParameters& params) {
  const bool absolute = params.switching == SwitchingConvention::absolute;
  return toggle_cost(arch.actuators(), arch_prev.actuators(), params.R3_act, absolute) +
         toggle_cost(arch.sensors(), arch_prev.sensors(), params.R3_sen, absolute);
}

EstimatedCost total_estimated_cost(const LinearNetworkSystem& system, const Architecture& arch,
                                   const Architecture& arch_prev, const Vector& x_hat,
                                   const Matrix& E_t, const CostParameters& params) {
  auto pc = predicted_cost(system, arch, x_hat, E_t, params);
  EstimatedCost out;
  out.breakdown.control = pc.J;
  out.breakdown.running = running_cost(arch, params);
  out.breakdown.switching = switching_cost(arch, arch_prev, params);
  out.breakdown.total = out.breakdown.control + out.breakdown.running + out.breakdown.switching;
  out.gains = std::move(pc.gains);
  return out;
}

const LedgerEntry& CostLedger::accumulate_true_cost(double stage, double running,
                                                    double switching, std::size_t t,
                                                    const CostBreakdown& estimated) {
  if (t != entries_.size())
    throw std::invalid_argument("accumulate_true_cost: steps must be appended in order");
  LedgerEntry e;
  e.t = t;
  e.estimated = estimated;
  e.true_stage = stage;
  e.true_running = running;
  e.true_switching = switching;
  e.cumulative_true = cumulative() + stage + running + (t >= 1 ? switching : 0.0);
  entries_.push_back(e);
  return entries_.back();
}

}  // namespace selftune
