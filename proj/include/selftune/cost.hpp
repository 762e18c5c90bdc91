#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "selftune/network.hpp"
#include "selftune/synthesis.hpp"

namespace selftune {

enum class SwitchingConvention {
  absolute,  // every toggle costs R3_i
  signed_,   // literal (A'_t - A'_{t-1})^T R3: deactivations earn -R3_i
};

struct CostParameters {
  Matrix Q;        // n x n state cost
  Matrix R1;       // M x M input cost over the whole actuator pool
  Matrix Q_T;      // n x n terminal cost
  Vector R2_act;   // running cost per actuator (length M)
  Vector R2_sen;   // running cost per sensor (length L)
  Vector R3_act;   // switching cost per actuator
  Vector R3_sen;   // switching cost per sensor
  std::size_t horizon = 1;
  SwitchingConvention switching = SwitchingConvention::absolute;

  // Q = Q_T = I, R1 = I, zero architecture costs.
  static CostParameters identity(Eigen::Index n, std::size_t num_actuators,
                                 std::size_t num_sensors, std::size_t horizon);

  void validate(const LinearNetworkSystem& system) const;

  // Principal block of R1 for the active actuators.
  Matrix active_input_cost(const Architecture& arch) const;
};

// Closed-loop augmented dynamics of X = [x; x_hat] at prediction step tau.
struct AugmentedStep {
  Matrix A_bar;  // 2n x 2n
  Matrix F;      // 2n x (n + |S|)
  Matrix Q_bar;  // 2n x 2n
  Matrix W_bar;  // 2n x 2n
};

// A_bar = [[A, -B K], [A L C, A - A L C - B K]], F = [[I, 0], [0, A L]],
// Q_bar = blkdiag(Q, K' R1 K), W_bar = F blkdiag(W, V) F'.
AugmentedStep build_augmented(const LinearNetworkSystem& system, const Architecture& arch,
                              const GainSchedule& gains, std::size_t tau,
                              const CostParameters& params);

struct PredictedCost {
  double J = 0.0;
  GainSchedule gains;  // K, P, L, E over the horizon
};

// Expected closed-loop cost over the horizon for the estimate x_hat and error
// covariance E_t, with the architecture held fixed:
//   J = X^T Z_0 X + sum_tau tr(Z_{tau+1} W_bar_tau),  X = [x_hat; x_hat],
//   Z_T = blkdiag(Q_T, 0),  Z_tau = A_bar_tau^T Z_{tau+1} A_bar_tau + Q_bar_tau.
// Dense 2n x 2n reference evaluation; CostPredictor is the fast path.
PredictedCost predicted_cost(const LinearNetworkSystem& system, const Architecture& arch,
                             const Vector& x_hat, const Matrix& E_t,
                             const CostParameters& params);

// x' Q x + x_hat' K0' R1 K0 x_hat.
double true_stage_cost(const Vector& x, const Vector& x_hat, const Architecture& arch,
                       const GainSchedule& gains, const CostParameters& params);

double running_cost(const Architecture& arch, const CostParameters& params);

double switching_cost(const Architecture& arch, const Architecture& arch_prev,
                      const CostParameters& params);

struct CostBreakdown {
  double control = 0.0;
  double running = 0.0;
  double switching = 0.0;
  double total = 0.0;
};

struct EstimatedCost {
  CostBreakdown breakdown;
  GainSchedule gains;
};

// predicted_cost + running_cost + switching_cost.
EstimatedCost total_estimated_cost(const LinearNetworkSystem& system, const Architecture& arch,
                                   const Architecture& arch_prev, const Vector& x_hat,
                                   const Matrix& E_t, const CostParameters& params);

struct LedgerEntry {
  std::size_t t = 0;
  CostBreakdown estimated;
  double true_stage = 0.0;
  double true_running = 0.0;
  double true_switching = 0.0;
  double cumulative_true = 0.0;
};

// Per-step cost records. cumulative_true(t) = sum_{tau<=t} (stage + running)
// + sum_{1<=tau<=t} switching; the switching cost at t = 0 is recorded but
// not accumulated.
class CostLedger {
 public:
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double cumulative() const { return entries_.empty() ? 0.0 : entries_.back().cumulative_true; }

  // Appends step t; t must equal size().
  const LedgerEntry& accumulate_true_cost(double stage, double running, double switching,
                                          std::size_t t, const CostBreakdown& estimated = {});

 private:
  std::vector<LedgerEntry> entries_;
};

// Fast evaluator of predicted_cost for many candidate architectures on one
// system. Because K_tau is the Riccati-optimal gain, completing the square
// splits the horizon cost into
//   J = x_hat' P_0 x_hat + sum_tau tr(P_{tau+1} W)           (actuators only)
//     + sum_tau tr(K_tau' (R + B'P_{tau+1}B) K_tau S_tau),
// where S_tau is the covariance of x - x_hat along the prediction, S_0 = 0,
//   S_{tau+1} = A (I - L C) S (I - L C)' A' + W + v A L L' A'  (sensors only).
// Actuator terms are cached for the predictor's lifetime, sensor terms per
// State, so a candidate costs only the coupling traces. When A is symmetric
// everything is rotated into its eigenbasis, making products with A diagonal.
// Caches are unsynchronized: use one predictor and State per thread.
class CostPredictor {
 public:
  CostPredictor(const LinearNetworkSystem& system, const CostParameters& params);

  // x_hat and E_t in the predictor's coordinates plus the per-step sensor
  // cache. Prepare once per time step.
  struct State {
    Vector x;
    Matrix E;
    mutable std::map<IndexSet, std::vector<Matrix>> sensor_terms;  // S_1..S_{T-1}
  };
  State prepare(const Vector& x_hat, const Matrix& E_t) const;

  // Equals predicted_cost(system, arch, x_hat, E_t, params).J.
  double predicted(const Architecture& arch, const State& state) const;
  double predicted(const Architecture& arch, const Vector& x_hat, const Matrix& E_t) const {
    return predicted(arch, prepare(x_hat, E_t));
  }

  // predicted + running_cost + switching_cost.
  CostBreakdown total(const Architecture& arch, const Architecture& arch_prev,
                      const State& state) const;

  const LinearNetworkSystem& system() const { return system_; }
  const CostParameters& params() const { return params_; }
  bool diagonalized() const { return diagonal_; }
  std::size_t cached_actuator_sets() const { return actuator_terms_.size(); }

 private:
  struct ActuatorTerms {
    Matrix P0;
    double noise = 0.0;      // sum_tau tr(P_{tau+1} W)
    std::vector<Matrix> G;   // G_tau' G_tau = K_tau' Lambda_tau K_tau
  };
  const ActuatorTerms& actuator_terms(const IndexSet& actuators) const;
  const std::vector<Matrix>& sensor_terms(const IndexSet& sensors, const State& state) const;

  LinearNetworkSystem system_;
  CostParameters params_;
  bool diagonal_ = false;
  Matrix basis_;  // orthogonal T; rotated quantities are T' M T
  Vector a_diag_;
  Matrix A_;
  Matrix act_pool_;
  Matrix sen_pool_;
  Matrix Q_;
  Matrix Q_T_;
  Matrix W_;
  mutable std::map<IndexSet, ActuatorTerms> actuator_terms_;
};

}  // namespace selftune
