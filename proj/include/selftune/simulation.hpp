#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selftune/cost.hpp"
#include "selftune/greedy.hpp"
#include "selftune/network.hpp"
#include "selftune/synthesis.hpp"

namespace selftune {

enum class ArchitectureMode { fixed, self_tuning };
enum class FeedbackMode { state, output };

// What a state-feedback run applies when the DARE for its architecture
// diverges.
enum class DivergedPolicy { zero_input, last_finite };

struct SimulationConfig {
  explicit SimulationConfig(LinearNetworkSystem sys) : system(std::move(sys)) {}

  std::string name;
  LinearNetworkSystem system;
  ArchitectureMode mode = ArchitectureMode::fixed;
  FeedbackMode feedback = FeedbackMode::output;
  // Fixed architecture, or the starting point of self-tuning. nullopt draws a
  // seeded random architecture satisfying `constraints`.
  std::optional<Architecture> initial_architecture;
  ArchitectureConstraints constraints;
  CostParameters costs;  // costs.horizon is the prediction horizon
  std::size_t actuator_budget = 1;  // state feedback: actuators per step
  std::size_t steps = 100;
  double x0_std = 1.0;              // x(0) ~ N(0, x0_std^2 I)
  double E0_scale = 1.0;            // E(0) = E0_scale I
  bool estimate_from_state = false; // x_hat(0) = x(0) instead of 0
  bool identify = false;            // state feedback: least-squares A_hat
  DareOptions dare;
  DivergedPolicy on_diverged = DivergedPolicy::zero_input;
  SwapOptions swap;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct StepRecord {
  std::size_t t = 0;
  Vector x;
  Vector x_hat;
  Vector error;
  Vector u;
  Architecture arch;
  bool policy_bounded = true;
  std::size_t evaluations = 0;    // architectures scored by the optimizer
  double compute_seconds = 0.0;   // wall clock of the architecture step
};

struct SimulationTrace {
  std::string name;
  ArchitectureMode mode = ArchitectureMode::fixed;
  FeedbackMode feedback = FeedbackMode::output;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  CostLedger ledger;
  std::vector<std::string> warnings;

  double cumulative_cost() const { return ledger.cumulative(); }
};

// Draws an architecture with uniformly random cardinalities inside the
// bounds and uniformly random members.
Architecture random_feasible_architecture(const LinearNetworkSystem& system,
                                          const ArchitectureConstraints& constraints,
                                          std::uint64_t seed);

// State feedback: fixed mode applies the infinite-horizon LQR gain of the
// configured actuator set; self-tuning reselects actuators every step with
// the greedy state-feedback selector. x+ = A x + B u + w, w ~ N(0, W).
SimulationTrace simulate_lqr(const SimulationConfig& config);

// Output feedback: per step the architecture is chosen (greedy swapping from
// the previous one, or held fixed), gains are synthesized over the
// prediction horizon, u = -K0 x_hat is applied, the committed sensors
// measure y = C x + v, and the estimate and error covariance advance.
SimulationTrace simulate_lqg(const SimulationConfig& config);

// Dispatches on config.feedback.
SimulationTrace simulate(const SimulationConfig& config);

// Stage cost from stored quantities: x' Q x + u' R1_active u.
double stage_cost(const Vector& x, const Vector& u, const Architecture& arch,
                  const CostParameters& costs);

// Recomputes the true-cost columns of a trace from its stored states,
// inputs and architectures.
CostLedger replay_ledger(const SimulationTrace& trace, const CostParameters& costs);

struct RunSummary {
  std::string name;
  double cumulative_cost = 0.0;
  double cost_ratio = 1.0;  // cumulative cost of the first run / this run
  double final_state_norm = 0.0;
  double max_state_norm = 0.0;
  double final_estimate_norm = 0.0;
  double final_error_norm = 0.0;
  std::vector<std::size_t> changes_per_step;  // change_count vs previous step
  double mean_changes_per_step = 0.0;
  double mean_compute_seconds = 0.0;
};

struct CampaignSummary {
  std::vector<RunSummary> runs;
};

// Ratios are relative to traces[0].
CampaignSummary compare_runs(std::span<const SimulationTrace> traces);

}  // namespace selftune
