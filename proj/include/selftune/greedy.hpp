#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "selftune/cost.hpp"
#include "selftune/network.hpp"
#include "selftune/synthesis.hpp"

namespace selftune {

// Metric values are doubles; +infinity marks an unbounded (e.g. non
// stabilizing) choice. It compares above every finite value and equal to
// itself. NaN is never produced by the metrics here.
using SetMetric = std::function<double(const IndexSet&)>;
using ArchitectureMetric = std::function<double(const Architecture&)>;

enum class ChoiceKind { no_update, add_actuator, add_sensor, remove_actuator, remove_sensor };

// One modification of an architecture; no_update is the c_0 choice.
struct Choice {
  ChoiceKind kind = ChoiceKind::no_update;
  std::size_t index = 0;

  static Choice none() { return {}; }
  static Choice add(DeviceKind device, std::size_t index);
  static Choice remove(DeviceKind device, std::size_t index);

  bool is_none() const { return kind == ChoiceKind::no_update; }
  DeviceKind device() const;

  friend bool operator==(const Choice&, const Choice&) = default;
};

Architecture apply(const Architecture& arch, const Choice& choice);

// H(s1, s2) = max(|s1 \ s2|, |s2 \ s1|) for sorted sets.
std::size_t change_count(const IndexSet& s1, const IndexSet& s2);

// Change count summed over both device kinds.
std::size_t change_count(const Architecture& a, const Architecture& b);

// Grows a set from empty, adding argmin_c metric(S + c) until |S| = max_size.
// Ties go to the lowest index. Throws std::invalid_argument when max_size
// exceeds pool_size.
IndexSet greedy_select(std::size_t pool_size, const SetMetric& metric, std::size_t max_size);

// Shrinks the full pool, removing argmin_c metric(S - c) until |S| = max_size.
IndexSet greedy_reject(std::size_t pool_size, const SetMetric& metric, std::size_t max_size);

enum class ForcedMode { selection, rejection };

// Bounds that force a subsequence to move: in selection mode all four bounds
// are shifted up by `shift`; rejection mode uses the base bounds.
struct ForcedConstraints {
  ForcedMode mode = ForcedMode::rejection;
  ArchitectureConstraints base;
  std::size_t shift = 1;

  std::size_t min(DeviceKind kind) const;
  std::size_t max(DeviceKind kind) const;
  bool satisfied(const Architecture& arch) const;
};

// Priority choices for a selection subsequence. If either set is below its
// shifted minimum only the deficient kinds' additions are returned;
// otherwise additions for kinds below their shifted maxima, plus no_update
// when the shifted constraints hold. Order: no_update, actuators ascending,
// sensors ascending (the tie-break order of greedy_swap).
std::vector<Choice> selection_choices(const Architecture& arch,
                                      const ArchitectureConstraints& constraints,
                                      std::size_t shift, std::size_t num_actuators,
                                      std::size_t num_sensors);

// Mirror of selection_choices with removals against the unshifted bounds.
std::vector<Choice> rejection_choices(const Architecture& arch,
                                      const ArchitectureConstraints& constraints);

struct SwapOptions {
  // Return the cheapest base-feasible architecture seen at the end of any
  // outer iteration (including the initial one) instead of the final one.
  bool keep_best = true;
  // Record every accepted step in SwapResult::path.
  bool record_path = false;
  std::size_t max_outer_iterations = 10000;
};

struct SwapStep {
  ForcedMode phase;
  Choice choice;
  Architecture arch;  // after applying choice
  double cost;
};

struct SwapResult {
  Architecture arch;
  double cost = 0.0;
  double initial_cost = 0.0;
  std::size_t evaluations = 0;       // distinct architectures scored
  std::size_t outer_iterations = 0;
  bool cycle_detected = false;
  std::vector<SwapStep> path;
};

// Greedy swapping: alternating forced selection and rejection subsequences
// starting from arch_init, minimizing `metric`. Budgets come from
// constraints.max_changes (N, nullopt = unbounded) and
// constraints.per_subsequence (N'). Throws std::invalid_argument when
// arch_init violates the base constraints.
SwapResult greedy_swap(const Architecture& arch_init, std::size_t num_actuators,
                       std::size_t num_sensors, const ArchitectureConstraints& constraints,
                       const ArchitectureMetric& metric, const SwapOptions& options = {});

struct ArchitectureUpdate {
  Architecture arch;
  CostBreakdown estimated;
  GainSchedule gains;
  SwapResult search;
};

// Greedy swapping on the total estimated cost, with switching measured
// against arch_init (the previously committed architecture). Gains for the
// returned architecture come from the reference predicted_cost.
ArchitectureUpdate greedy_swap(const CostPredictor& predictor, const Architecture& arch_init,
                               const Vector& x_hat, const Matrix& E_t,
                               const ArchitectureConstraints& constraints,
                               const SwapOptions& options = {});

ArchitectureUpdate greedy_swap(const LinearNetworkSystem& system, const Architecture& arch_init,
                               const Vector& x_hat, const Matrix& E_t,
                               const CostParameters& params,
                               const ArchitectureConstraints& constraints,
                               const SwapOptions& options = {});

struct Identification {
  Matrix A_hat;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

// Least-squares estimate of A from x(tau+1) = A x(tau) + B_tau u(tau):
// regress y_tau = x(tau+1) - B_tau u(tau) on x(tau). A rank-deficient
// regressor yields the minimum-norm solution with rank_deficient set.
Identification least_squares_identify(std::span<const Vector> x_hist,
                                      std::span<const Vector> u_hist,
                                      std::span<const Matrix> input_matrices);

struct StateFeedbackPolicy {
  IndexSet actuators;
  Matrix K;  // u = K x, K = -(R + B'PB)^-1 B'PA
  Vector u;
  Matrix P;
  bool bounded = true;  // false when the chosen set's DARE diverged (K = 0)
};

// Greedy actuator selection for infinite-horizon state feedback. DARE
// solutions depend only on the actuator set, so they are memoized for the
// lifetime of the selector (one A, Q, R).
class StateFeedbackSelector {
 public:
  StateFeedbackSelector(Matrix A, Matrix actuator_pool, Matrix Q, Matrix R_pool,
                        DareOptions options = {});

  // Grows the set one actuator at a time minimizing x' P^s x (diverged sets
  // count as +inf; when every candidate is +inf the lowest index is taken).
  StateFeedbackPolicy select(const Vector& x, std::size_t cardinality);

  const DareSolution& dare(const IndexSet& actuators);
  std::size_t cache_size() const { return cache_.size(); }

 private:
  Matrix A_;
  Matrix pool_;
  Matrix Q_;
  Matrix R_pool_;
  DareOptions options_;
  std::map<IndexSet, DareSolution> cache_;
};

StateFeedbackPolicy greedy_actuator_state_feedback(const Matrix& A, const Matrix& actuator_pool,
                                                   const Vector& x, const Matrix& Q,
                                                   const Matrix& R_pool, std::size_t cardinality,
                                                   const DareOptions& options = {});

}  // namespace selftune
