#include <limits>
#include <set>

#include "selftune/greedy.hpp"

namespace selftune {

namespace {

// Scores architectures once per swap call; the same candidate recurs across
// subsequences and outer iterations.
class MemoMetric {
 public:
  explicit MemoMetric(const ArchitectureMetric& metric) : metric_(metric) {}

  double operator()(const Architecture& arch) {
    auto it = cache_.find(arch);
    if (it != cache_.end()) return it->second;
    const double v = metric_(arch);
    cache_.emplace(arch, v);
    return v;
  }

  std::size_t evaluations() const { return cache_.size(); }

 private:
  const ArchitectureMetric& metric_;
  std::map<Architecture, double> cache_;
};

struct Best {
  Choice choice;
  Architecture arch;
  double cost;
};

// argmin over choices in list order; strict comparison keeps the earliest.
Best best_choice(const Architecture& current, const std::vector<Choice>& choices, MemoMetric& J) {
  Best best{choices.front(), apply(current, choices.front()), 0.0};
  best.cost = J(best.arch);
  for (std::size_t k = 1; k < choices.size(); ++k) {
    Architecture candidate = apply(current, choices[k]);
    const double cost = J(candidate);
    if (cost < best.cost) best = {choices[k], std::move(candidate), cost};
  }
  return best;
}

}  // namespace

SwapResult greedy_swap(const Architecture& arch_init, std::size_t num_actuators,
                       std::size_t num_sensors, const ArchitectureConstraints& constraints,
                       const ArchitectureMetric& metric, const SwapOptions& options) {
  constraints.validate(num_actuators, num_sensors);
  if (!arch_init.actuators().empty() && arch_init.actuators().back() >= num_actuators)
    throw PoolBoundsError("greedy_swap: actuator index outside pool");
  if (!arch_init.sensors().empty() && arch_init.sensors().back() >= num_sensors)
    throw PoolBoundsError("greedy_swap: sensor index outside pool");
  if (!satisfies_constraints(arch_init, constraints))
    throw std::invalid_argument("greedy_swap: initial architecture violates the constraints");

  const std::size_t per_sub = 2 * constraints.per_subsequence;
  const std::size_t total_budget = constraints.max_changes
                                       ? 2 * *constraints.max_changes
                                       : std::numeric_limits<std::size_t>::max();

  MemoMetric J(metric);
  SwapResult out;
  out.initial_cost = J(arch_init);

  Architecture current = arch_init;
  Architecture best = arch_init;
  double best_cost = out.initial_cost;
  std::set<Architecture> seen{arch_init};

  std::size_t n_count = 0;
  while (n_count < total_budget && out.outer_iterations < options.max_outer_iterations) {
    ++out.outer_iterations;

    const Architecture ref_sel = current;
    std::size_t n_sel = 0;
    while (n_sel < per_sub) {
      const auto choices = selection_choices(current, constraints, constraints.per_subsequence,
                                             num_actuators, num_sensors);
      if (choices.empty()) break;
      auto pick = best_choice(current, choices, J);
      current = pick.arch;
      if (pick.choice.is_none()) break;
      if (options.record_path)
        out.path.push_back({ForcedMode::selection, pick.choice, current, pick.cost});
      n_sel = change_count(ref_sel, current);
    }

    const Architecture ref_rej = current;
    std::size_t n_rej = 0;
    while (n_rej < per_sub) {
      const auto choices = rejection_choices(current, constraints);
      if (choices.empty()) break;
      auto pick = best_choice(current, choices, J);
      if (pick.choice.is_none()) break;
      current = pick.arch;
      if (options.record_path)
        out.path.push_back({ForcedMode::rejection, pick.choice, current, pick.cost});
      n_rej = change_count(ref_rej, current);
    }

    if (satisfies_constraints(current, constraints)) {
      const double cost = J(current);
      if (cost < best_cost) {
        best = current;
        best_cost = cost;
      }
    }
    if (change_count(ref_sel, current) == 0) break;
    // A deterministic pass from an already visited architecture would repeat.
    if (!seen.insert(current).second) {
      out.cycle_detected = true;
      break;
    }
    n_count = change_count(arch_init, current);
  }

  if (options.keep_best) {
    out.arch = best;
    out.cost = best_cost;
  } else {
    out.arch = current;
    out.cost = J(current);
  }
  out.evaluations = J.evaluations();
  return out;
}

ArchitectureUpdate greedy_swap(const CostPredictor& predictor, const Architecture& arch_init,
                               const Vector& x_hat, const Matrix& E_t,
                               const ArchitectureConstraints& constraints,
                               const SwapOptions& options) {
  const auto& system = predictor.system();
  const auto state = predictor.prepare(x_hat, E_t);
  auto metric = [&](const Architecture& arch) {
    return predictor.total(arch, arch_init, state).total;
  };
  ArchitectureUpdate out;
  out.search = greedy_swap(arch_init, system.num_actuators(), system.num_sensors(), constraints,
                           metric, options);
  out.arch = out.search.arch;
  auto est = total_estimated_cost(system, out.arch, arch_init, x_hat, E_t, predictor.params());
  out.estimated = est.breakdown;
  out.gains = std::move(est.gains);
  return out;
}

ArchitectureUpdate greedy_swap(const LinearNetworkSystem& system, const Architecture& arch_init,
                               const Vector& x_hat, const Matrix& E_t,
                               const CostParameters& params,
                               const ArchitectureConstraints& constraints,
                               const SwapOptions& options) {
  const CostPredictor predictor(system, params);
  return greedy_swap(predictor, arch_init, x_hat, E_t, constraints, options);
}

}  // namespace selftune
