#include "selftune/greedy.hpp"

#include <algorithm>
#include <limits>

namespace selftune {

Choice Choice::add(DeviceKind device, std::size_t index) {
  return {device == DeviceKind::actuator ? ChoiceKind::add_actuator : ChoiceKind::add_sensor, index};
}

Choice Choice::remove(DeviceKind device, std::size_t index) {
  return {device == DeviceKind::actuator ? ChoiceKind::remove_actuator : ChoiceKind::remove_sensor,
          index};
}

DeviceKind Choice::device() const {
  return (kind == ChoiceKind::add_sensor || kind == ChoiceKind::remove_sensor) ? DeviceKind::sensor
                                                                               : DeviceKind::actuator;
}

Architecture apply(const Architecture& arch, const Choice& choice) {
  switch (choice.kind) {
    case ChoiceKind::no_update:
      return arch;
    case ChoiceKind::add_actuator:
    case ChoiceKind::add_sensor:
      return arch.with_added(choice.device(), choice.index);
    case ChoiceKind::remove_actuator:
    case ChoiceKind::remove_sensor:
      return arch.with_removed(choice.device(), choice.index);
  }
  return arch;
}

std::size_t change_count(const IndexSet& s1, const IndexSet& s2) {
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < s1.size() && j < s2.size()) {
    if (s1[i] < s2[j]) {
      ++i;
    } else if (s2[j] < s1[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return std::max(s1.size() - common, s2.size() - common);
}

std::size_t change_count(const Architecture& a, const Architecture& b) {
  return change_count(a.actuators(), b.actuators()) + change_count(a.sensors(), b.sensors());
}

IndexSet greedy_select(std::size_t pool_size, const SetMetric& metric, std::size_t max_size) {
  if (max_size > pool_size) throw std::invalid_argument("greedy_select: bound exceeds pool size");
  IndexSet chosen;
  std::vector<bool> active(pool_size, false);
  while (chosen.size() < max_size) {
    std::size_t best = pool_size;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < pool_size; ++c) {
      if (active[c]) continue;
      IndexSet trial = chosen;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), c), c);
      const double cost = metric(trial);
      // First candidate is taken even at +inf so the loop always progresses.
      if (best == pool_size || cost < best_cost) {
        best = c;
        best_cost = cost;
      }
    }
    active[best] = true;
    chosen.insert(std::upper_bound(chosen.begin(), chosen.end(), best), best);
  }
  return chosen;
}

IndexSet greedy_reject(std::size_t pool_size, const SetMetric& metric, std::size_t max_size) {
  if (max_size > pool_size) throw std::invalid_argument("greedy_reject: bound exceeds pool size");
  IndexSet chosen(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) chosen[i] = i;
  while (chosen.size() > max_size) {
    std::size_t best_pos = chosen.size();
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t pos = 0; pos < chosen.size(); ++pos) {
      IndexSet trial = chosen;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(pos));
      const double cost = metric(trial);
      if (best_pos == chosen.size() || cost < best_cost) {
        best_pos = pos;
        best_cost = cost;
      }
    }
    chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(best_pos));
  }
  return chosen;
}

std::size_t ForcedConstraints::min(DeviceKind kind) const {
  return base.min(kind) + (mode == ForcedMode::selection ? shift : 0);
}

std::size_t ForcedConstraints::max(DeviceKind kind) const {
  return base.max(kind) + (mode == ForcedMode::selection ? shift : 0);
}

bool ForcedConstraints::satisfied(const Architecture& arch) const {
  for (auto kind : {DeviceKind::actuator, DeviceKind::sensor}) {
    const auto size = arch.devices(kind).size();
    if (size < min(kind) || size > max(kind)) return false;
  }
  return true;
}

namespace {

void add_inactive(std::vector<Choice>& out, const Architecture& arch, DeviceKind kind,
                  std::size_t pool_size) {
  for (std::size_t i = 0; i < pool_size; ++i)
    if (!arch.contains(kind, i)) out.push_back(Choice::add(kind, i));
}

void add_active(std::vector<Choice>& out, const Architecture& arch, DeviceKind kind) {
  for (auto i : arch.devices(kind)) out.push_back(Choice::remove(kind, i));
}

}  // namespace

std::vector<Choice> selection_choices(const Architecture& arch,
                                      const ArchitectureConstraints& constraints,
                                      std::size_t shift, std::size_t num_actuators,
                                      std::size_t num_sensors) {
  const ForcedConstraints sel{ForcedMode::selection, constraints, shift};
  const auto na = arch.actuators().size();
  const auto ns = arch.sensors().size();
  const bool act_deficient = na < sel.min(DeviceKind::actuator);
  const bool sen_deficient = ns < sel.min(DeviceKind::sensor);

  std::vector<Choice> out;
  if (act_deficient || sen_deficient) {
    if (act_deficient) add_inactive(out, arch, DeviceKind::actuator, num_actuators);
    if (sen_deficient) add_inactive(out, arch, DeviceKind::sensor, num_sensors);
    return out;
  }
  if (sel.satisfied(arch)) out.push_back(Choice::none());
  if (na < sel.max(DeviceKind::actuator)) add_inactive(out, arch, DeviceKind::actuator, num_actuators);
  if (ns < sel.max(DeviceKind::sensor)) add_inactive(out, arch, DeviceKind::sensor, num_sensors);
  return out;
}

std::vector<Choice> rejection_choices(const Architecture& arch,
                                      const ArchitectureConstraints& constraints) {
  const auto na = arch.actuators().size();
  const auto ns = arch.sensors().size();
  const bool act_excess = na > constraints.act_max;
  const bool sen_excess = ns > constraints.sen_max;

  std::vector<Choice> out;
  if (act_excess || sen_excess) {
    if (act_excess) add_active(out, arch, DeviceKind::actuator);
    if (sen_excess) add_active(out, arch, DeviceKind::sensor);
    return out;
  }
  if (satisfies_constraints(arch, constraints)) out.push_back(Choice::none());
  if (na > constraints.act_min) add_active(out, arch, DeviceKind::actuator);
  if (ns > constraints.sen_min) add_active(out, arch, DeviceKind::sensor);
  return out;
}

Identification least_squares_identify(std::span<const Vector> x_hist,
                                      std::span<const Vector> u_hist,
                                      std::span<const Matrix> input_matrices) {
  if (x_hist.size() < 2) throw std::invalid_argument("least_squares_identify: need >= 1 transition");
  const std::size_t steps = x_hist.size() - 1;
  if (u_hist.size() < steps || input_matrices.size() < steps)
    throw std::invalid_argument("least_squares_identify: input history shorter than state history");
  const auto n = x_hist.front().size();

  Matrix X(static_cast<Eigen::Index>(steps), n);
  Matrix Y(static_cast<Eigen::Index>(steps), n);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    if (x_hist[k].size() != n || x_hist[k + 1].size() != n)
      throw std::invalid_argument("least_squares_identify: state dimension changes");
    X.row(row) = x_hist[k].transpose();
    Vector target = x_hist[k + 1];
    if (input_matrices[k].cols() > 0) target -= input_matrices[k] * u_hist[k];
    Y.row(row) = target.transpose();
  }

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  cod.setThreshold(1e-10);
  Identification out;
  out.rank = cod.rank();
  out.rank_deficient = out.rank < n;
  out.A_hat = cod.solve(Y).transpose();
  return out;
}

}  // namespace selftune
