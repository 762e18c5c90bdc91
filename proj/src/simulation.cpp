#include "selftune/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "selftune/rng.hpp"

namespace selftune {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Symmetric square root of a PSD covariance, for drawing correlated noise.
Matrix covariance_root(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

IndexSet random_subset(Rng& rng, std::size_t pool, std::size_t size) {
  std::vector<std::size_t> perm(pool);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < size; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(size);
  std::sort(perm.begin(), perm.end());
  return perm;
}

Architecture initial_architecture(const SimulationConfig& config) {
  if (config.initial_architecture) return *config.initial_architecture;
  return random_feasible_architecture(config.system, config.constraints, config.seed);
}

struct Streams {
  explicit Streams(std::uint64_t seed)
      : initial_state(Rng(seed).split(streams::kInitialState)),
        process(Rng(seed).split(streams::kProcessNoise)),
        measurement(Rng(seed).split(streams::kMeasurementNoise)) {}
  Rng initial_state;
  Rng process;
  Rng measurement;
};

}  // namespace

void SimulationConfig::validate() const {
  costs.validate(system);
  constraints.validate(system.num_actuators(), system.num_sensors());
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (!(x0_std >= 0.0)) throw std::invalid_argument("x0_std must be >= 0");
  if (!(E0_scale >= 0.0)) throw std::invalid_argument("E0_scale must be >= 0");
  if (initial_architecture) {
    initial_architecture->check_bounds(system);
    if (feedback == FeedbackMode::output && !satisfies_constraints(*initial_architecture, constraints))
      throw std::invalid_argument("initial architecture violates the constraints");
  } else if (feedback == FeedbackMode::state && mode == ArchitectureMode::fixed) {
    throw std::invalid_argument("fixed state-feedback runs need an initial architecture");
  }
  if (feedback == FeedbackMode::state && mode == ArchitectureMode::self_tuning &&
      actuator_budget > system.num_actuators())
    throw std::invalid_argument("actuator_budget exceeds the actuator pool");
  if (feedback == FeedbackMode::output && system.v_var() <= 0.0 && constraints.sen_max > 0)
    throw std::invalid_argument("v_var must be > 0 when sensors can be active");
}

Architecture random_feasible_architecture(const LinearNetworkSystem& system,
                                          const ArchitectureConstraints& constraints,
                                          std::uint64_t seed) {
  constraints.validate(system.num_actuators(), system.num_sensors());
  Rng rng = Rng(seed).split(streams::kInitialArchitecture);
  const auto na = constraints.act_min + rng.below(constraints.act_max - constraints.act_min + 1);
  const auto ns = constraints.sen_min + rng.below(constraints.sen_max - constraints.sen_min + 1);
  IndexSet acts = random_subset(rng, system.num_actuators(), na);
  IndexSet sens = random_subset(rng, system.num_sensors(), ns);
  return Architecture(std::move(acts), std::move(sens));
}

double stage_cost(const Vector& x, const Vector& u, const Architecture& arch,
                  const CostParameters& costs) {
  return x.dot(costs.Q * x) + u.dot(costs.active_input_cost(arch) * u);
}

SimulationTrace simulate_lqr(const SimulationConfig& config) {
  if (config.feedback != FeedbackMode::state)
    throw std::invalid_argument("simulate_lqr needs state feedback");
  config.validate();
  const auto& sys = config.system;
  const auto n = sys.n();
  const Matrix W_root = covariance_root(sys.W());
  Streams rng(config.seed);

  SimulationTrace trace;
  trace.name = config.name;
  trace.mode = config.mode;
  trace.feedback = config.feedback;
  trace.seed = config.seed;

  Vector x = config.x0_std * rng.initial_state.normal_vector(n);

  // Fixed architecture: one DARE for the whole run.
  Architecture fixed_arch;
  Matrix fixed_K;
  bool fixed_bounded = true;
  if (config.mode == ArchitectureMode::fixed) {
    fixed_arch = Architecture(config.initial_architecture->actuators(), {});
    const Matrix B = build_input_matrix(sys, fixed_arch);
    const Matrix R = config.costs.active_input_cost(fixed_arch);
    const auto sol = solve_dare(sys.A(), B, config.costs.Q, R, config.dare);
    if (sol.converged()) {
      fixed_K = -lqr_gain(sys.A(), B, R, sol.P);
    } else {
      fixed_bounded = false;
      fixed_K = Matrix::Zero(B.cols(), n);
      trace.warnings.push_back("DARE diverged for the fixed architecture; applying zero input");
    }
  }

  std::optional<StateFeedbackSelector> selector;
  if (config.mode == ArchitectureMode::self_tuning && !config.identify)
    selector.emplace(sys.A(), sys.actuator_pool(), config.costs.Q, config.costs.R1, config.dare);

  std::vector<Vector> x_hist{x};
  std::vector<Vector> u_hist;
  std::vector<Matrix> B_hist;
  std::optional<StateFeedbackPolicy> last_finite;
  Architecture prev = config.mode == ArchitectureMode::fixed
                          ? fixed_arch
                          : Architecture(config.initial_architecture
                                             ? config.initial_architecture->actuators()
                                             : IndexSet{},
                                         {});

  for (std::size_t t = 0; t < config.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.x_hat = x;
    rec.error = Vector::Zero(n);

    CostBreakdown estimated;
    const auto start = Clock::now();
    if (config.mode == ArchitectureMode::fixed) {
      rec.arch = fixed_arch;
      rec.u = fixed_K * x;
      rec.policy_bounded = fixed_bounded;
    } else {
      StateFeedbackPolicy policy;
      if (config.identify && x_hist.size() > static_cast<std::size_t>(n)) {
        const auto id = least_squares_identify(x_hist, u_hist, B_hist);
        policy = greedy_actuator_state_feedback(id.A_hat, sys.actuator_pool(), x, config.costs.Q,
                                                config.costs.R1, config.actuator_budget,
                                                config.dare);
      } else if (config.identify) {
        // Too few transitions to identify A: use the nominal model.
        if (!selector)
          selector.emplace(sys.A(), sys.actuator_pool(), config.costs.Q, config.costs.R1,
                           config.dare);
        policy = selector->select(x, config.actuator_budget);
      } else {
        policy = selector->select(x, config.actuator_budget);
      }
      if (!policy.bounded) {
        trace.warnings.push_back("t=" + std::to_string(t) + ": no stabilizing actuator set");
        if (config.on_diverged == DivergedPolicy::last_finite && last_finite) {
          policy = *last_finite;
          policy.u = policy.K * x;
        }
      } else {
        last_finite = policy;
      }
      rec.arch = Architecture(policy.actuators, {});
      rec.u = policy.u;
      rec.policy_bounded = policy.bounded;
      if (policy.bounded) estimated.control = x.dot(policy.P * x);
    }
    rec.compute_seconds = seconds_since(start);
    rec.evaluations = selector ? selector->cache_size() : 0;

    const double stage = stage_cost(x, rec.u, rec.arch, config.costs);
    const double running = running_cost(rec.arch, config.costs);
    const double switching = switching_cost(rec.arch, prev, config.costs);
    estimated.running = running;
    estimated.switching = switching;
    estimated.total = estimated.control + running + switching;
    trace.ledger.accumulate_true_cost(stage, running, switching, t, estimated);

    const Matrix B = build_input_matrix(sys, rec.arch);
    const Vector w = W_root * rng.process.normal_vector(n);
    x = sys.A() * x + B * rec.u + w;

    x_hist.push_back(x);
    u_hist.push_back(rec.u);
    B_hist.push_back(B);
    prev = rec.arch;
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

SimulationTrace simulate_lqg(const SimulationConfig& config) {
  if (config.feedback != FeedbackMode::output)
    throw std::invalid_argument("simulate_lqg needs output feedback");
  config.validate();
  const auto& sys = config.system;
  const auto n = sys.n();
  const auto L_pool = static_cast<Eigen::Index>(sys.num_sensors());
  const Matrix W_root = covariance_root(sys.W());
  const double v_std = std::sqrt(sys.v_var());
  Streams rng(config.seed);

  SimulationTrace trace;
  trace.name = config.name;
  trace.mode = config.mode;
  trace.feedback = config.feedback;
  trace.seed = config.seed;

  Architecture arch = initial_architecture(config);
  if (!satisfies_constraints(arch, config.constraints))
    throw std::invalid_argument("initial architecture violates the constraints");
  Architecture prev = arch;

  Vector x = config.x0_std * rng.initial_state.normal_vector(n);
  Vector x_hat = config.estimate_from_state ? Vector(x) : Vector(Vector::Zero(n));
  Matrix E = config.E0_scale * Matrix::Identity(n, n);

  const CostPredictor predictor(sys, config.costs);

  for (std::size_t t = 0; t < config.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.x_hat = x_hat;
    rec.error = x - x_hat;

    const auto start = Clock::now();
    CostBreakdown estimated;
    GainSchedule gains;
    if (config.mode == ArchitectureMode::self_tuning) {
      auto update = greedy_swap(predictor, prev, x_hat, E, config.constraints, config.swap);
      arch = update.arch;
      estimated = update.estimated;
      gains = std::move(update.gains);
      rec.evaluations = update.search.evaluations;
    } else {
      auto est = total_estimated_cost(sys, arch, prev, x_hat, E, config.costs);
      estimated = est.breakdown;
      gains = std::move(est.gains);
      rec.evaluations = 1;
    }
    rec.compute_seconds = seconds_since(start);
    rec.arch = arch;
    rec.u = -gains.K.front() * x_hat;

    const Matrix B = build_input_matrix(sys, arch);
    const Matrix C = build_output_matrix(sys, arch);
    const Vector v_full = v_std * rng.measurement.normal_vector(L_pool);
    const Vector v = select_rows(v_full, arch.sensors());
    const Vector y = C * x + v;

    const double stage = stage_cost(x, rec.u, arch, config.costs);
    const double running = running_cost(arch, config.costs);
    const double switching = switching_cost(arch, prev, config.costs);
    trace.ledger.accumulate_true_cost(stage, running, switching, t, estimated);

    x_hat = estimator_update(sys, arch, gains.K.front(), gains.L.front(), x_hat, y);
    E = gains.E[1];
    const Vector w = W_root * rng.process.normal_vector(n);
    x = sys.A() * x + B * rec.u + w;

    prev = arch;
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

SimulationTrace simulate(const SimulationConfig& config) {
  return config.feedback == FeedbackMode::state ? simulate_lqr(config) : simulate_lqg(config);
}

CostLedger replay_ledger(const SimulationTrace& trace, const CostParameters& costs) {
  CostLedger ledger;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& rec = trace.steps[t];
    const Architecture& prev = t == 0 ? rec.arch : trace.steps[t - 1].arch;
    const double stage = stage_cost(rec.x, rec.u, rec.arch, costs);
    // The t = 0 switching entry is not accumulated, so its value does not
    // affect the replayed totals.
    const double switching = t == 0 ? trace.ledger.entries()[0].true_switching
                                    : switching_cost(rec.arch, prev, costs);
    ledger.accumulate_true_cost(stage, running_cost(rec.arch, costs), switching, t,
                                trace.ledger.entries()[t].estimated);
  }
  return ledger;
}

CampaignSummary compare_runs(std::span<const SimulationTrace> traces) {
  CampaignSummary out;
  for (const auto& trace : traces) {
    RunSummary s;
    s.name = trace.name;
    s.cumulative_cost = trace.cumulative_cost();
    if (!trace.steps.empty()) {
      const auto& last = trace.steps.back();
      s.final_state_norm = last.x.norm();
      s.final_estimate_norm = last.x_hat.norm();
      s.final_error_norm = last.error.norm();
    }
    double compute = 0.0;
    std::size_t changes = 0;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      const auto& rec = trace.steps[t];
      s.max_state_norm = std::max(s.max_state_norm, rec.x.norm());
      compute += rec.compute_seconds;
      const std::size_t c = t == 0 ? 0 : change_count(trace.steps[t - 1].arch, rec.arch);
      s.changes_per_step.push_back(c);
      changes += c;
    }
    if (!trace.steps.empty()) {
      s.mean_compute_seconds = compute / static_cast<double>(trace.steps.size());
      s.mean_changes_per_step =
          static_cast<double>(changes) / static_cast<double>(trace.steps.size());
    }
    out.runs.push_back(std::move(s));
  }
  if (!out.runs.empty()) {
    const double base = out.runs.front().cumulative_cost;
    for (auto& r : out.runs) r.cost_ratio = r.cumulative_cost == base ? 1.0 : base / r.cumulative_cost;
  }
  return out;
}

}  // namespace selftune
