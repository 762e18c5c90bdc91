#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "selftune/simulation.hpp"

namespace selftune {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// A malformed or inconsistent configuration. `where` is a field path such as
// "runs[2].constraints.act_min", or "file:line:column" for syntax errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, const std::string& message)
      : std::runtime_error(where + ": " + message), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// How a run's system is obtained. Generator seeds default to the run seed,
// so a seed override also redraws the network.
struct SystemSpec {
  enum class Kind { matrices, random_network, random_graph_network };
  Kind kind = Kind::random_network;

  // Generators.
  Eigen::Index n = 0;
  double eig_band = 0.1;         // random_network
  double edge_prob = 0.05;       // random_graph_network
  double spectral_radius = 1.05; // random_graph_network
  std::optional<std::uint64_t> seed;

  // Explicit matrices; empty pools mean canonical pools.
  Matrix A;
  Matrix actuator_pool;
  Matrix sensor_pool;

  Matrix W;  // empty: identity
  double v_var = 1.0;

  LinearNetworkSystem build(std::uint64_t run_seed) const;
};

struct RunSpec {
  SystemSpec system;
  SimulationConfig sim;  // sim.system is built from `system`
  // Name of another run; the summary reports its cost divided by this run's.
  std::optional<std::string> baseline;
};

struct EmitFlags {
  bool trace = true;
  bool summary = true;
  bool plotdata = true;
  friend bool operator==(const EmitFlags&, const EmitFlags&) = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name;
  std::string output_dir = "results";
  EmitFlags emit;
  std::vector<RunSpec> runs;
};

// Throws ConfigError on type errors, unknown fields or dimension mismatches.
ExperimentConfig parse_experiment(const Json& j);

// Reads and parses a file; syntax errors report file:line:column.
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Normalized form: every field explicit, matrices as row lists.
Json to_json(const ExperimentConfig& config);

// Every violated invariant, one message per entry; empty when valid.
std::vector<std::string> validate_experiment(const ExperimentConfig& config);

// Replaces every run seed and rebuilds seed-dependent systems.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

std::vector<std::string> preset_names();
// Throws std::out_of_range for an unknown name.
ExperimentConfig preset(const std::string& name);

// Trace file: one row per step, fixed columns, doubles as %.17g.
std::string trace_csv(const SimulationTrace& trace);

// Wall-clock data that varies between identical runs.
std::string timing_csv(const SimulationTrace& trace);

struct CampaignResult {
  std::vector<SimulationTrace> traces;  // in config order
  CampaignSummary summary;
  Json summary_json;
};

// Summary document for traces produced by `config` (deterministic content).
Json summarize(const ExperimentConfig& config, std::span<const SimulationTrace> traces);

// Validates, runs every simulation on up to `jobs` worker threads and writes
// the enabled artifacts under config.output_dir:
//   <run>.trace.csv, <run>.timing.csv, plot/<run>.{norms,cost,raster}.csv,
//   summary.json, timing.json.
// Throws ConfigError listing the diagnostics if validation fails.
CampaignResult run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

}  // namespace selftune
