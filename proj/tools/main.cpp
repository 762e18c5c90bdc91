#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "selftune/experiment.hpp"

using namespace selftune;

namespace {

struct Source {
  std::string path;
  std::string preset;
};

void add_source(CLI::App* cmd, Source& src) {
  auto* file = cmd->add_option("config", src.path, "experiment config file (JSON)");
  auto* pre = cmd->add_option("--preset", src.preset, "use a builtin preset instead of a file");
  file->excludes(pre);
  pre->excludes(file);
}

ExperimentConfig load(const Source& src) {
  if (!src.preset.empty()) return preset(src.preset);
  if (src.path.empty()) throw CLI::ValidationError("config", "a config file or --preset is required");
  return load_experiment(src.path);
}

std::string format_ratio(const Json& r) {
  if (r.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", r.get<double>());
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-tuning sensor/actuator architecture experiments"};
  app.require_subcommand(1);

  Source run_src;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::size_t jobs = 1;
  auto* run = app.add_subcommand("run", "run every simulation in a campaign and write artifacts");
  add_source(run, run_src);
  run->add_option("--seed", seed, "replace the seed of every run");
  run->add_option("--output-dir", output_dir, "override the config's output directory");
  run->add_option("--jobs", jobs, "number of runs executed in parallel")->check(CLI::PositiveNumber);

  Source val_src;
  bool print_normalized = false;
  auto* validate = app.add_subcommand("validate", "check a config without running it");
  add_source(validate, val_src);
  validate->add_flag("--print", print_normalized, "print the normalized config on success");

  std::string show;
  auto* list = app.add_subcommand("list-presets", "list builtin presets");
  list->add_option("--show", show, "print the normalized config of one preset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      if (!show.empty()) {
        std::cout << to_json(preset(show)).dump(2) << '\n';
      } else {
        for (const auto& name : preset_names()) std::cout << name << '\n';
      }
      return 0;
    }

    if (validate->parsed()) {
      const auto cfg = load(val_src);
      const auto problems = validate_experiment(cfg);
      for (const auto& p : problems) std::cerr << "error: " << p << '\n';
      if (problems.empty() && print_normalized) std::cout << to_json(cfg).dump(2) << '\n';
      return problems.empty() ? 0 : 1;
    }

    auto cfg = load(run_src);
    if (seed) override_seed(cfg, *seed);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    const auto problems = validate_experiment(cfg);
    if (!problems.empty()) {
      for (const auto& p : problems) std::cerr << "error: " << p << '\n';
      return 1;
    }
    const auto result = run_experiment(cfg, jobs);
    std::printf("%-24s %16s %14s %10s\n", "run", "cumulative_cost", "max_state_norm", "ratio");
    for (const auto& r : result.summary_json["runs"]) {
      std::printf("%-24s %16.6g %14.6g %10s\n", r["name"].get<std::string>().c_str(),
                  r["cumulative_cost"].get<double>(), r["max_state_norm"].get<double>(),
                  format_ratio(r["baseline_cost_ratio"]).c_str());
      for (const auto& w : r["warnings"])
        std::fprintf(stderr, "warning: %s: %s\n", r["name"].get<std::string>().c_str(),
                     w.get<std::string>().c_str());
    }
    std::printf("artifacts in %s\n", cfg.output_dir.c_str());
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
