#include "selftune/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace selftune {

namespace fs = std::filesystem;

namespace {

void check_keys(const Json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(path + "." + key, "unknown field");
  }
}

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

std::uint64_t as_uint(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw ConfigError(path, "expected a non-negative integer");
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  throw ConfigError(path, "expected a non-negative integer");
}

bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

// A number c means c I; otherwise a list of equally long rows.
Matrix as_matrix(const Json& j, const std::string& path, Eigen::Index rows, Eigen::Index cols) {
  if (j.is_number()) {
    if (rows != cols) throw ConfigError(path, "a scalar needs a square matrix");
    return as_double(j, path) * Matrix::Identity(rows, cols);
  }
  if (!j.is_array()) throw ConfigError(path, "expected a number or a list of rows");
  if (rows >= 0 && static_cast<Eigen::Index>(j.size()) != rows)
    throw ConfigError(path, "expected " + std::to_string(rows) + " rows, got " +
                                std::to_string(j.size()));
  const auto r = static_cast<Eigen::Index>(j.size());
  Eigen::Index c = cols;
  if (c < 0) c = r == 0 ? 0 : static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      throw ConfigError(rp, "expected a row of " + std::to_string(c) + " numbers");
    for (Eigen::Index k = 0; k < c; ++k)
      m(i, k) = as_double(row[static_cast<std::size_t>(k)], rp + "[" + std::to_string(k) + "]");
  }
  return m;
}

Vector as_vector(const Json& j, const std::string& path, Eigen::Index len) {
  if (j.is_number()) return Vector::Constant(len, as_double(j, path));
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != len)
    throw ConfigError(path, "expected a number or a list of " + std::to_string(len) + " numbers");
  Vector v(len);
  for (Eigen::Index i = 0; i < len; ++i)
    v(i) = as_double(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

IndexSet as_index_set(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected a list of indices");
  IndexSet s;
  for (std::size_t i = 0; i < j.size(); ++i)
    s.push_back(as_uint(j[i], path + "[" + std::to_string(i) + "]"));
  return s;
}

template <class Enum>
Enum as_enum(const Json& j, const std::string& path,
             std::initializer_list<std::pair<std::string_view, Enum>> names) {
  const auto s = as_string(j, path);
  for (const auto& [name, value] : names)
    if (s == name) return value;
  std::string allowed;
  for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(path, "unknown value \"" + s + "\" (expected one of " + allowed + ")");
}

const std::initializer_list<std::pair<std::string_view, SystemSpec::Kind>> kSystemKinds = {
    {"matrices", SystemSpec::Kind::matrices},
    {"random_network", SystemSpec::Kind::random_network},
    {"random_graph_network", SystemSpec::Kind::random_graph_network}};
const std::initializer_list<std::pair<std::string_view, ArchitectureMode>> kModes = {
    {"fixed", ArchitectureMode::fixed}, {"self_tuning", ArchitectureMode::self_tuning}};
const std::initializer_list<std::pair<std::string_view, FeedbackMode>> kFeedback = {
    {"state", FeedbackMode::state}, {"output", FeedbackMode::output}};
const std::initializer_list<std::pair<std::string_view, SwitchingConvention>> kSwitching = {
    {"absolute", SwitchingConvention::absolute}, {"signed", SwitchingConvention::signed_}};
const std::initializer_list<std::pair<std::string_view, DareMethod>> kDareMethods = {
    {"doubling", DareMethod::doubling}, {"fixed_point", DareMethod::fixed_point}};
const std::initializer_list<std::pair<std::string_view, DivergedPolicy>> kDiverged = {
    {"zero_input", DivergedPolicy::zero_input}, {"last_finite", DivergedPolicy::last_finite}};

template <class Enum>
std::string enum_name(Enum value, std::initializer_list<std::pair<std::string_view, Enum>> names) {
  for (const auto& [name, v] : names)
    if (v == value) return std::string(name);
  return "?";
}

SystemSpec parse_system(const Json& j, const std::string& path) {
  check_keys(j, path, {"kind", "n", "eig_band", "edge_prob", "spectral_radius", "seed", "A",
                       "actuator_pool", "sensor_pool", "W", "v_var"});
  SystemSpec s;
  if (!j.contains("kind")) throw ConfigError(join(path, "kind"), "missing");
  s.kind = as_enum(j["kind"], join(path, "kind"), kSystemKinds);
  auto forbid = [&](std::initializer_list<std::string_view> keys) {
    for (auto k : keys)
      if (j.contains(k)) throw ConfigError(join(path, k), "not used by this system kind");
  };
  if (s.kind == SystemSpec::Kind::matrices) {
    forbid({"n", "eig_band", "edge_prob", "spectral_radius", "seed"});
    if (!j.contains("A")) throw ConfigError(join(path, "A"), "missing");
    s.A = as_matrix(j["A"], join(path, "A"), -1, -1);
    if (s.A.rows() < 1 || s.A.rows() != s.A.cols())
      throw ConfigError(join(path, "A"), "expected a non-empty square matrix");
    s.n = s.A.rows();
    if (j.contains("actuator_pool"))
      s.actuator_pool = as_matrix(j["actuator_pool"], join(path, "actuator_pool"), s.n, -1);
    if (j.contains("sensor_pool"))
      s.sensor_pool = as_matrix(j["sensor_pool"], join(path, "sensor_pool"), -1, s.n);
  } else {
    forbid({"A", "actuator_pool", "sensor_pool"});
    if (!j.contains("n")) throw ConfigError(join(path, "n"), "missing");
    s.n = static_cast<Eigen::Index>(as_uint(j["n"], join(path, "n")));
    if (s.n < 1) throw ConfigError(join(path, "n"), "must be >= 1");
    if (s.kind == SystemSpec::Kind::random_network) {
      forbid({"edge_prob", "spectral_radius"});
      if (j.contains("eig_band")) s.eig_band = as_double(j["eig_band"], join(path, "eig_band"));
    } else {
      forbid({"eig_band"});
      if (j.contains("edge_prob")) s.edge_prob = as_double(j["edge_prob"], join(path, "edge_prob"));
      if (j.contains("spectral_radius"))
        s.spectral_radius = as_double(j["spectral_radius"], join(path, "spectral_radius"));
    }
    if (j.contains("seed") && !j["seed"].is_null()) s.seed = as_uint(j["seed"], join(path, "seed"));
  }
  s.W = j.contains("W") ? as_matrix(j["W"], join(path, "W"), s.n, s.n)
                        : Matrix(Matrix::Identity(s.n, s.n));
  if (j.contains("v_var")) s.v_var = as_double(j["v_var"], join(path, "v_var"));
  return s;
}

RunSpec parse_run(const Json& j, const std::string& path) {
  check_keys(j, path, {"name", "system", "mode", "feedback", "initial_architecture",
                       "constraints", "costs", "actuator_budget", "steps", "x0_std", "E0_scale",
                       "estimate_from_state", "identify", "dare", "on_diverged", "swap", "seed",
                       "baseline"});
  if (!j.contains("system")) throw ConfigError(join(path, "system"), "missing");
  SystemSpec spec = parse_system(j["system"], join(path, "system"));
  const std::uint64_t seed = j.contains("seed") ? as_uint(j["seed"], join(path, "seed")) : 0;

  std::optional<LinearNetworkSystem> system;
  try {
    system.emplace(spec.build(seed));
  } catch (const std::exception& e) {
    throw ConfigError(join(path, "system"), e.what());
  }
  const auto n = system->n();
  const auto M = static_cast<Eigen::Index>(system->num_actuators());
  const auto L = static_cast<Eigen::Index>(system->num_sensors());

  RunSpec run{std::move(spec), SimulationConfig(*system), std::nullopt};
  auto& c = run.sim;
  c.seed = seed;
  if (j.contains("name")) c.name = as_string(j["name"], join(path, "name"));
  if (j.contains("mode")) c.mode = as_enum(j["mode"], join(path, "mode"), kModes);
  if (j.contains("feedback")) c.feedback = as_enum(j["feedback"], join(path, "feedback"), kFeedback);

  if (j.contains("initial_architecture") && !j["initial_architecture"].is_null()) {
    const auto& a = j["initial_architecture"];
    const auto p = join(path, "initial_architecture");
    check_keys(a, p, {"actuators", "sensors"});
    IndexSet acts = a.contains("actuators") ? as_index_set(a["actuators"], join(p, "actuators"))
                                            : IndexSet{};
    IndexSet sens = a.contains("sensors") ? as_index_set(a["sensors"], join(p, "sensors"))
                                          : IndexSet{};
    try {
      c.initial_architecture = Architecture(std::move(acts), std::move(sens));
    } catch (const std::exception& e) {
      throw ConfigError(p, e.what());
    }
  }

  c.constraints.act_max = system->num_actuators();
  c.constraints.sen_max = system->num_sensors();
  if (j.contains("constraints")) {
    const auto& k = j["constraints"];
    const auto p = join(path, "constraints");
    check_keys(k, p, {"act_min", "act_max", "sen_min", "sen_max", "max_changes", "per_subsequence"});
    auto& ct = c.constraints;
    if (k.contains("act_min")) ct.act_min = as_uint(k["act_min"], join(p, "act_min"));
    if (k.contains("act_max")) ct.act_max = as_uint(k["act_max"], join(p, "act_max"));
    if (k.contains("sen_min")) ct.sen_min = as_uint(k["sen_min"], join(p, "sen_min"));
    if (k.contains("sen_max")) ct.sen_max = as_uint(k["sen_max"], join(p, "sen_max"));
    if (k.contains("max_changes") && !k["max_changes"].is_null())
      ct.max_changes = as_uint(k["max_changes"], join(p, "max_changes"));
    if (k.contains("per_subsequence"))
      ct.per_subsequence = as_uint(k["per_subsequence"], join(p, "per_subsequence"));
  }

  c.costs = CostParameters::identity(n, system->num_actuators(), system->num_sensors(), 1);
  if (j.contains("costs")) {
    const auto& k = j["costs"];
    const auto p = join(path, "costs");
    check_keys(k, p, {"Q", "R1", "Q_T", "R2_act", "R2_sen", "R3_act", "R3_sen", "horizon",
                      "switching"});
    auto& cp = c.costs;
    if (k.contains("Q")) cp.Q = as_matrix(k["Q"], join(p, "Q"), n, n);
    if (k.contains("R1")) cp.R1 = as_matrix(k["R1"], join(p, "R1"), M, M);
    if (k.contains("Q_T")) cp.Q_T = as_matrix(k["Q_T"], join(p, "Q_T"), n, n);
    if (k.contains("R2_act")) cp.R2_act = as_vector(k["R2_act"], join(p, "R2_act"), M);
    if (k.contains("R2_sen")) cp.R2_sen = as_vector(k["R2_sen"], join(p, "R2_sen"), L);
    if (k.contains("R3_act")) cp.R3_act = as_vector(k["R3_act"], join(p, "R3_act"), M);
    if (k.contains("R3_sen")) cp.R3_sen = as_vector(k["R3_sen"], join(p, "R3_sen"), L);
    if (k.contains("horizon")) cp.horizon = as_uint(k["horizon"], join(p, "horizon"));
    if (k.contains("switching"))
      cp.switching = as_enum(k["switching"], join(p, "switching"), kSwitching);
  }

  if (j.contains("actuator_budget"))
    c.actuator_budget = as_uint(j["actuator_budget"], join(path, "actuator_budget"));
  if (j.contains("steps")) c.steps = as_uint(j["steps"], join(path, "steps"));
  if (j.contains("x0_std")) c.x0_std = as_double(j["x0_std"], join(path, "x0_std"));
  if (j.contains("E0_scale")) c.E0_scale = as_double(j["E0_scale"], join(path, "E0_scale"));
  if (j.contains("estimate_from_state"))
    c.estimate_from_state = as_bool(j["estimate_from_state"], join(path, "estimate_from_state"));
  if (j.contains("identify")) c.identify = as_bool(j["identify"], join(path, "identify"));
  if (j.contains("dare")) {
    const auto& k = j["dare"];
    const auto p = join(path, "dare");
    check_keys(k, p, {"method", "tol", "max_iter", "overflow_guard"});
    if (k.contains("method")) c.dare.method = as_enum(k["method"], join(p, "method"), kDareMethods);
    if (k.contains("tol")) c.dare.tol = as_double(k["tol"], join(p, "tol"));
    if (k.contains("max_iter")) c.dare.max_iter = as_uint(k["max_iter"], join(p, "max_iter"));
    if (k.contains("overflow_guard"))
      c.dare.overflow_guard = as_double(k["overflow_guard"], join(p, "overflow_guard"));
  }
  if (j.contains("on_diverged"))
    c.on_diverged = as_enum(j["on_diverged"], join(path, "on_diverged"), kDiverged);
  if (j.contains("swap")) {
    const auto& k = j["swap"];
    const auto p = join(path, "swap");
    check_keys(k, p, {"keep_best", "max_outer_iterations"});
    if (k.contains("keep_best")) c.swap.keep_best = as_bool(k["keep_best"], join(p, "keep_best"));
    if (k.contains("max_outer_iterations"))
      c.swap.max_outer_iterations =
          as_uint(k["max_outer_iterations"], join(p, "max_outer_iterations"));
  }
  if (j.contains("baseline") && !j["baseline"].is_null())
    run.baseline = as_string(j["baseline"], join(path, "baseline"));
  return run;
}

bool is_scaled_identity(const Matrix& m, double& c) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  c = m(0, 0);
  return m == c * Matrix::Identity(m.rows(), m.cols());
}

Json matrix_json(const Matrix& m, bool allow_scalar = true) {
  double c = 0.0;
  if (allow_scalar && is_scaled_identity(m, c)) return c;
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Vector& v) {
  if (v.size() > 0 && (v.array() == v(0)).all()) return v(0);
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json system_json(const SystemSpec& s) {
  Json j;
  j["kind"] = enum_name(s.kind, kSystemKinds);
  switch (s.kind) {
    case SystemSpec::Kind::matrices:
      j["A"] = matrix_json(s.A, false);
      if (s.actuator_pool.size() > 0) j["actuator_pool"] = matrix_json(s.actuator_pool, false);
      if (s.sensor_pool.size() > 0) j["sensor_pool"] = matrix_json(s.sensor_pool, false);
      break;
    case SystemSpec::Kind::random_network:
      j["n"] = s.n;
      j["eig_band"] = s.eig_band;
      j["seed"] = s.seed ? Json(*s.seed) : Json(nullptr);
      break;
    case SystemSpec::Kind::random_graph_network:
      j["n"] = s.n;
      j["edge_prob"] = s.edge_prob;
      j["spectral_radius"] = s.spectral_radius;
      j["seed"] = s.seed ? Json(*s.seed) : Json(nullptr);
      break;
  }
  j["W"] = matrix_json(s.W);
  j["v_var"] = s.v_var;
  return j;
}

Json run_json(const RunSpec& r) {
  const auto& c = r.sim;
  Json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["system"] = system_json(r.system);
  j["mode"] = enum_name(c.mode, kModes);
  j["feedback"] = enum_name(c.feedback, kFeedback);
  if (c.initial_architecture)
    j["initial_architecture"] = {{"actuators", c.initial_architecture->actuators()},
                                 {"sensors", c.initial_architecture->sensors()}};
  else
    j["initial_architecture"] = nullptr;
  const auto& k = c.constraints;
  j["constraints"] = {{"act_min", k.act_min},
                      {"act_max", k.act_max},
                      {"sen_min", k.sen_min},
                      {"sen_max", k.sen_max},
                      {"max_changes", k.max_changes ? Json(*k.max_changes) : Json(nullptr)},
                      {"per_subsequence", k.per_subsequence}};
  const auto& p = c.costs;
  j["costs"] = {{"Q", matrix_json(p.Q)},
                {"R1", matrix_json(p.R1)},
                {"Q_T", matrix_json(p.Q_T)},
                {"R2_act", vector_json(p.R2_act)},
                {"R2_sen", vector_json(p.R2_sen)},
                {"R3_act", vector_json(p.R3_act)},
                {"R3_sen", vector_json(p.R3_sen)},
                {"horizon", p.horizon},
                {"switching", enum_name(p.switching, kSwitching)}};
  j["actuator_budget"] = c.actuator_budget;
  j["steps"] = c.steps;
  j["x0_std"] = c.x0_std;
  j["E0_scale"] = c.E0_scale;
  j["estimate_from_state"] = c.estimate_from_state;
  j["identify"] = c.identify;
  j["dare"] = {{"method", enum_name(c.dare.method, kDareMethods)},
               {"tol", c.dare.tol},
               {"max_iter", c.dare.max_iter},
               {"overflow_guard", c.dare.overflow_guard}};
  j["on_diverged"] = enum_name(c.on_diverged, kDiverged);
  j["swap"] = {{"keep_best", c.swap.keep_best},
               {"max_outer_iterations", c.swap.max_outer_iterations}};
  j["baseline"] = r.baseline ? Json(*r.baseline) : Json(nullptr);
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_indices(const IndexSet& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ";" : "") + std::to_string(s[i]);
  return out;
}

std::string join_values(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ";" : "") + fmt(v(i));
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

bool safe_name(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
  });
}

std::string norms_csv(const SimulationTrace& tr) {
  std::ostringstream o;
  o << "t,x_norm,x_hat_norm,error_norm\n";
  for (const auto& s : tr.steps)
    o << s.t << ',' << fmt(s.x.norm()) << ',' << fmt(s.x_hat.norm()) << ',' << fmt(s.error.norm())
      << '\n';
  return o.str();
}

std::string cost_csv(const SimulationTrace& tr) {
  std::ostringstream o;
  o << "t,stage,running,switching,cumulative\n";
  for (const auto& e : tr.ledger.entries())
    o << e.t << ',' << fmt(e.true_stage) << ',' << fmt(e.true_running) << ','
      << fmt(e.true_switching) << ',' << fmt(e.cumulative_true) << '\n';
  return o.str();
}

std::string raster_csv(const SimulationTrace& tr) {
  std::ostringstream o;
  o << "t,kind,index\n";
  for (const auto& s : tr.steps) {
    for (auto i : s.arch.actuators()) o << s.t << ",actuator," << i << '\n';
    for (auto i : s.arch.sensors()) o << s.t << ",sensor," << i << '\n';
  }
  return o.str();
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json preset_lqr_50() {
  Json runs = Json::array();
  for (int seed = 1; seed <= 5; ++seed) {
    Json base = {
        {"seed", seed},
        {"system",
         {{"kind", "random_graph_network"}, {"n", 50}, {"edge_prob", 0.05},
          {"spectral_radius", 1.05}, {"W", 1e-4}, {"v_var", 1.0}}},
        {"feedback", "state"},
        {"initial_architecture", {{"actuators", {0, 1}}, {"sensors", Json::array()}}},
        {"actuator_budget", 2},
        {"steps", 100},
        {"x0_std", 5.0}};
    Json fixed = base;
    fixed["name"] = "fixed-s" + std::to_string(seed);
    fixed["mode"] = "fixed";
    Json tuned = base;
    tuned["name"] = "self-tuning-s" + std::to_string(seed);
    tuned["mode"] = "self_tuning";
    tuned["baseline"] = fixed["name"];
    runs.push_back(fixed);
    runs.push_back(tuned);
  }
  return {{"schema_version", kSchemaVersion}, {"name", "lqr-50"}, {"runs", runs}};
}

Json preset_lqg_50(bool with_costs) {
  Json runs = Json::array();
  for (int seed = 1; seed <= 5; ++seed) {
    Json base = {{"seed", seed},
                 {"system",
                  {{"kind", "random_network"}, {"n", 50}, {"eig_band", 0.1}, {"W", 1.0},
                   {"v_var", 1.0}}},
                 {"feedback", "output"},
                 {"steps", 100},
                 {"x0_std", 1.0}};
    if (with_costs) {
      base["constraints"] = {{"act_min", 1}, {"act_max", 5}, {"sen_min", 1}, {"sen_max", 5},
                             {"max_changes", 2}, {"per_subsequence", 1}};
      base["costs"] = {{"horizon", 10}, {"R2_act", 100.0}, {"R2_sen", 100.0},
                       {"R3_act", 100.0}, {"R3_sen", 100.0}};
    } else {
      base["constraints"] = {{"act_min", 5}, {"act_max", 5}, {"sen_min", 5}, {"sen_max", 5},
                             {"max_changes", nullptr}, {"per_subsequence", 1}};
      base["costs"] = {{"horizon", 10}};
    }
    Json fixed = base;
    fixed["name"] = "fixed-s" + std::to_string(seed);
    fixed["mode"] = "fixed";
    Json tuned = base;
    tuned["name"] = "self-tuning-s" + std::to_string(seed);
    tuned["mode"] = "self_tuning";
    tuned["baseline"] = fixed["name"];
    runs.push_back(fixed);
    runs.push_back(tuned);
  }
  return {{"schema_version", kSchemaVersion},
          {"name", with_costs ? "lqg-50-costs" : "lqg-50-tight"},
          {"runs", runs}};
}

}  // namespace

LinearNetworkSystem SystemSpec::build(std::uint64_t run_seed) const {
  const Matrix noise = W.size() > 0 ? W : Matrix(Matrix::Identity(n, n));
  switch (kind) {
    case Kind::random_network:
      return random_network(n, eig_band, seed.value_or(run_seed)).with_noise(noise, v_var);
    case Kind::random_graph_network:
      return random_graph_network(n, edge_prob, spectral_radius, seed.value_or(run_seed))
          .with_noise(noise, v_var);
    case Kind::matrices:
      break;
  }
  const Matrix B = actuator_pool.size() > 0 ? actuator_pool : Matrix(Matrix::Identity(n, n));
  const Matrix C = sensor_pool.size() > 0 ? sensor_pool : Matrix(Matrix::Identity(n, n));
  return LinearNetworkSystem(A, B, C, noise, v_var);
}

ExperimentConfig parse_experiment(const Json& j) {
  check_keys(j, "config", {"schema_version", "name", "output_dir", "emit", "runs"});
  ExperimentConfig cfg;
  if (!j.contains("schema_version")) throw ConfigError("schema_version", "missing");
  const auto version = as_uint(j["schema_version"], "schema_version");
  if (version != static_cast<std::uint64_t>(kSchemaVersion))
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version) +
                                            " (expected " + std::to_string(kSchemaVersion) + ")");
  if (j.contains("name")) cfg.name = as_string(j["name"], "name");
  if (j.contains("output_dir")) cfg.output_dir = as_string(j["output_dir"], "output_dir");
  if (j.contains("emit")) {
    const auto& e = j["emit"];
    check_keys(e, "emit", {"trace", "summary", "plotdata"});
    if (e.contains("trace")) cfg.emit.trace = as_bool(e["trace"], "emit.trace");
    if (e.contains("summary")) cfg.emit.summary = as_bool(e["summary"], "emit.summary");
    if (e.contains("plotdata")) cfg.emit.plotdata = as_bool(e["plotdata"], "emit.plotdata");
  }
  if (j.contains("runs")) {
    if (!j["runs"].is_array()) throw ConfigError("runs", "expected a list");
    for (std::size_t i = 0; i < j["runs"].size(); ++i)
      cfg.runs.push_back(parse_run(j["runs"][i], "runs[" + std::to_string(i) + "]"));
  }
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    // Keep only the description; the location is rebuilt above.
    std::string msg = e.what();
    if (auto pos = msg.find(": ", msg.find("parse error")); pos != std::string::npos)
      msg = msg.substr(pos + 2);
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col), msg);
  }
  return parse_experiment(j);
}

Json to_json(const ExperimentConfig& config) {
  Json j;
  j["schema_version"] = config.schema_version;
  j["name"] = config.name;
  j["output_dir"] = config.output_dir;
  j["emit"] = {{"trace", config.emit.trace},
               {"summary", config.emit.summary},
               {"plotdata", config.emit.plotdata}};
  j["runs"] = Json::array();
  for (const auto& r : config.runs) j["runs"].push_back(run_json(r));
  return j;
}

std::vector<std::string> validate_experiment(const ExperimentConfig& config) {
  std::vector<std::string> out;
  if (config.output_dir.empty()) out.push_back("output_dir: must not be empty");
  std::error_code ec;
  if (!config.output_dir.empty() && fs::exists(config.output_dir, ec) &&
      !fs::is_directory(config.output_dir, ec))
    out.push_back("output_dir: exists and is not a directory");

  std::set<std::string> names;
  for (const auto& r : config.runs) names.insert(r.sim.name);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < config.runs.size(); ++i) {
    const auto& r = config.runs[i];
    const std::string where = "runs[" + std::to_string(i) + "]";
    if (!safe_name(r.sim.name))
      out.push_back(where + ".name: must be non-empty and use only letters, digits, '-', '_' or '.'");
    else if (!seen.insert(r.sim.name).second)
      out.push_back(where + ".name: duplicate run name \"" + r.sim.name + "\"");
    if (r.baseline) {
      if (*r.baseline == r.sim.name)
        out.push_back(where + ".baseline: a run cannot be its own baseline");
      else if (!names.count(*r.baseline))
        out.push_back(where + ".baseline: no run named \"" + *r.baseline + "\"");
    }
    bool parts_ok = true;
    try {
      r.sim.constraints.validate(r.sim.system.num_actuators(), r.sim.system.num_sensors());
    } catch (const std::exception& e) {
      out.push_back(where + ".constraints: " + e.what());
      parts_ok = false;
    }
    try {
      r.sim.costs.validate(r.sim.system);
    } catch (const std::exception& e) {
      out.push_back(where + ".costs: " + e.what());
      parts_ok = false;
    }
    if (parts_ok) {
      try {
        r.sim.validate();
      } catch (const std::exception& e) {
        out.push_back(where + ": " + e.what());
      }
    }
  }
  return out;
}

void override_seed(ExperimentConfig& config, std::uint64_t seed) {
  for (auto& r : config.runs) {
    r.sim.seed = seed;
    if (!r.system.seed) r.sim.system = r.system.build(seed);
  }
}

std::vector<std::string> preset_names() { return {"lqr-50", "lqg-50-tight", "lqg-50-costs"}; }

ExperimentConfig preset(const std::string& name) {
  if (name == "lqr-50") return parse_experiment(preset_lqr_50());
  if (name == "lqg-50-tight") return parse_experiment(preset_lqg_50(false));
  if (name == "lqg-50-costs") return parse_experiment(preset_lqg_50(true));
  throw std::out_of_range("unknown preset \"" + name + "\"");
}

std::string trace_csv(const SimulationTrace& trace) {
  const Eigen::Index n = trace.steps.empty() ? 0 : trace.steps.front().x.size();
  std::ostringstream o;
  o << "t,cumulative_true,true_stage,true_running,true_switching,est_control,est_running,"
       "est_switching,est_total,x_norm,x_hat_norm,error_norm,num_actuators,num_sensors,"
       "actuators,sensors,u,evaluations,policy_bounded";
  for (Eigen::Index i = 0; i < n; ++i) o << ",x_" << i;
  for (Eigen::Index i = 0; i < n; ++i) o << ",x_hat_" << i;
  o << '\n';
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& s = trace.steps[t];
    const auto& e = trace.ledger.entries()[t];
    o << s.t << ',' << fmt(e.cumulative_true) << ',' << fmt(e.true_stage) << ','
      << fmt(e.true_running) << ',' << fmt(e.true_switching) << ',' << fmt(e.estimated.control)
      << ',' << fmt(e.estimated.running) << ',' << fmt(e.estimated.switching) << ','
      << fmt(e.estimated.total) << ',' << fmt(s.x.norm()) << ',' << fmt(s.x_hat.norm()) << ','
      << fmt(s.error.norm()) << ',' << s.arch.actuators().size() << ','
      << s.arch.sensors().size() << ',' << join_indices(s.arch.actuators()) << ','
      << join_indices(s.arch.sensors()) << ',' << join_values(s.u) << ',' << s.evaluations << ','
      << (s.policy_bounded ? 1 : 0);
    for (Eigen::Index i = 0; i < n; ++i) o << ',' << fmt(s.x(i));
    for (Eigen::Index i = 0; i < n; ++i) o << ',' << fmt(s.x_hat(i));
    o << '\n';
  }
  return o.str();
}

std::string timing_csv(const SimulationTrace& trace) {
  std::ostringstream o;
  o << "t,compute_seconds,evaluations\n";
  for (const auto& s : trace.steps) o << s.t << ',' << fmt(s.compute_seconds) << ',' << s.evaluations << '\n';
  return o.str();
}

Json summarize(const ExperimentConfig& config, std::span<const SimulationTrace> traces) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = config.name;
  j["runs"] = Json::array();
  std::map<std::string, double> cost;
  for (const auto& t : traces) cost[t.name] = t.cumulative_cost();
  const auto summary = compare_runs(traces);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& s = summary.runs[i];
    const auto& t = traces[i];
    Json r;
    r["name"] = s.name;
    r["mode"] = enum_name(t.mode, kModes);
    r["feedback"] = enum_name(t.feedback, kFeedback);
    r["seed"] = t.seed;
    r["steps"] = t.steps.size();
    r["cumulative_cost"] = s.cumulative_cost;
    r["final_state_norm"] = s.final_state_norm;
    r["max_state_norm"] = s.max_state_norm;
    r["final_estimate_norm"] = s.final_estimate_norm;
    r["final_error_norm"] = s.final_error_norm;
    r["mean_changes_per_step"] = s.mean_changes_per_step;
    r["changes_per_step"] = s.changes_per_step;
    r["warnings"] = t.warnings;
    const RunSpec* spec = nullptr;
    for (const auto& rs : config.runs)
      if (rs.sim.name == t.name) spec = &rs;
    if (spec && spec->baseline && cost.count(*spec->baseline)) {
      r["baseline"] = *spec->baseline;
      const double b = cost[*spec->baseline];
      r["baseline_cost_ratio"] = b == s.cumulative_cost ? 1.0 : b / s.cumulative_cost;
    } else {
      r["baseline"] = nullptr;
      r["baseline_cost_ratio"] = nullptr;
    }
    j["runs"].push_back(std::move(r));
  }
  return j;
}

CampaignResult run_experiment(const ExperimentConfig& config, std::size_t jobs) {
  const auto problems = validate_experiment(config);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw ConfigError("config", msg);
  }
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  if (config.emit.plotdata) fs::create_directories(dir / "plot");

  CampaignResult result;
  const std::size_t count = config.runs.size();
  result.traces.resize(count);
  std::vector<std::exception_ptr> errors(count);
  std::vector<double> wall(count, 0.0);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        const auto start = std::chrono::steady_clock::now();
        auto trace = simulate(config.runs[i].sim);
        wall[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::string& name = trace.name;
        if (config.emit.trace) {
          write_file(dir / (name + ".trace.csv"), trace_csv(trace));
          write_file(dir / (name + ".timing.csv"), timing_csv(trace));
        }
        if (config.emit.plotdata) {
          write_file(dir / "plot" / (name + ".norms.csv"), norms_csv(trace));
          write_file(dir / "plot" / (name + ".cost.csv"), cost_csv(trace));
          write_file(dir / "plot" / (name + ".raster.csv"), raster_csv(trace));
        }
        result.traces[i] = std::move(trace);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, count));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.summary = compare_runs(result.traces);
  result.summary_json = summarize(config, result.traces);
  if (config.emit.summary) {
    write_file(dir / "summary.json", result.summary_json.dump(2) + "\n");
    Json timing;
    timing["generated_at"] = timestamp();
    timing["jobs"] = threads;
    timing["runs"] = Json::array();
    for (std::size_t i = 0; i < count; ++i)
      timing["runs"].push_back({{"name", result.traces[i].name},
                                {"wall_seconds", wall[i]},
                                {"mean_compute_seconds",
                                 result.summary.runs[i].mean_compute_seconds}});
    write_file(dir / "timing.json", timing.dump(2) + "\n");
  }
  return result;
}

}  // namespace selftune
