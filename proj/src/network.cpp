#include "selftune/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "selftune/rng.hpp"

namespace selftune {

namespace {

void normalize(IndexSet& s, const char* what) {
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end())
    throw std::invalid_argument(std::string("duplicate index in ") + what + " set");
}

IndexSet& mutable_set(IndexSet& acts, IndexSet& sens, DeviceKind kind) {
  return kind == DeviceKind::actuator ? acts : sens;
}

}  // namespace

LinearNetworkSystem::LinearNetworkSystem(Matrix A, Matrix actuator_pool, Matrix sensor_pool,
                                         Matrix W, double v_var)
    : A_(std::move(A)),
      actuator_pool_(std::move(actuator_pool)),
      sensor_pool_(std::move(sensor_pool)),
      W_(std::move(W)),
      v_var_(v_var) {
  const auto n = A_.rows();
  if (n < 1 || A_.cols() != n) throw std::invalid_argument("A must be square with n >= 1");
  if (actuator_pool_.rows() != n)
    throw std::invalid_argument("actuator pool columns must have dimension n");
  if (sensor_pool_.cols() != n)
    throw std::invalid_argument("sensor pool rows must have dimension n");
  if (W_.rows() != n || W_.cols() != n) throw std::invalid_argument("W must be n x n");
  if (!is_symmetric_psd(W_)) throw std::invalid_argument("W must be symmetric positive semidefinite");
  if (!(v_var_ >= 0.0)) throw std::invalid_argument("v_var must be >= 0");
  W_ = symmetrize(W_);
}

LinearNetworkSystem LinearNetworkSystem::with_canonical_pools(Matrix A, Matrix W, double v_var) {
  const auto n = A.rows();
  return LinearNetworkSystem(std::move(A), Matrix::Identity(n, n), Matrix::Identity(n, n),
                             std::move(W), v_var);
}

LinearNetworkSystem LinearNetworkSystem::with_dynamics(Matrix A) const {
  return LinearNetworkSystem(std::move(A), actuator_pool_, sensor_pool_, W_, v_var_);
}

LinearNetworkSystem LinearNetworkSystem::with_noise(Matrix W, double v_var) const {
  return LinearNetworkSystem(A_, actuator_pool_, sensor_pool_, std::move(W), v_var);
}

Architecture::Architecture(IndexSet actuators, IndexSet sensors)
    : actuators_(std::move(actuators)), sensors_(std::move(sensors)) {
  normalize(actuators_, "actuator");
  normalize(sensors_, "sensor");
}

bool Architecture::contains(DeviceKind kind, std::size_t index) const {
  const auto& s = devices(kind);
  return std::binary_search(s.begin(), s.end(), index);
}

Architecture Architecture::with_added(DeviceKind kind, std::size_t index) const {
  Architecture out = *this;
  auto& s = mutable_set(out.actuators_, out.sensors_, kind);
  auto it = std::lower_bound(s.begin(), s.end(), index);
  if (it != s.end() && *it == index) throw std::invalid_argument("device already active");
  s.insert(it, index);
  return out;
}

Architecture Architecture::with_removed(DeviceKind kind, std::size_t index) const {
  Architecture out = *this;
  auto& s = mutable_set(out.actuators_, out.sensors_, kind);
  auto it = std::lower_bound(s.begin(), s.end(), index);
  if (it == s.end() || *it != index) throw std::invalid_argument("device not active");
  s.erase(it);
  return out;
}

void Architecture::check_bounds(const LinearNetworkSystem& system) const {
  if (!actuators_.empty() && actuators_.back() >= system.num_actuators())
    throw PoolBoundsError("actuator index " + std::to_string(actuators_.back()) +
                          " outside pool of size " + std::to_string(system.num_actuators()));
  if (!sensors_.empty() && sensors_.back() >= system.num_sensors())
    throw PoolBoundsError("sensor index " + std::to_string(sensors_.back()) +
                          " outside pool of size " + std::to_string(system.num_sensors()));
}

std::string Architecture::to_string() const {
  std::ostringstream os;
  auto put = [&os](const IndexSet& s) {
    os << '{';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << '}';
  };
  os << "A=";
  put(actuators_);
  os << " S=";
  put(sensors_);
  return os.str();
}

void ArchitectureConstraints::validate(std::size_t num_actuators, std::size_t num_sensors) const {
  if (act_min > act_max) throw std::invalid_argument("act_min exceeds act_max");
  if (sen_min > sen_max) throw std::invalid_argument("sen_min exceeds sen_max");
  if (act_max > num_actuators) throw std::invalid_argument("act_max exceeds actuator pool size");
  if (sen_max > num_sensors) throw std::invalid_argument("sen_max exceeds sensor pool size");
  if (per_subsequence < 1) throw std::invalid_argument("per_subsequence must be >= 1");
  if (max_changes && per_subsequence > *max_changes)
    throw std::invalid_argument("per_subsequence exceeds max_changes");
}

Matrix build_input_matrix(const LinearNetworkSystem& system, const Architecture& arch) {
  arch.check_bounds(system);
  return select_columns(system.actuator_pool(), arch.actuators());
}

Matrix build_output_matrix(const LinearNetworkSystem& system, const Architecture& arch) {
  arch.check_bounds(system);
  return select_rows(system.sensor_pool(), arch.sensors());
}

Eigen::VectorXi indicator(const Architecture& arch, DeviceKind kind, std::size_t pool_size) {
  Eigen::VectorXi v = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(pool_size));
  for (auto i : arch.devices(kind)) {
    if (i >= pool_size) throw PoolBoundsError("index outside pool");
    v(static_cast<Eigen::Index>(i)) = 1;
  }
  return v;
}

IndexSet from_indicator(const Eigen::VectorXi& ind) {
  IndexSet s;
  for (Eigen::Index i = 0; i < ind.size(); ++i)
    if (ind(i) != 0) s.push_back(static_cast<std::size_t>(i));
  return s;
}

bool satisfies_constraints(const Architecture& arch, const ArchitectureConstraints& c) {
  const auto na = arch.actuators().size();
  const auto ns = arch.sensors().size();
  return c.act_min <= na && na <= c.act_max && c.sen_min <= ns && ns <= c.sen_max;
}

NetworkFactors random_network_factors(Eigen::Index n, double eig_band, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_network: n must be >= 1");
  if (!(eig_band >= 0.0 && eig_band < 1.0))
    throw std::invalid_argument("random_network: eig_band must lie in [0, 1)");
  Rng rng = Rng(seed).split(streams::kNetwork);

  const Matrix G = rng.normal_matrix(n, n);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix V = qr.householderQ() * Matrix::Identity(n, n);
  // Fix column signs so V does not depend on the QR routine's sign choices.
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) V.col(j) *= -1.0;

  Vector lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) lambda(i) = rng.uniform(1.0 - eig_band, 1.0 + eig_band);
  for (Eigen::Index i = 0; i < n; ++i)
    if (rng.uniform() >= 0.5) lambda(i) = -lambda(i);
  return {std::move(V), std::move(lambda)};
}

LinearNetworkSystem random_network(Eigen::Index n, double eig_band, std::uint64_t seed) {
  auto f = random_network_factors(n, eig_band, seed);
  Matrix A = symmetrize(f.V * f.eigenvalues.asDiagonal() * f.V.transpose());
  return LinearNetworkSystem::with_canonical_pools(std::move(A), Matrix::Identity(n, n), 1.0);
}

LinearNetworkSystem random_graph_network(Eigen::Index n, double edge_prob,
                                         double spectral_radius, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_graph_network: n must be >= 1");
  if (!(edge_prob > 0.0 && edge_prob <= 1.0))
    throw std::invalid_argument("random_graph_network: edge_prob must lie in (0, 1]");
  if (!(spectral_radius > 0.0) || !std::isfinite(spectral_radius))
    throw std::invalid_argument("random_graph_network: spectral_radius must be > 0");
  Rng rng = Rng(seed).split(streams::kNetwork);
  Matrix G = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double u = rng.uniform();
      const double z = rng.normal();
      if (u < edge_prob) G(i, j) = z;
    }
  const double rho = Eigen::EigenSolver<Matrix>(G, false).eigenvalues().cwiseAbs().maxCoeff();
  if (!(rho > 0.0))
    throw std::invalid_argument("random_graph_network: drawn graph is nilpotent; use another seed");
  return LinearNetworkSystem::with_canonical_pools((spectral_radius / rho) * G,
                                                   Matrix::Identity(n, n), 1.0);
}

}  // namespace selftune
