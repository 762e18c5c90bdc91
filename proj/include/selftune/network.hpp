#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "selftune/linalg.hpp"

namespace selftune {

enum class DeviceKind { actuator, sensor };

// Raised when an architecture references a device outside its pool.
class PoolBoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Discrete-time LTI network x+ = A x + B u + w, y = C x + v, with the
// candidate input columns and measurement rows kept as pools.
//
// actuator_pool is n x M (column i is actuator i); sensor_pool is L x n (row j
// is sensor j). W is the process-noise covariance; every sensor has the same
// measurement-noise variance v_var.
class LinearNetworkSystem {
 public:
  LinearNetworkSystem(Matrix A, Matrix actuator_pool, Matrix sensor_pool, Matrix W,
                      double v_var);

  // Pools are the n canonical basis directions.
  static LinearNetworkSystem with_canonical_pools(Matrix A, Matrix W, double v_var);

  Eigen::Index n() const { return A_.rows(); }
  std::size_t num_actuators() const { return static_cast<std::size_t>(actuator_pool_.cols()); }
  std::size_t num_sensors() const { return static_cast<std::size_t>(sensor_pool_.rows()); }
  std::size_t pool_size(DeviceKind kind) const {
    return kind == DeviceKind::actuator ? num_actuators() : num_sensors();
  }

  const Matrix& A() const { return A_; }
  const Matrix& actuator_pool() const { return actuator_pool_; }
  const Matrix& sensor_pool() const { return sensor_pool_; }
  const Matrix& W() const { return W_; }
  double v_var() const { return v_var_; }

  LinearNetworkSystem with_dynamics(Matrix A) const;
  LinearNetworkSystem with_noise(Matrix W, double v_var) const;

 private:
  Matrix A_;
  Matrix actuator_pool_;
  Matrix sensor_pool_;
  Matrix W_;
  double v_var_;
};

// Active actuator and sensor index sets. Both are kept sorted ascending and
// free of duplicates; pool bounds are checked against a system when matrices
// are built.
class Architecture {
 public:
  Architecture() = default;
  Architecture(IndexSet actuators, IndexSet sensors);

  const IndexSet& actuators() const { return actuators_; }
  const IndexSet& sensors() const { return sensors_; }
  const IndexSet& devices(DeviceKind kind) const {
    return kind == DeviceKind::actuator ? actuators_ : sensors_;
  }

  bool contains(DeviceKind kind, std::size_t index) const;
  Architecture with_added(DeviceKind kind, std::size_t index) const;
  Architecture with_removed(DeviceKind kind, std::size_t index) const;

  // Throws PoolBoundsError if any index is outside the system's pools.
  void check_bounds(const LinearNetworkSystem& system) const;

  std::string to_string() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
  friend auto operator<=>(const Architecture&, const Architecture&) = default;

 private:
  IndexSet actuators_;
  IndexSet sensors_;
};

// Cardinality bounds on the active sets plus the swap budgets: at most
// max_changes changes per architecture update (nullopt = unbounded) and
// per_subsequence selections/rejections per subsequence.
struct ArchitectureConstraints {
  std::size_t act_min = 0;
  std::size_t act_max = 0;
  std::size_t sen_min = 0;
  std::size_t sen_max = 0;
  std::optional<std::size_t> max_changes;
  std::size_t per_subsequence = 1;

  std::size_t min(DeviceKind kind) const { return kind == DeviceKind::actuator ? act_min : sen_min; }
  std::size_t max(DeviceKind kind) const { return kind == DeviceKind::actuator ? act_max : sen_max; }

  // Throws std::invalid_argument naming the violated bound.
  void validate(std::size_t num_actuators, std::size_t num_sensors) const;

  friend bool operator==(const ArchitectureConstraints&, const ArchitectureConstraints&) = default;
};

// B for the active actuators, columns in ascending index order (n x 0 when
// no actuator is active).
Matrix build_input_matrix(const LinearNetworkSystem& system, const Architecture& arch);

// C for the active sensors, rows in ascending index order.
Matrix build_output_matrix(const LinearNetworkSystem& system, const Architecture& arch);

// Binary indicator vector of length pool_size.
Eigen::VectorXi indicator(const Architecture& arch, DeviceKind kind, std::size_t pool_size);

IndexSet from_indicator(const Eigen::VectorXi& indicator);

bool satisfies_constraints(const Architecture& arch, const ArchitectureConstraints& constraints);

struct NetworkFactors {
  Matrix V;            // orthonormal eigenvectors
  Vector eigenvalues;  // signed, in the order of V's columns
};

// Draws V and the eigenvalues for random_network. Stream order: the n x n
// standard-normal matrix (row-major) whose QR gives V, then n magnitudes
// uniform in [1 - eig_band, 1 + eig_band], then n signs (+ when a uniform
// draw is < 1/2).
NetworkFactors random_network_factors(Eigen::Index n, double eig_band, std::uint64_t seed);

// A = V diag(eigenvalues) V^T with canonical pools, W = I and v_var = 1;
// callers replace the noise with with_noise().
LinearNetworkSystem random_network(Eigen::Index n, double eig_band, std::uint64_t seed);

// Sparse directed network: each ordered pair (i, j), self-loops included, is
// an edge with probability edge_prob and weight N(0, 1), drawn row-major as
// (uniform, normal) pairs. The result is scaled to the given spectral radius.
// Canonical pools, W = I, v_var = 1.
LinearNetworkSystem random_graph_network(Eigen::Index n, double edge_prob,
                                         double spectral_radius, std::uint64_t seed);

}  // namespace selftune
