#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace selftune {

// Seeded generator used for every random draw in the library.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniform and normal variates are derived here (53-bit mantissa
// uniforms, Box-Muller normals) rather than through the <random>
// distributions, whose algorithms are implementation-defined. A given seed
// therefore yields the same stream under any conforming standard library.
//
// Independent sub-streams are obtained with split(stream_id): the child is
// seeded through std::seed_seq from (seed, stream_id), so consuming one
// stream never perturbs another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal.
  double normal();

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  Rng(std::uint64_t seed, std::seed_seq& seq);

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream identifiers for the sub-streams a simulation draws from. Fixed
// values, so adding a stream later does not shift existing ones.
namespace streams {
inline constexpr std::uint64_t kNetwork = 1;
inline constexpr std::uint64_t kInitialState = 2;
inline constexpr std::uint64_t kProcessNoise = 3;
inline constexpr std::uint64_t kMeasurementNoise = 4;
inline constexpr std::uint64_t kInitialArchitecture = 5;
}  // namespace streams

}  // namespace selftune
