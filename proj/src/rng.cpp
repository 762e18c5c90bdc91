#include "selftune/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace selftune {

namespace {

std::seed_seq make_seq(std::uint64_t seed, std::uint64_t stream, bool split) {
  const auto lo = static_cast<std::uint32_t>(seed & 0xffffffffu);
  const auto hi = static_cast<std::uint32_t>(seed >> 32);
  if (!split) return std::seed_seq{lo, hi};
  const auto slo = static_cast<std::uint32_t>(stream & 0xffffffffu);
  const auto shi = static_cast<std::uint32_t>(stream >> 32);
  return std::seed_seq{lo, hi, slo, shi, 0x5eedu};
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  auto seq = make_seq(seed, 0, false);
  engine_.seed(seq);
}

Rng::Rng(std::uint64_t seed, std::seed_seq& seq) : seed_(seed), engine_(seq) {}

Rng Rng::split(std::uint64_t stream_id) const {
  auto seq = make_seq(seed_, stream_id, true);
  // The child's own seed is derived so that nested splits stay distinct.
  std::uint64_t child_seed = seed_ * 0x9e3779b97f4a7c15ULL ^ (stream_id + 0x632be59bd9b4e019ULL);
  return Rng(child_seed, seq);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % bound;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  // Row-major fill order is part of the stream contract.
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

}  // namespace selftune
