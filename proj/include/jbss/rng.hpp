#pragma once

#include "jbss/core.hpp"

#include <cstdint>
#include <random>

namespace jbss {

/// Seeded random stream. Equal (seed, stream) pairs give bit-identical draw
/// sequences on the same build. Handles are split, never shared: give every
/// Monte-Carlo trial its own stream.
class RngHandle {
 public:
  using result_type = std::mt19937_64::result_type;

  RngHandle(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent child stream derived deterministically from this handle's
  /// (seed, stream) and `child`. Does not advance this handle.
  RngHandle split(std::uint64_t child) const;

  double normal();
  double uniform();
  /// Gamma(shape, scale = 1).
  double gamma(double shape);
  /// rows x cols matrix of independent standard normals, filled column by column.
  Matrix normal_matrix(Index rows, Index cols);

  // UniformRandomBitGenerator interface.
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// SplitMix64 finalizer, used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

}  // namespace jbss
