#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>

namespace dincikf {

/// SplitMix64 generator. Streams are keyed by a hashed (seed, robot, round, slot)
/// counter so that each noise source draws from its own independent sequence.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key) : state_(key) {}

  static RandomStream derive(std::uint64_t seed, std::uint64_t robot, std::uint64_t round,
                             std::uint64_t slot);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal (Box-Muller, no cached second value).
  double normal();
  /// Sample of N(0, cov); cov may be singular PSD.
  Eigen::VectorXd gaussian(const Eigen::Ref<const Eigen::MatrixXd>& cov);

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace dincikf
