#include "dincikf/rng.hpp"

#include "dincikf/linalg.hpp"

#include <cmath>
#include <numbers>

namespace dincikf {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream RandomStream::derive(std::uint64_t seed, std::uint64_t robot, std::uint64_t round,
                                  std::uint64_t slot) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ robot);
  k = mix64(k ^ round);
  k = mix64(k ^ slot);
  return RandomStream(k);
}

RandomStream::result_type RandomStream::operator()() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double RandomStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::VectorXd RandomStream::gaussian(const Eigen::Ref<const Eigen::MatrixXd>& cov) {
  Eigen::VectorXd z(cov.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal();
  if (cov.isZero(0.0)) return Eigen::VectorXd::Zero(cov.rows());
  return psd_sqrt(cov) * z;
}

}  // namespace dincikf
