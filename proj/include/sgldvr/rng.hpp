#ifndef SGLDVR_RNG_HPP
#define SGLDVR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace sgldvr {

// Deterministic counter-derived random streams. Trajectories derive one
// sub-stream per iteration from (master seed, trial index, t), so a run
// prefix never depends on the horizon and replays are bitwise identical on
// any platform (no std::normal_distribution, whose output is
// implementation-defined).

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t index) {
  return detail::mix64(key + 0x9E3779B97F4A7C15ULL * (index + 1));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return detail::mix64(state_);
  }

  // Uniform in (0, 1]; never exactly 0 so log() below is safe.
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  void normal_vector(std::vector<double>& out) {
    for (double& v : out) v = normal();
  }

  // Unbiased integer in [0, n) via Lemire's method with rejection.
  std::uint64_t below(std::uint64_t n) {
    using u128 = unsigned __int128;
    std::uint64_t x = next_u64();
    u128 m = static_cast<u128>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (-n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<u128>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // k indices sampled uniformly with replacement from [0, n).
  void sample_with_replacement(std::size_t n, std::size_t k,
                               std::vector<std::size_t>& out) {
    out.resize(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<std::size_t>(below(n));
  }

  // k distinct indices from [0, n) via partial Fisher-Yates.
  void sample_without_replacement(std::size_t n, std::size_t k,
                                  std::vector<std::size_t>& out,
                                  std::vector<std::size_t>& scratch) {
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = i;
    out.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(scratch[i], scratch[j]);
      out[i] = scratch[i];
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sgldvr

#endif
