#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace svrdqn {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xoshiro256++. Small serializable state, identical output on every
// platform, which the reproducibility contract of the experiment runner
// depends on (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) via multiply-shift with rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below: n must be positive");
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = -n % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // k distinct indices from [0, n), order as produced by partial Fisher-Yates.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  // Combines seed material into a fresh stream seed; used to derive
  // independent per-trial / per-eval streams that never overlap.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2));
    std::uint64_t y = x;
    return splitmix64(y) ^ b;
  }
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

// Stream tags for derived RNGs. One trial consumes several independent
// streams; deriving them from (master seed, trial seed, tag) keeps traces
// stable when trials are added or run in parallel.
namespace rng_tag {
inline constexpr std::uint64_t kWeightInit = 0x57494e49ull;  // "WINI"
inline constexpr std::uint64_t kTrain = 0x5452414eull;       // "TRAN"
inline constexpr std::uint64_t kEnv = 0x454e5649ull;         // "ENVI"
inline constexpr std::uint64_t kEval = 0x4556414cull;        // "EVAL"
inline constexpr std::uint64_t kEvalEnv = 0x4556454eull;     // "EVEN"
}  // namespace rng_tag

}  // namespace svrdqn
