#ifndef MIXSTREAM_RNG_HPP
#define MIXSTREAM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mixstream {

// Counter-based generator: output n is a fixed mix of (key, n), so a stream
// is fully determined by its 64-bit seed and can be replayed or split by
// deriving sub-keys. The mixer is the splitmix64 finalizer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t x = key_ + 0x9e3779b97f4a7c15ULL * ++counter_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare draw is cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stable sub-stream derivation: hash extra labels into a parent seed so the
// same (seed, labels) pair names the same stream everywhere (FNV-1a).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view a,
                                 std::string_view b = {}) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  mix(a);
  mix(b);
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + index * 0xd1342543de82ef95ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace mixstream

#endif  // MIXSTREAM_RNG_HPP
