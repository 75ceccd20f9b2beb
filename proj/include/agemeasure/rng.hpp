#ifndef AGEMEASURE_RNG_HPP
#define AGEMEASURE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace agemeasure {

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Portable generator: std::mt19937_64 raw words (fixed by the standard) with
/// hand-written transforms, so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Unit-rate exponential, strictly positive.
  double exponential() { return -std::log(uniform_open()); }

  /// Uniform index in [0, n), n > 0 (Lemire's multiply-shift).
  std::uint64_t index(std::uint64_t n) {
    const auto m = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace agemeasure

#endif  // AGEMEASURE_RNG_HPP
