#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace spurious {

// Counter-based 64-bit generator. Output k of a stream with key K is
// mix(K + (k + 1) * 0x9E3779B97F4A7C15) where mix is the SplitMix64
// finalizer, so any draw can be recomputed from (key, counter) alone.
// split(id) derives an independent substream key as mix(key ^ mix(id)).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix(key_ + counter_ * kGolden);
  }

  Rng split(std::uint64_t stream) const {
    Rng r;
    r.key_ = mix(key_ ^ mix(stream + kGolden));
    return r;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; both variates of a pair are used.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Substream ids used when a module derives generators from a run seed.
namespace stream {
inline constexpr std::uint64_t kInstance = 1;
inline constexpr std::uint64_t kFreshDirections = 2;
inline constexpr std::uint64_t kMonteCarlo = 3;
inline constexpr std::uint64_t kAdversarialBuild = 4;
inline constexpr std::uint64_t kAdversarialVerify = 5;
inline constexpr std::uint64_t kQuadratureDesign = 6;
inline constexpr std::uint64_t kQuadratureTarget = 7;
inline constexpr std::uint64_t kQuadratureWeights = 8;
}  // namespace stream

}  // namespace spurious
