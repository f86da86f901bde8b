#pragma once

#include <complex>
#include <cmath>
#include <cstdint>

namespace ratebal {

// Counter-based substream RNG.  Every (seed, purpose, block, lane) tuple maps
// to an independent stream, so draws are reproducible regardless of how work
// is split across threads.  The mixer is the splitmix64 finalizer, which is
// statistically solid for this kind of keyed counter use.
namespace rng_detail {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a + kGamma * (b + 1));
}

}  // namespace rng_detail

// Stream purposes, kept distinct so adding draws to one stage never shifts
// the randomness seen by another.
enum class StreamId : std::uint64_t {
  downlink_fading = 1,
  uplink_fading = 2,
  csi_dither = 3,
  model_quantizer = 4,
  source_symbols = 5,
  tx_dither = 6,
  rx_noise = 7,
  residual_noise = 8,
  generic = 9,
};

class Substream {
 public:
  Substream(std::uint64_t seed, StreamId id, std::uint64_t block = 0,
            std::uint64_t lane = 0) {
    using namespace rng_detail;
    std::uint64_t k = combine(seed, static_cast<std::uint64_t>(id));
    k = combine(k, block);
    state_ = combine(k, lane);
  }

  std::uint64_t next_u64() {
    state_ += rng_detail::kGamma;
    return rng_detail::mix64(state_);
  }

  // Uniform in [0, 1).  53-bit mantissa.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Circularly-symmetric complex Gaussian with E|z|^2 = var.
  std::complex<double> cgaussian(double var) {
    const double s = std::sqrt(var * 0.5);
    return {s * normal(), s * normal()};
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace ratebal
