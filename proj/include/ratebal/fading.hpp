#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "ratebal/rng.hpp"

namespace ratebal {

using CMatrix = Eigen::MatrixXcd;

// Coherence block sizing from Doppler and delay spread.  The sensitivity
// factor is the proportionality constant tying the continuous channel
// variation to the block model; 40 corresponds to a -20 dB variation cap.
struct CoherenceSpec {
  double doppler_hz = 0.0;
  double delay_spread_s = 0.0;
  double sensitivity_factor = 40.0;
  long time_symbols = 0;   // T_t
  long freq_bins = 0;      // B
  long block_symbols = 0;  // T = T_t * B
};

inline CoherenceSpec coherence_block(double doppler_hz, double delay_spread_s,
                                     double sensitivity_factor = 40.0) {
  if (doppler_hz <= 0.0 || delay_spread_s <= 0.0 || sensitivity_factor <= 0.0)
    throw std::invalid_argument("coherence_block: inputs must be > 0");
  CoherenceSpec c;
  c.doppler_hz = doppler_hz;
  c.delay_spread_s = delay_spread_s;
  c.sensitivity_factor = sensitivity_factor;
  const double f = sensitivity_factor;
  const double t = 1.0 / (f * f * doppler_hz * delay_spread_s);
  if (t < 0.5)
    throw std::domain_error("coherence_block: channel too fast for block model");
  c.block_symbols = std::max<long>(1, std::lround(t));
  // Split T into integer time x frequency factors.  The absolute symbol and
  // bin scales never enter any downstream quantity, so the factorization is
  // taken as the divisor pair closest to square.
  c.time_symbols = 1;
  for (long d = 1; d * d <= c.block_symbols; ++d)
    if (c.block_symbols % d == 0) c.time_symbols = d;
  c.freq_bins = c.block_symbols / c.time_symbols;
  return c;
}

struct ChannelRealization {
  CMatrix h;            // N x M
  std::uint64_t block = 0;
  std::uint64_t seed = 0;
};

// Rayleigh block fading: entry (i,j) ~ CN(0, gain(i,j)), independent across
// entries and blocks.  Each entry draws from its own counter substream, so
// realizations are identical no matter how generation is parallelized.
inline ChannelRealization sample_downlink(const Eigen::MatrixXd& gain,
                                          std::uint64_t seed,
                                          std::uint64_t block) {
  ChannelRealization r;
  r.block = block;
  r.seed = seed;
  const Eigen::Index n = gain.rows(), m = gain.cols();
  r.h.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      Substream s(seed, StreamId::downlink_fading, block,
                  static_cast<std::uint64_t>(i) * m + j);
      r.h(i, j) = gain(i, j) > 0.0 ? s.cgaussian(gain(i, j))
                                   : std::complex<double>(0.0, 0.0);
    }
  return r;
}

// Uplink counterpart; callers pass the transposed gain map (M x N).
inline CMatrix sample_uplink(const Eigen::MatrixXd& gain_t, std::uint64_t seed,
                             std::uint64_t block) {
  const Eigen::Index m = gain_t.rows(), n = gain_t.cols();
  CMatrix h(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Substream s(seed, StreamId::uplink_fading, block,
                  static_cast<std::uint64_t>(i) * n + j);
      h(i, j) = gain_t(i, j) > 0.0 ? s.cgaussian(gain_t(i, j))
                                   : std::complex<double>(0.0, 0.0);
    }
  return h;
}

// Binary dump for cross-implementation comparison: u64 N, M, block count,
// then row-major interleaved re/im doubles per block (little-endian).
inline void dump_realizations(std::ostream& os,
                              const std::vector<ChannelRealization>& blocks) {
  auto put_u64 = [&](std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
  };
  const std::uint64_t n = blocks.empty() ? 0 : blocks.front().h.rows();
  const std::uint64_t m = blocks.empty() ? 0 : blocks.front().h.cols();
  put_u64(n);
  put_u64(m);
  put_u64(blocks.size());
  for (const auto& b : blocks)
    for (std::uint64_t i = 0; i < n; ++i)
      for (std::uint64_t j = 0; j < m; ++j) {
        const double re = b.h(i, j).real(), im = b.h(i, j).imag();
        os.write(reinterpret_cast<const char*>(&re), 8);
        os.write(reinterpret_cast<const char*>(&im), 8);
      }
}

}  // namespace ratebal
