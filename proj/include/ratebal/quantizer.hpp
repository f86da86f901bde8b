#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ratebal/allocator.hpp"
#include "ratebal/fading.hpp"
#include "ratebal/rng.hpp"

namespace ratebal {

enum class QuantizerKind { rate_distortion_model, dithered_scalar };

// Per-entry overhead of the quantizer family: 0 bits for the rate-distortion
// model, 2 bits for the dithered scalar coder.
inline double quantizer_overhead(QuantizerKind k) {
  return k == QuantizerKind::dithered_scalar ? 2.0 : 0.0;
}

struct QuantizerSpec {
  QuantizerKind kind = QuantizerKind::dithered_scalar;
  double target_error = 0.0;  // xi^2 per quantized entry
  double step() const { return std::sqrt(6.0 * target_error); }
  double overhead() const { return quantizer_overhead(kind); }
};

// Rate-distortion feedback cost of one complex coefficient, bits per
// coherence block.
inline double rd_feedback_bits(double sigma2, double xi2) {
  if (sigma2 <= 0.0 || xi2 <= 0.0)
    throw std::invalid_argument("rd_feedback_bits: positive powers required");
  if (xi2 >= sigma2) return 0.0;
  return std::log2(sigma2 / xi2);
}

// Scalar-coder bound: the rate-distortion cost plus the 2-bit overhead.
inline double scalar_feedback_bound(double sigma2, double xi2) {
  if (xi2 >= sigma2) return 0.0;
  return 2.0 + std::log2(sigma2 / xi2);
}

// --- dithered scalar quantizer -------------------------------------------

struct ScalarSample {
  long level_re = 0;
  long level_im = 0;
  std::complex<double> quantized;
  std::complex<double> dither;
};

// Round (h + dither) to the step lattice, then remove the dither.  The
// error h - hhat is uniform on the step square and independent of hhat.
inline ScalarSample scalar_quantize(std::complex<double> h, double step,
                                    Substream& rng) {
  if (step <= 0.0) throw std::invalid_argument("scalar_quantize: step > 0");
  ScalarSample s;
  s.dither = {rng.uniform(-step / 2.0, step / 2.0),
              rng.uniform(-step / 2.0, step / 2.0)};
  const double re = h.real() + s.dither.real();
  const double im = h.imag() + s.dither.imag();
  s.level_re = std::lround(re / step);
  s.level_im = std::lround(im / step);
  s.quantized = {step * s.level_re - s.dither.real(),
                 step * s.level_im - s.dither.imag()};
  return s;
}

// --- quantized channel ----------------------------------------------------

struct QuantizedChannel {
  CMatrix hhat;               // N x M, zeros on inactive entries
  Eigen::MatrixXd error_var;  // xi^2 on active entries, sigma^2 elsewhere
  CMatrix dither;             // scalar kind only
  Eigen::VectorXd emitted_bits;  // per mobile, bits this block
};

// Statistical surrogate for the optimal quantizer: the rate-distortion test
// channel hhat = (1 - xi^2/sigma^2) h + w keeps hhat ~ CN(0, sigma^2 - xi^2)
// with the error independent of hhat.
inline QuantizedChannel model_quantize(
    const CMatrix& h, const Eigen::MatrixXd& gains,
    const std::vector<FeedbackAllocation>& alloc, std::uint64_t seed,
    std::uint64_t block) {
  const Eigen::Index n = h.rows(), m = h.cols();
  QuantizedChannel q;
  q.hhat = CMatrix::Zero(n, m);
  q.error_var = gains;
  q.emitted_bits = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = alloc[i];
    for (int j : a.active) {
      const double s2 = gains(i, j);
      const double xi2 = std::min(a.common_error, s2);
      const double shrink = 1.0 - xi2 / s2;
      Substream rs(seed, StreamId::model_quantizer, block,
                   static_cast<std::uint64_t>(i) * m + j);
      q.hhat(i, j) = shrink * h(i, j) + rs.cgaussian(shrink * xi2);
      q.error_var(i, j) = xi2;
      q.emitted_bits(i) += rd_feedback_bits(s2, xi2);
    }
  }
  return q;
}

// Dithered scalar quantization of the active entries.  Levels are recorded
// per (mobile, antenna) link so entropy coding can run one codebook per
// feedback stream, the way the feedback is actually emitted.
struct LevelRecord {
  int mobile;
  int antenna;
  long level_re;
  long level_im;
};

inline QuantizedChannel dithered_quantize(
    const CMatrix& h, const Eigen::MatrixXd& gains,
    const std::vector<FeedbackAllocation>& alloc, std::uint64_t seed,
    std::uint64_t block, std::vector<LevelRecord>* levels) {
  const Eigen::Index n = h.rows(), m = h.cols();
  QuantizedChannel q;
  q.hhat = CMatrix::Zero(n, m);
  q.dither = CMatrix::Zero(n, m);
  q.error_var = gains;
  q.emitted_bits = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = alloc[i];
    const double step = std::sqrt(6.0 * a.common_error);
    for (int j : a.active) {
      Substream rs(seed, StreamId::csi_dither, block,
                   static_cast<std::uint64_t>(i) * m + j);
      const ScalarSample s = scalar_quantize(h(i, j), step, rs);
      q.hhat(i, j) = s.quantized;
      q.dither(i, j) = s.dither;
      q.error_var(i, j) = a.common_error;
      if (levels)
        levels->push_back({static_cast<int>(i), j, s.level_re, s.level_im});
    }
  }
  return q;
}

// --- prefix coding ---------------------------------------------------------

// Huffman code lengths with deterministic tie-breaking (by frequency, then
// by symbol).  A single-symbol alphabet costs 1 bit per symbol.
inline std::map<long, int> huffman_lengths(const std::map<long, std::uint64_t>& freq) {
  std::map<long, int> len;
  if (freq.empty()) return len;
  if (freq.size() == 1) {
    len[freq.begin()->first] = 1;
    return len;
  }
  struct Node {
    std::uint64_t f;
    long tie;
    int idx;
  };
  auto cmp = [](const Node& a, const Node& b) {
    return a.f != b.f ? a.f > b.f : a.tie > b.tie;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(cmp)> pq(cmp);
  std::vector<std::pair<int, int>> children;  // -1 marks leaves
  std::vector<long> symbol;
  for (const auto& [s, f] : freq) {
    pq.push({f, s, static_cast<int>(children.size())});
    children.push_back({-1, -1});
    symbol.push_back(s);
  }
  while (pq.size() > 1) {
    Node a = pq.top();
    pq.pop();
    Node b = pq.top();
    pq.pop();
    const int idx = static_cast<int>(children.size());
    children.push_back({a.idx, b.idx});
    symbol.push_back(0);
    pq.push({a.f + b.f, std::min(a.tie, b.tie), idx});
  }
  // depth-first depth assignment
  std::vector<std::pair<int, int>> stack{{pq.top().idx, 0}};
  while (!stack.empty()) {
    auto [idx, d] = stack.back();
    stack.pop_back();
    if (children[idx].first < 0) {
      len[symbol[idx]] = std::max(d, 1);
    } else {
      stack.push_back({children[idx].first, d + 1});
      stack.push_back({children[idx].second, d + 1});
    }
  }
  return len;
}

struct EntropyCode {
  std::map<long, int> lengths;   // in-alphabet symbols
  long escape_bound = 0;         // |level| > bound escapes
  int escape_bits = 0;           // escape codeword length (0 when unused)
  std::uint64_t total_bits = 0;  // cost of coding the training stream
  std::uint64_t symbols = 0;
  double bits_per_symbol() const {
    return symbols ? static_cast<double>(total_bits) / symbols : 0.0;
  }
};

inline constexpr long kEscapeSymbol = std::numeric_limits<long>::min();
inline constexpr int kEscapePayloadBits = 32;

// Two-pass empirical prefix code over a level stream.  Levels beyond
// +-8 sigma / step go through an escape symbol followed by a fixed-width
// raw level.
inline EntropyCode entropy_code(std::span<const long> levels, double sigma2,
                                double step) {
  if (levels.empty()) throw std::invalid_argument("entropy_code: empty stream");
  EntropyCode code;
  code.escape_bound =
      std::max<long>(1, std::lround(std::ceil(8.0 * std::sqrt(sigma2) / step)));
  std::map<long, std::uint64_t> freq;
  for (long v : levels) {
    freq[std::abs(v) > code.escape_bound ? kEscapeSymbol : v]++;
  }
  code.lengths = huffman_lengths(freq);
  code.symbols = levels.size();
  for (const auto& [s, f] : freq) {
    std::uint64_t bits = static_cast<std::uint64_t>(code.lengths[s]) * f;
    if (s == kEscapeSymbol) bits += f * kEscapePayloadBits;
    code.total_bits += bits;
  }
  if (code.lengths.count(kEscapeSymbol))
    code.escape_bits = code.lengths[kEscapeSymbol];
  return code;
}

// Empirical entropy of a level stream, bits per symbol (for test oracles and
// reporting the prefix-code redundancy).
inline double stream_entropy_bits(std::span<const long> levels) {
  std::map<long, std::uint64_t> freq;
  for (long v : levels) freq[v]++;
  double h = 0.0;
  const double n = static_cast<double>(levels.size());
  for (const auto& [s, f] : freq) {
    const double p = f / n;
    h -= p * std::log2(p);
  }
  return h;
}

// --- feedback payload (bit-accounting verification only) -------------------

// Canonical code assignment from lengths, then a byte-aligned per-antenna
// stream: header (antenna index, step, count), then the coded levels.
struct PayloadWriter {
  std::vector<std::uint8_t> bytes;
  std::uint32_t bitpos = 0;

  void put_bits(std::uint64_t value, int nbits) {
    for (int k = nbits - 1; k >= 0; --k) {
      if (bitpos % 8 == 0) bytes.push_back(0);
      if ((value >> k) & 1u) bytes.back() |= 1u << (7 - bitpos % 8);
      ++bitpos;
    }
  }
  void align() { bitpos = (bitpos + 7) / 8 * 8; }
  void put_u32(std::uint32_t v) {
    align();
    for (int k = 0; k < 4; ++k) bytes.push_back((v >> (8 * k)) & 0xff);
    bitpos += 32;
  }
  void put_f64(double v) {
    align();
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int k = 0; k < 8; ++k) bytes.push_back((u >> (8 * k)) & 0xff);
    bitpos += 64;
  }
};

inline std::map<long, std::uint64_t> canonical_codewords(
    const std::map<long, int>& lengths) {
  std::vector<std::pair<int, long>> order;
  for (const auto& [s, l] : lengths) order.push_back({l, s});
  std::sort(order.begin(), order.end());
  std::map<long, std::uint64_t> words;
  std::uint64_t next = 0;
  int prev_len = order.empty() ? 0 : order.front().first;
  for (const auto& [l, s] : order) {
    next <<= (l - prev_len);
    words[s] = next++;
    prev_len = l;
  }
  return words;
}

inline std::vector<std::uint8_t> serialize_feedback(
    int mobile, const std::vector<int>& antennas, double step,
    const std::vector<std::vector<long>>& per_antenna_levels,
    const std::vector<EntropyCode>& codes) {
  PayloadWriter w;
  w.put_u32(static_cast<std::uint32_t>(mobile));
  w.put_u32(static_cast<std::uint32_t>(antennas.size()));
  for (size_t k = 0; k < antennas.size(); ++k) {
    const auto& code = codes[k];
    const auto words = canonical_codewords(code.lengths);
    w.put_u32(static_cast<std::uint32_t>(antennas[k]));
    w.put_f64(step);
    w.put_u32(static_cast<std::uint32_t>(per_antenna_levels[k].size()));
    for (long v : per_antenna_levels[k]) {
      const bool esc = std::abs(v) > code.escape_bound;
      const long sym = esc ? kEscapeSymbol : v;
      w.put_bits(words.at(sym), code.lengths.at(sym));
      if (esc)
        w.put_bits(static_cast<std::uint32_t>(v + (1ll << 31)),
                   kEscapePayloadBits);
    }
    w.align();
  }
  return w.bytes;
}

}  // namespace ratebal
