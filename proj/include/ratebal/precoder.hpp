#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ratebal/allocator.hpp"
#include "ratebal/fading.hpp"
#include "ratebal/quantizer.hpp"
#include "ratebal/topology.hpp"

namespace ratebal {

// LQ factorization of the quantized channel: hhat = lower * q with q unitary
// and a real non-negative diagonal.
struct PrecoderState {
  CMatrix lower;  // N x M, zero above the diagonal
  CMatrix q;      // M x M unitary
  bool rank_deficient = false;

  std::complex<double> diag(int i) const { return lower(i, i); }
  // top-N rows of q, the precoding basis
  CMatrix q_top() const { return q.topRows(lower.rows()); }
};

// Orthonormalization of the rows of hhat in order, computed as a Householder
// QR of the conjugate transpose, with the column phases fixed afterwards.
inline PrecoderState lq_decompose(const CMatrix& hhat) {
  const Eigen::Index n = hhat.rows(), m = hhat.cols();
  if (n > m) throw std::invalid_argument("lq_decompose: requires N <= M");
  Eigen::HouseholderQR<CMatrix> qr(hhat.adjoint());
  CMatrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  CMatrix qfull = qr.householderQ();

  PrecoderState st;
  st.lower = CMatrix::Zero(n, m);
  st.lower.leftCols(n) = r.adjoint();
  st.q = qfull.adjoint();

  const double scale = hhat.norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> d = st.lower(i, i);
    const double mag = std::abs(d);
    if (mag <= 1e-13 * std::max(scale, 1.0)) {
      st.rank_deficient = true;
      continue;
    }
    const std::complex<double> phase = std::conj(d) / mag;
    st.lower.col(i) *= phase;
    st.q.row(i) *= std::conj(phase);
  }
  return st;
}

struct RateEstimate {
  double mean = 0.0;    // bits per channel use per user
  double stderr_ = 0.0;
  long trials = 0;

  void to_csv(std::ostream& os) const {
    os.precision(17);
    os << mean << "," << stderr_ << "," << trials;
  }
};

namespace detail {

inline RateEstimate reduce(const std::vector<double>& samples) {
  RateEstimate r;
  r.trials = static_cast<long>(samples.size());
  for (double v : samples) r.mean += v;
  r.mean /= r.trials;
  if (r.trials >= 2) {
    double ss = 0.0;
    for (double v : samples) ss += (v - r.mean) * (v - r.mean);
    r.stderr_ = std::sqrt(ss / (r.trials - 1) / r.trials);
  }
  return r;
}

// Quantized-channel ensemble shared by the DP-ZF and ZF evaluators: the
// reference row is used cyclically for N = M users, active entries are drawn
// with the rate-distortion statistics.
inline CMatrix sample_quantized_cyclic(const Eigen::VectorXd& row,
                                       const FeedbackAllocation& alloc,
                                       std::uint64_t seed, std::uint64_t block) {
  const int m = static_cast<int>(row.size());
  CMatrix hh = CMatrix::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int o : alloc.active) {
      const int j = (o + i) % m;
      const double s2 = row(o);
      const double xi2 = std::min(alloc.common_error, s2);
      Substream rs(seed, StreamId::model_quantizer, block,
                   static_cast<std::uint64_t>(i) * m + j);
      hh(i, j) = rs.cgaussian(s2 - xi2);
    }
  return hh;
}

}  // namespace detail

// Analytical DP-ZF lower bound, Monte Carlo over quantized-channel draws:
// per user, log2(1 + rho |l_ii|^2 / (1 + rho * S)) with S the residual error
// sum plus the unsimulated-interference constant.
inline RateEstimate dpzf_rate(const Eigen::VectorXd& gain_row,
                              const FeedbackAllocation& alloc, double rho,
                              long trials, std::uint64_t seed,
                              double residual_coeff = 0.0) {
  if (rho <= 0.0) throw std::invalid_argument("dpzf_rate: rho > 0");
  const int n = static_cast<int>(gain_row.size());
  const double s = error_sum(alloc, gain_row) + residual_coeff;
  const double denom = 1.0 + rho * s;
  std::vector<double> samples(trials);
  for (long t = 0; t < trials; ++t) {
    const CMatrix hh = detail::sample_quantized_cyclic(gain_row, alloc, seed, t);
    const PrecoderState st = lq_decompose(hh);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double l2 = std::norm(st.diag(i));
      acc += std::log2(1.0 + rho * l2 / denom);
    }
    samples[t] = acc / n;
  }
  return detail::reduce(samples);
}

// Linear ZF baseline: unit-norm pseudo-inverse beams, per-user effective
// gain 1 / [(hhat hhat^H)^-1]_ii, same interference denominator.
inline RateEstimate zf_rate(const Eigen::VectorXd& gain_row,
                            const FeedbackAllocation& alloc, double rho,
                            long trials, std::uint64_t seed,
                            double residual_coeff = 0.0) {
  if (rho <= 0.0) throw std::invalid_argument("zf_rate: rho > 0");
  const int n = static_cast<int>(gain_row.size());
  const double s = error_sum(alloc, gain_row) + residual_coeff;
  const double denom = 1.0 + rho * s;
  std::vector<double> samples(trials);
  for (long t = 0; t < trials; ++t) {
    const CMatrix hh = detail::sample_quantized_cyclic(gain_row, alloc, seed, t);
    const CMatrix gram = hh * hh.adjoint();
    Eigen::LLT<CMatrix> llt(gram);
    double acc = 0.0;
    if (llt.info() == Eigen::Success) {
      const CMatrix inv = llt.solve(CMatrix::Identity(n, n));
      for (int i = 0; i < n; ++i) {
        const double gii = inv(i, i).real();
        if (gii > 0.0 && std::isfinite(gii))
          acc += std::log2(1.0 + rho / gii / denom);
      }
    }
    samples[t] = acc / n;
  }
  return detail::reduce(samples);
}

// Uplink rate lower bound, (1/N) E[log2 det(I + rho_ul H^H H)].
inline RateEstimate uplink_rate(const Eigen::MatrixXd& gain_t, double rho_ul,
                                long trials, std::uint64_t seed) {
  if (rho_ul < 0.0) throw std::invalid_argument("uplink_rate: rho_ul >= 0");
  const Eigen::Index n = gain_t.cols();
  std::vector<double> samples(trials);
  for (long t = 0; t < trials; ++t) {
    const CMatrix h = sample_uplink(gain_t, seed, t);
    CMatrix a = CMatrix::Identity(n, n) + rho_ul * (h.adjoint() * h);
    Eigen::LLT<CMatrix> llt(a);
    double logdet = 0.0;
    if (llt.info() == Eigen::Success) {
      const auto& l = llt.matrixLLT();
      for (Eigen::Index i = 0; i < n; ++i)
        logdet += 2.0 * std::log2(l(i, i).real());
    }
    samples[t] = logdet / static_cast<double>(n);
  }
  return detail::reduce(samples);
}

// Offset term g(rho) of the proportional-feedback budget,
// r * R_UL(rho) - r * log2(rho).
inline double uplink_offset_g(const Eigen::MatrixXd& gain_t, double rho,
                              double kappa_ul, double r, long trials,
                              std::uint64_t seed) {
  const RateEstimate ul = uplink_rate(gain_t, kappa_ul * rho, trials, seed);
  return r * ul.mean - r * std::log2(rho);
}

}  // namespace ratebal
