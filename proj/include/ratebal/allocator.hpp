#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ratebal/bounds.hpp"

namespace ratebal {

// Per-mobile feedback-rate allocation: which antennas are quantized and at
// what resolution.  Active entries share a common error xi^2 = 2^(Q+lambda').
struct FeedbackAllocation {
  int mobile = 0;
  std::vector<int> active;             // antenna indices
  std::vector<double> bits_per_block;  // per active antenna, F_ij * T
  double water_level = 0.0;            // lambda', log2 power
  double common_error = 0.0;           // xi^2 (0 when nothing is active)
  double total_rate = 0.0;             // F_i, bits per channel use
  double activation_threshold = 0.0;   // sigma0^2 (infinite rule)
  double quantizer_overhead = 0.0;     // Q, bits
};

// Water-filling allocation of F_i bits/channel-use across one gain row.
// Candidate active sets are prefixes of the descending-gain order (error
// contributions are monotone in sigma^2, so an optimal set is always such a
// prefix); the best feasible prefix minimizes the total residual error.
inline FeedbackAllocation allocate_finite(const Eigen::VectorXd& gains,
                                          double rate_budget, double T,
                                          double Q, int mobile = 0) {
  if (rate_budget < 0.0)
    throw std::invalid_argument("allocate_finite: negative budget");
  FeedbackAllocation a;
  a.mobile = mobile;
  a.quantizer_overhead = Q;
  const double B = rate_budget * T;  // bits per coherence block

  std::vector<int> order;
  for (int j = 0; j < gains.size(); ++j)
    if (gains(j) > 0.0) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return gains(x) > gains(y); });
  const int K = static_cast<int>(order.size());
  if (K == 0 || B <= Q) return a;  // no feedback beats any quantization

  std::vector<double> log_gain(K), tail(K + 1, 0.0);
  for (int k = 0; k < K; ++k) log_gain[k] = std::log2(gains(order[k]));
  for (int k = K - 1; k >= 0; --k) tail[k] = tail[k + 1] + gains(order[k]);

  double best_err = tail[0];  // empty set: every antenna keeps sigma^2
  int best_k = 0;
  double best_level = 0.0;
  double prefix_log = 0.0;
  for (int k = 1; k <= K; ++k) {
    prefix_log += log_gain[k - 1];
    const double level = (prefix_log - B) / k;
    if (log_gain[k - 1] - level <= Q) continue;  // weakest member inactive
    const double err = k * std::exp2(Q + level) + tail[k];
    if (err < best_err) {
      best_err = err;
      best_k = k;
      best_level = level;
    }
  }
  if (best_k == 0) return a;

  a.water_level = best_level;
  a.common_error = std::exp2(Q + best_level);
  a.total_rate = rate_budget;
  a.activation_threshold = gains(order[best_k - 1]);
  for (int k = 0; k < best_k; ++k) {
    a.active.push_back(order[k]);
    a.bits_per_block.push_back(log_gain[k] - best_level);
  }
  return a;
}

// Infinite-network rule: quantize every antenna whose gain exceeds the
// target error (sigma0^2 = xi^2), all at that common error.
inline FeedbackAllocation allocate_infinite(const Eigen::VectorXd& gains,
                                            double xi2, double T, double Q,
                                            int mobile = 0) {
  if (xi2 <= 0.0) throw std::invalid_argument("allocate_infinite: xi2 > 0");
  FeedbackAllocation a;
  a.mobile = mobile;
  a.quantizer_overhead = Q;
  a.activation_threshold = xi2;

  std::vector<int> order;
  for (int j = 0; j < gains.size(); ++j)
    if (gains(j) > xi2) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return gains(x) > gains(y); });
  if (order.empty()) return a;

  a.common_error = xi2;
  double bits = 0.0;
  for (int j : order) {
    a.active.push_back(j);
    const double fij = Q + std::log2(gains(j) / xi2);
    a.bits_per_block.push_back(fij);
    bits += fij;
  }
  a.total_rate = bits / T;
  a.water_level = std::log2(xi2) - Q;
  return a;
}

// Total residual error: common xi^2 on active antennas, full sigma^2 on the
// rest.
inline double error_sum(const FeedbackAllocation& a,
                        const Eigen::VectorXd& gains) {
  double s = gains.sum();
  for (size_t k = 0; k < a.active.size(); ++k)
    s += a.common_error - gains(a.active[k]);
  return s;
}

// Predicted fed-antenna count at budget F: floor(b * xi^(-4/alpha)) with
// xi^2 from the closed-form budget inversion, capped by the row size.
inline int antennas_for_budget(const Eigen::VectorXd& gains, double F,
                               double T, double Q, double alpha, double b) {
  if (F <= 0.0) throw std::invalid_argument("antennas_for_budget: F > 0");
  const XiBudget xb = xi_of_budget(F, b, T, alpha, Q);
  const double x = b * std::pow(xb.xi2, -2.0 / alpha);
  int n = static_cast<int>(std::floor(x + 1e-12));
  if (gains.size() > 0) n = std::min<int>(n, static_cast<int>(gains.size()));
  return std::max(n, 1);
}

inline void dump_allocation(const FeedbackAllocation& a, std::ostream& os) {
  os.precision(17);
  os << "mobile " << a.mobile << "\n";
  os << "water_level " << a.water_level << "\n";
  os << "error " << a.common_error << "\n";
  os << "active " << a.active.size() << "\n";
  for (size_t k = 0; k < a.active.size(); ++k)
    os << a.active[k] << " " << a.bits_per_block[k] << "\n";
}

}  // namespace ratebal
