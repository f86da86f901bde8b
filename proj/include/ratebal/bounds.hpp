#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ratebal {

inline constexpr double kLog2E = 1.4426950408889634;  // log2(e)

// --- finite-network theorem evaluators ----------------------------------

// Interference-limited downlink-per-feedback exchange ratio, T/L.
inline double th1_exchange_ratio(double T, double L) {
  if (L < 1) throw std::invalid_argument("th1_exchange_ratio: L >= 1");
  return T / L;
}

// Multiplexing gain when a fraction r of the uplink carries feedback.
inline double th1_multiplexing(double r, double T, double L) {
  return std::min(1.0, r * T / L);
}

// Infinite-network rate-vs-log-feedback exponent, alpha/2 - 1.
inline double th2_exponent(double alpha) {
  if (alpha <= 2.0)
    throw std::domain_error("th2_exponent: requires alpha > 2");
  return alpha / 2.0 - 1.0;
}

// Downlink bits gained per feedback bit in the infinite network at fed-set
// size L (the high-feedback slope approximation).
inline double prop1_slope(double alpha, double Q, double T, double L) {
  return (1.0 - 2.0 / alpha) * (T / L) * (alpha * kLog2E) /
         (alpha * kLog2E + 2.0 * Q);
}

// --- high-SNR rate limit and time sharing --------------------------------

// Interference-limited rate limit at total feedback F (bits per channel use)
// spread over L antennas; expectation over supplied effective-gain samples.
// Evaluated in the log domain so large F*T/L stays finite.
inline double breve_rate(double F, std::span<const double> log2_gains,
                         double L, double Q, double T,
                         std::span<const double> diag_gain_sq) {
  double mean_log_gain = 0.0;
  for (double g : log2_gains) mean_log_gain += g;
  mean_log_gain /= static_cast<double>(log2_gains.size());
  const double log_denom = std::log2(L) + Q + mean_log_gain - F * T / L;
  double acc = 0.0;
  for (double d2 : diag_gain_sq) {
    if (d2 <= 0.0) continue;
    const double x = std::log2(d2) - log_denom;  // log2 of the SINR term
    if (x > 50.0)
      acc += x;
    else if (x < -50.0)
      acc += std::exp2(x) * kLog2E;
    else
      acc += std::log2(1.0 + std::exp2(x));
  }
  return acc / static_cast<double>(diag_gain_sq.size());
}

// Time-sharing envelope sup_eta (1-eta)*curve(0) + eta*curve(F/eta).
// Geometric eta grid with one golden-section refinement pass.
inline double time_sharing_envelope(const std::function<double(double)>& curve,
                                    double F) {
  const double r0 = curve(0.0);
  if (F <= 0.0) return r0;
  auto value = [&](double eta) {
    return (1.0 - eta) * r0 + eta * curve(F / eta);
  };
  const int n = 64;
  double best_eta = 1.0, best = value(1.0);
  for (int i = 0; i < n; ++i) {
    const double eta = std::pow(10.0, -4.0 + 4.0 * i / (n - 1.0));
    const double v = value(eta);
    if (v > best) {
      best = v;
      best_eta = eta;
    }
  }
  double lo = best_eta / 2.6, hi = std::min(1.0, best_eta * 2.6);
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = value(c), fd = value(d);
  for (int it = 0; it < 60; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = value(d);
    }
  }
  best = std::max(best, std::max(fc, fd));
  return std::max(best, curve(F));
}

// --- infinite-network auxiliary functions --------------------------------

// Floor-correction factor of the residual-interference integral bound.
inline double V_of(double x, double alpha) {
  if (x < 1.0) throw std::domain_error("V_of: requires x >= 1");
  const double f = std::floor(x) / x;
  return f * (1.0 + (2.0 / alpha) * (std::pow(f, -alpha / 2.0) - 1.0));
}

inline double c0_of(double alpha) {
  return 1.0 + (2.0 / alpha) * (std::exp2(alpha / 2.0) - 1.0);
}

// Feedback rate implied by a common target error xi^2 in the infinite
// network (bits per channel use).
inline double f_tilde(double xi2, double b, double T, double alpha, double Q) {
  if (xi2 <= 0.0) throw std::domain_error("f_tilde: xi2 > 0");
  const double x = b * std::pow(xi2, -2.0 / alpha);
  return (x * (alpha * kLog2E + 2.0 * Q) - alpha * kLog2E) / (2.0 * T);
}

struct XiBudget {
  double xi2 = 0.0;
  bool clamped = false;  // budget below the single-antenna regime
};

// Closed-form inverse of f_tilde.
inline XiBudget xi_of_budget(double F, double b, double T, double alpha,
                             double Q) {
  if (F <= 0.0) throw std::domain_error("xi_of_budget: F > 0");
  double x = (2.0 * T * F + alpha * kLog2E) / (alpha * kLog2E + 2.0 * Q);
  XiBudget out;
  if (x < 1.0) {
    x = 1.0;
    out.clamped = true;
  }
  out.xi2 = std::pow(x / b, -alpha / 2.0);
  return out;
}

// Residual-interference kernel of the slope derivation (the exact-V variant
// with the floor replaced by x-1).
inline double g_tilde(double xi2, double b, double alpha) {
  const double x = b * std::pow(xi2, -2.0 / alpha);
  if (x <= 1.0)
    throw std::domain_error("g_tilde: requires b * xi^(-4/alpha) > 1");
  const double inner =
      1.0 + (2.0 / alpha) * (std::pow(x - 1.0, -alpha / 2.0) /
                                 (std::pow(b, -alpha / 2.0) * xi2) -
                             1.0);
  return xi2 * (x - 1.0) * inner;
}

// High-SNR rate surrogate built on g_tilde; expectation over effective-gain
// samples.
inline double r_tilde(double rho, double xi2, double b, double alpha,
                      std::span<const double> diag_gain_sq) {
  const double denom = 1.0 + rho * (alpha / (alpha - 2.0)) * g_tilde(xi2, b, alpha);
  double acc = 0.0;
  for (double d2 : diag_gain_sq) acc += std::log2(rho * d2 / denom);
  return acc / static_cast<double>(diag_gain_sq.size());
}

// Cap on the common quantization error when feedback rides a fraction r of
// the uplink at normalized power rho.
inline double xi_upper_bound(double rho, double r, double T, double alpha,
                             double Q, double b, double g_value) {
  const double num = 2.0 * T * r * std::log2(rho) + 2.0 * T * g_value +
                     alpha * kLog2E;
  return std::pow(b, alpha / 2.0) *
         std::pow(num / (alpha * kLog2E + 2.0 * Q), -alpha / 2.0);
}

// Upper bound on the total residual interference at common error xi^2.
inline double error_sum_bound(double xi2, double b, double alpha,
                              bool use_c0 = false) {
  const double x = b * std::pow(xi2, -2.0 / alpha);
  if (x < 1.0)
    throw std::domain_error("error_sum_bound: requires b * xi^(-4/alpha) >= 1");
  const double v = use_c0 ? c0_of(alpha) : V_of(x, alpha);
  return (b * alpha / (alpha - 2.0)) * std::pow(xi2, 1.0 - 2.0 / alpha) * v;
}

}  // namespace ratebal
