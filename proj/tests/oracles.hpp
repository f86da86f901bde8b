// Independent reference computations used by the test suites.  Everything
// here deliberately avoids the library's own code paths: plain loops, naive
// enumeration, textbook quadrature.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

// Hexagonal lattice points by direct axial enumeration (no ring walk).
inline std::vector<std::pair<double, double>> hex_points(int radius) {
  std::vector<std::pair<double, double>> pts;
  const double hy = std::sqrt(3.0) / 2.0;
  for (int m = -radius; m <= radius; ++m)
    for (int n = -radius; n <= radius; ++n) {
      if (std::max({std::abs(m), std::abs(n), std::abs(m + n)}) > radius)
        continue;
      pts.push_back({m + 0.5 * n, hy * n});
    }
  return pts;
}

// Brute-force interference sum: all lattice sites within `horizon` except
// those closer than 1e-9 to a kept site, normalized by the best kept gain.
inline double residual_sum(const std::vector<std::pair<double, double>>& kept,
                           double mx, double my, double alpha, int horizon) {
  double gmax = 0.0;
  for (auto [x, y] : kept)
    gmax = std::max(gmax, std::pow(std::hypot(x - mx, y - my), -alpha));
  double acc = 0.0;
  for (auto [x, y] : hex_points(horizon)) {
    bool inside = false;
    for (auto [kx, ky] : kept)
      if (std::hypot(x - kx, y - ky) < 1e-9) {
        inside = true;
        break;
      }
    if (inside) continue;
    acc += std::pow(std::hypot(x - mx, y - my), -alpha) / gmax;
  }
  return acc;
}

// Exhaustive grid search for the bit-allocation problem: minimize
// sum_j sigma_j^2 * 2^(Q - b_j) (b_j = 0 meaning no feedback, cost sigma_j^2)
// subject to sum b_j <= budget, b_j on a fixed grid.  Dynamic programming
// over antennas x grid steps; exact for grid-restricted allocations.
inline double grid_alloc_error(const std::vector<double>& sigma2,
                               double budget_bits, double q,
                               double step = 0.01) {
  const int steps = static_cast<int>(std::floor(budget_bits / step + 1e-9));
  std::vector<double> best(steps + 1, 0.0);  // no antennas yet
  for (double s2 : sigma2) {
    std::vector<double> cost(steps + 1);
    for (int b = 0; b <= steps; ++b)
      cost[b] = b == 0 ? s2 : s2 * std::exp2(q - b * step);
    std::vector<double> next(steps + 1, 1e300);
    for (int used = 0; used <= steps; ++used)
      for (int b = 0; used + b <= steps; ++b) {
        const double v = best[used] + cost[b];
        if (v < next[used + b]) next[used + b] = v;
      }
    best = std::move(next);
  }
  double out = 1e300;
  for (double v : best) out = std::min(out, v);
  return out;
}

// Adaptive Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, double tol = 1e-10, int depth = 24) {
  std::function<double(double, double, double, double, double, double, int)>
      rec = [&](double x0, double x2, double f0, double f1, double f2,
                double whole, int d) -> double {
    const double x1l = (x0 + x2) / 2;
    const double xm1 = (x0 + x1l) / 2, xm2 = (x1l + x2) / 2;
    const double fl = f(xm1), fr = f(xm2);
    const double left = (x1l - x0) / 6 * (f0 + 4 * fl + f1);
    const double right = (x2 - x1l) / 6 * (f1 + 4 * fr + f2);
    if (d <= 0 || std::abs(left + right - whole) < 15 * tol)
      return left + right + (left + right - whole) / 15;
    return rec(x0, x1l, f0, fl, f1, left, d - 1) +
           rec(x1l, x2, f1, fr, f2, right, d - 1);
  };
  const double fm = f((a + b) / 2);
  const double whole = (b - a) / 6 * (f(a) + 4 * fm + f(b));
  return rec(a, b, f(a), fm, f(b), whole, depth);
}

// E[log2(1 + rho X)] for X ~ Exp(1), by quadrature.
inline double expected_log_rate(double rho) {
  return simpson(
      [rho](double x) { return std::exp(-x) * std::log2(1.0 + rho * x); }, 0.0,
      60.0, 1e-12);
}

// Differential entropy (bits) of a wrapped 1D Gaussian on [-half, half).
inline double wrapped_gauss_entropy(double sigma, double half,
                                    int terms = 12) {
  const double period = 2.0 * half;
  auto dens = [&](double t) {
    double f = 0.0;
    for (int k = -terms; k <= terms; ++k) {
      const double u = (t + k * period) / sigma;
      f += std::exp(-0.5 * u * u);
    }
    return f / (sigma * std::sqrt(2.0 * M_PI));
  };
  return simpson(
      [&](double t) {
        const double f = dens(t);
        return f > 0.0 ? -f * std::log2(f) : 0.0;
      },
      -half, half, 1e-11);
}

// Naive uplink ergodic rate with an unrelated RNG: (1/N) E log2 det(I + rho H^H H),
// Gaussian elimination on the Gram matrix.
inline double naive_uplink_rate(int m, int n, double rho, long trials,
                                unsigned rng_seed) {
  std::mt19937_64 gen(rng_seed);
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  double acc = 0.0;
  for (long t = 0; t < trials; ++t) {
    std::vector<std::complex<double>> h(m * n);
    for (auto& z : h) z = {nd(gen), nd(gen)};
    // gram = I + rho H^H H
    std::vector<std::complex<double>> g(n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::complex<double> s = 0.0;
        for (int k = 0; k < m; ++k) s += std::conj(h[k * n + i]) * h[k * n + j];
        g[i * n + j] = rho * s + (i == j ? 1.0 : 0.0);
      }
    // log det by LU without pivoting (Gram matrices are PD)
    double logdet = 0.0;
    for (int c = 0; c < n; ++c) {
      logdet += std::log2(std::abs(g[c * n + c]));
      for (int r = c + 1; r < n; ++r) {
        const std::complex<double> f = g[r * n + c] / g[c * n + c];
        for (int k = c; k < n; ++k) g[r * n + k] -= f * g[c * n + k];
      }
    }
    acc += logdet / n;
  }
  return acc / trials;
}

}  // namespace oracle
