#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "ratebal/allocator.hpp"
#include "ratebal/rng.hpp"

using namespace ratebal;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("finite allocation worked examples") {
  const double T = 1.0;  // budgets below are directly bits per block

  SECTION("two comparable antennas share the budget") {
    const auto a = allocate_finite(vec({1.0, 0.25}), 4.0, T, 0.0);
    REQUIRE(a.active.size() == 2);
    CHECK(a.water_level == Catch::Approx(-3.0));
    CHECK(a.bits_per_block[0] == Catch::Approx(3.0));
    CHECK(a.bits_per_block[1] == Catch::Approx(1.0));
    CHECK(a.common_error == Catch::Approx(0.125));
  }

  SECTION("a hopeless antenna is dropped") {
    const auto a = allocate_finite(vec({1.0, std::exp2(-10.0)}), 4.0, T, 0.0);
    REQUIRE(a.active.size() == 1);
    CHECK(a.active[0] == 0);
    CHECK(a.bits_per_block[0] == Catch::Approx(4.0));
    CHECK(a.common_error == Catch::Approx(std::exp2(-4.0)));
    CHECK(error_sum(a, vec({1.0, std::exp2(-10.0)})) ==
          Catch::Approx(std::exp2(-4.0) + std::exp2(-10.0)));
  }

  SECTION("zero budget allocates nothing") {
    const auto a = allocate_finite(vec({1.0, 0.5}), 0.0, T, 0.0);
    CHECK(a.active.empty());
    CHECK(error_sum(a, vec({1.0, 0.5})) == Catch::Approx(1.5));
  }

  SECTION("budget at or below the overhead allocates nothing") {
    const auto a = allocate_finite(vec({1.0, 0.5}), 2.0, T, 2.0);
    CHECK(a.active.empty());
  }
}

TEST_CASE("finite allocation properties") {
  Substream rng(101, StreamId::generic, 0);

  SECTION("equal active errors and exact budget use") {
    for (int t = 0; t < 50; ++t) {
      const int m = 2 + static_cast<int>(rng.uniform() * 5);
      Eigen::VectorXd g(m);
      for (int j = 0; j < m; ++j) g(j) = std::exp2(rng.uniform(-8.0, 2.0));
      const double budget = rng.uniform(1.0, 24.0);
      const double q = rng.uniform() < 0.5 ? 0.0 : 2.0;
      const auto a = allocate_finite(g, budget, 1.0, q);
      if (a.active.empty()) continue;
      double bits = 0.0;
      for (size_t k = 0; k < a.active.size(); ++k) {
        bits += a.bits_per_block[k];
        const double err =
            g(a.active[k]) * std::exp2(q - a.bits_per_block[k]);
        CHECK(std::abs(err / a.common_error - 1.0) < 1e-12);
        CHECK(a.bits_per_block[k] > q);  // activity rule
      }
      CHECK(bits == Catch::Approx(budget).epsilon(1e-12));
      // water level reconstruction
      double lg = 0.0;
      for (int j : a.active) lg += std::log2(g(j));
      CHECK((lg - budget) / a.active.size() ==
            Catch::Approx(a.water_level).margin(1e-12));
    }
  }

  SECTION("monotonicity in budget") {
    const Eigen::VectorXd g = vec({1.0, 0.3, 0.02, 0.004});
    double prev_err = 1e300;
    size_t prev_active = 0;
    for (double budget : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
      const auto a = allocate_finite(g, budget, 1.0, 2.0);
      const double err = error_sum(a, g);
      CHECK(err <= prev_err + 1e-12);
      CHECK(a.active.size() >= prev_active);
      prev_err = err;
      prev_active = a.active.size();
    }
  }
}

TEST_CASE("finite allocator matches the grid-search oracle") {
  Substream rng(7, StreamId::generic, 1);
  const double grid_step = 0.01;
  for (int inst = 0; inst < 200; ++inst) {
    const int m = 1 + static_cast<int>(rng.uniform() * 4);
    std::vector<double> s2(m);
    Eigen::VectorXd g(m);
    for (int j = 0; j < m; ++j) {
      s2[j] = std::exp2(rng.uniform(-6.0, 1.5));
      g(j) = s2[j];
    }
    const double budget = rng.uniform(0.2, 12.0);
    const double q = rng.uniform() < 0.5 ? 0.0 : 2.0;

    const auto a = allocate_finite(g, budget, 1.0, q);
    const double err = error_sum(a, g);
    const double oracle_err = oracle::grid_alloc_error(s2, budget, q, grid_step);
    // continuous optimum should not lose to the grid beyond grid slack
    const double slack = std::log(2.0) * grid_step * oracle_err + 1e-9;
    CHECK(err <= oracle_err + slack);
  }
}

TEST_CASE("infinite-network activity rule") {
  SECTION("threshold halves the strongest gain") {
    const auto a = allocate_infinite(vec({1.0, 0.25, 0.06}), 0.5, 1.0, 2.0);
    REQUIRE(a.active.size() == 1);
    CHECK(a.active[0] == 0);
    CHECK(a.total_rate == Catch::Approx(2.0 + 1.0));
  }

  SECTION("pure path loss: active set is a distance ball") {
    // gains d^-4 for d in {0.5, 0.9, 1.1, 2}; xi^2 = 1 activates d < 1
    const auto a = allocate_infinite(
        vec({std::pow(0.5, -4.0), std::pow(0.9, -4.0), std::pow(1.1, -4.0),
             std::pow(2.0, -4.0)}),
        1.0, 1.0, 2.0);
    REQUIRE(a.active.size() == 2);
    CHECK(a.active[0] == 0);
    CHECK(a.active[1] == 1);
  }

  SECTION("threshold above all gains gives the empty set") {
    const auto a = allocate_infinite(vec({0.5, 0.2}), 0.9, 1.0, 2.0);
    CHECK(a.active.empty());
    CHECK(a.total_rate == 0.0);
  }

  SECTION("realized rate matches the per-antenna bound sum") {
    Eigen::VectorXd g(6);
    g << 1.0, 1.0, 1.0, 0.0625, 0.0625, 0.0625;
    const double xi2 = 0.01, T = 180.0;
    const auto a = allocate_infinite(g, xi2, T, 2.0);
    REQUIRE(a.active.size() == 6);
    double want = 0.0;
    for (int j = 0; j < 6; ++j) want += 2.0 + std::log2(g(j) / xi2);
    CHECK(a.total_rate == Catch::Approx(want / T));
  }
}

TEST_CASE("error sum expressions") {
  const Eigen::VectorXd g = vec({1.0, 0.5, 0.25, 0.125});
  SECTION("empty allocation keeps all gains") {
    FeedbackAllocation none;
    CHECK(error_sum(none, g) == Catch::Approx(g.sum()));
  }
  SECTION("full activation at common error") {
    const auto a = allocate_infinite(g, 0.01, 1.0, 0.0);
    CHECK(error_sum(a, g) == Catch::Approx(4 * 0.01));
  }
  SECTION("sorted-prefix form L*xi^2 + tail") {
    const auto a = allocate_infinite(g, 0.2, 1.0, 0.0);
    REQUIRE(a.active.size() == 3);
    CHECK(error_sum(a, g) == Catch::Approx(3 * 0.2 + 0.125));
  }
}

TEST_CASE("predicted antenna count from the feedback budget") {
  const double alpha = 4.0, T = 180.0, Q = 2.0, b = 3.0;

  SECTION("unit bound gives one antenna") {
    // pick F so that b * xi^(-4/alpha) = 1
    const double xi2 = std::pow(1.0 / b, -alpha / 2.0);
    const double f = f_tilde(xi2, b, T, alpha, Q);
    CHECK(f == Catch::Approx(Q / T));
    CHECK(antennas_for_budget(Eigen::VectorXd(), f, T, Q, alpha, b) == 1);
  }

  SECTION("doubling b doubles the pre-floor bound at fixed error") {
    const double xi2 = 1e-3;
    const double x1 = b * std::pow(xi2, -2.0 / alpha);
    const double x2 = 2.0 * b * std::pow(xi2, -2.0 / alpha);
    CHECK(x2 == Catch::Approx(2.0 * x1));
  }

  SECTION("round trip through the budget inversion") {
    const double xi2 = 1e-3;
    const double f = f_tilde(xi2, b, T, alpha, Q);
    const auto back = xi_of_budget(f, b, T, alpha, Q);
    CHECK(back.xi2 == Catch::Approx(xi2).epsilon(1e-9));
    const int n = antennas_for_budget(Eigen::VectorXd(), f, T, Q, alpha, b);
    CHECK(n == static_cast<int>(std::floor(b * std::pow(xi2, -0.5) + 1e-9)));
  }
}

TEST_CASE("allocation dump format") {
  const auto a = allocate_finite(vec({1.0, 0.25}), 4.0, 1.0, 0.0);
  std::ostringstream os;
  dump_allocation(a, os);
  const std::string s = os.str();
  CHECK(s.find("mobile 0") != std::string::npos);
  CHECK(s.find("active 2") != std::string::npos);
}
