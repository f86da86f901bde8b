#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "ratebal/precoder.hpp"

using namespace ratebal;

namespace {
FeedbackAllocation near_perfect_csi(int antennas) {
  FeedbackAllocation a;
  for (int j = 0; j < antennas; ++j) a.active.push_back(j);
  a.common_error = 1e-12;
  return a;
}
}  // namespace

TEST_CASE("lq decomposition basics") {
  SECTION("single row") {
    CMatrix h(1, 2);
    h << std::complex<double>(3, 0), std::complex<double>(4, 0);
    const PrecoderState st = lq_decompose(h);
    CHECK(st.diag(0).real() == Catch::Approx(5.0));
    CHECK(std::abs(st.diag(0).imag()) < 1e-14);
    CHECK(st.q_top()(0, 0).real() == Catch::Approx(0.6));
    CHECK(st.q_top()(0, 1).real() == Catch::Approx(0.8));
  }
  SECTION("identity stays identity") {
    const CMatrix h = CMatrix::Identity(3, 3);
    const PrecoderState st = lq_decompose(h);
    CHECK((st.lower - CMatrix::Identity(3, 3)).norm() < 1e-12);
    CHECK((st.q - CMatrix::Identity(3, 3)).norm() < 1e-12);
  }
  SECTION("rank deficiency flagged, not fatal") {
    CMatrix h(2, 3);
    h.setZero();
    h(0, 0) = {1.0, 0.0};
    h(1, 0) = {2.0, 0.0};  // dependent rows
    const PrecoderState st = lq_decompose(h);
    CHECK(st.rank_deficient);
    CHECK(std::abs(st.diag(1)) < 1e-10);
  }
  SECTION("wide-matrix requirement") {
    CHECK_THROWS(lq_decompose(CMatrix::Zero(3, 2)));
  }
}

TEST_CASE("lq reconstruction and unitarity over random sizes") {
  Substream rng(31, StreamId::generic, 0);
  for (int t = 0; t < 40; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform() * 16);
    const int m = n + static_cast<int>(rng.uniform() * (17 - n));
    CMatrix h(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) h(i, j) = rng.cgaussian(1.0);
    const PrecoderState st = lq_decompose(h);
    REQUIRE((st.lower * st.q - h).norm() <= 1e-10 * std::max(1.0, h.norm()));
    REQUIRE((st.q * st.q.adjoint() - CMatrix::Identity(m, m)).norm() <= 1e-10);
    for (int i = 0; i < n; ++i) {
      CHECK(st.diag(i).real() >= 0.0);
      CHECK(std::abs(st.diag(i).imag()) <= 1e-12 * std::max(1.0, h.norm()));
      for (int j = i + 1; j < m; ++j) CHECK(std::abs(st.lower(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("dpzf rate bound") {
  SECTION("deterministic unit gain gives one bit") {
    // rho=1, |l|^2=1, S=0: log2(2) = 1.  Use a tiny-variance surrogate by
    // checking the formula path directly with the quadrature oracle at N=1.
    Eigen::VectorXd g(1);
    g << 1.0;
    const auto a = near_perfect_csi(1);
    const RateEstimate r = dpzf_rate(g, a, 1.0, 40000, 5);
    const double want = oracle::expected_log_rate(1.0);
    CHECK(r.mean == Catch::Approx(want).margin(3.5 * r.stderr_));
  }
  SECTION("perfect-CSI single user matches quadrature at rho=20") {
    Eigen::VectorXd g(1);
    g << 1.0;
    const auto a = near_perfect_csi(1);
    const RateEstimate r = dpzf_rate(g, a, 20.0, 60000, 6);
    CHECK(r.mean == Catch::Approx(oracle::expected_log_rate(20.0))
                        .margin(3.5 * r.stderr_));
  }
  SECTION("rate vanishes as the error sum blows up") {
    Eigen::VectorXd g(2);
    g << 1.0, 1e6;  // inactive antenna keeps sigma^2 = 1e6 as interference
    FeedbackAllocation a;
    a.active = {0};
    a.common_error = 1e-6;
    const RateEstimate r = dpzf_rate(g, a, 10.0, 2000, 7);
    CHECK(r.mean < 1e-3);
  }
  SECTION("monotone in rho; non-increasing in S") {
    Eigen::VectorXd g(3);
    g << 1.0, 0.5, 0.25;
    const auto a = near_perfect_csi(3);
    const RateEstimate lo = dpzf_rate(g, a, 10.0, 4000, 8);
    const RateEstimate hi = dpzf_rate(g, a, 100.0, 4000, 8);
    CHECK(hi.mean > lo.mean);
    const RateEstimate noisy = dpzf_rate(g, a, 10.0, 4000, 8, 0.5);
    CHECK(noisy.mean < lo.mean);
  }
  SECTION("interference-limited saturation") {
    Eigen::VectorXd g(2);
    g << 1.0, 0.3;
    FeedbackAllocation a;
    a.active = {0, 1};
    a.common_error = 0.05;  // rho * S >> 1 at both operating points
    const RateEstimate r4 = dpzf_rate(g, a, 1e4, 4000, 9);
    const RateEstimate r6 = dpzf_rate(g, a, 1e6, 4000, 9);
    CHECK(std::abs(r6.mean - r4.mean) < 0.02);
  }
  SECTION("trial bookkeeping") {
    Eigen::VectorXd g(1);
    g << 1.0;
    const RateEstimate r = dpzf_rate(g, near_perfect_csi(1), 1.0, 100, 1);
    CHECK(r.trials == 100);
    CHECK(r.stderr_ > 0.0);
  }
}

TEST_CASE("zf baseline") {
  Eigen::VectorXd g1(1);
  g1 << 1.0;
  SECTION("single user coincides with dpzf") {
    const auto a = near_perfect_csi(1);
    const RateEstimate zf = zf_rate(g1, a, 10.0, 3000, 11);
    const RateEstimate dp = dpzf_rate(g1, a, 10.0, 3000, 11);
    CHECK(zf.mean == Catch::Approx(dp.mean).epsilon(1e-12));
  }
  SECTION("orthogonal rows coincide with dpzf") {
    // single active antenna per user makes the cyclic hhat a scaled
    // permutation, whose rows are orthogonal
    Eigen::VectorXd g(4);
    g << 1.0, 0.0, 0.0, 0.0;
    FeedbackAllocation a;
    a.active = {0};
    a.common_error = 1e-10;
    const RateEstimate zf = zf_rate(g, a, 10.0, 2000, 12);
    const RateEstimate dp = dpzf_rate(g, a, 10.0, 2000, 12);
    CHECK(zf.mean == Catch::Approx(dp.mean).margin(1e-9));
  }
  SECTION("ill-conditioned multiuser instance falls below dpzf") {
    // six users sharing six comparable antennas: inversion loss is real
    Eigen::VectorXd g(6);
    g << 1.0, 0.9, 0.8, 0.7, 0.6, 0.5;
    const auto a = near_perfect_csi(6);
    const RateEstimate zf = zf_rate(g, a, 100.0, 4000, 13);
    const RateEstimate dp = dpzf_rate(g, a, 100.0, 4000, 13);
    CHECK(zf.mean < dp.mean - 2.0 * (zf.stderr_ + dp.stderr_));
  }
  SECTION("zf never exceeds dpzf within tolerance on paired seeds") {
    Eigen::VectorXd g(3);
    g << 1.0, 0.6, 0.2;
    const auto a = near_perfect_csi(3);
    for (std::uint64_t seed : {21, 22, 23}) {
      const RateEstimate zf = zf_rate(g, a, 50.0, 3000, seed);
      const RateEstimate dp = dpzf_rate(g, a, 50.0, 3000, seed);
      CHECK(zf.mean <= dp.mean + 2.0 * (zf.stderr_ + dp.stderr_));
    }
  }
  SECTION("the dp-zf advantage grows with cooperation size") {
    auto gap_at = [](int size, std::uint64_t seed) {
      Eigen::VectorXd g(size);
      for (int j = 0; j < size; ++j) g(j) = 1.0 / (1.0 + j);
      FeedbackAllocation a;
      for (int j = 0; j < size; ++j) a.active.push_back(j);
      a.common_error = 1e-9;
      const RateEstimate zf = zf_rate(g, a, 100.0, 3000, seed);
      const RateEstimate dp = dpzf_rate(g, a, 100.0, 3000, seed);
      return dp.mean - zf.mean;
    };
    CHECK(gap_at(12, 31) >= gap_at(3, 31));
  }
}

TEST_CASE("uplink rate") {
  SECTION("deterministic single link") {
    // |h| = 1 fixed: log2(1 + rho).  Realized via a gain so small the
    // variance is negligible is not possible here, so check the MC against
    // the quadrature oracle instead.
    Eigen::MatrixXd g(1, 1);
    g << 1.0;
    const RateEstimate r = uplink_rate(g, 1.0, 60000, 41);
    CHECK(r.mean ==
          Catch::Approx(oracle::expected_log_rate(1.0)).margin(3.5 * r.stderr_));
  }
  SECTION("zero power gives zero rate") {
    Eigen::MatrixXd g(2, 2);
    g.setOnes();
    CHECK(uplink_rate(g, 0.0, 50, 1).mean == 0.0);
  }
  SECTION("2x2 iid matches the independent implementation") {
    Eigen::MatrixXd g(2, 2);
    g.setOnes();
    const RateEstimate r = uplink_rate(g, 10.0, 60000, 17);
    const double want = oracle::naive_uplink_rate(2, 2, 10.0, 60000, 999);
    CHECK(r.mean == Catch::Approx(want).margin(4.0 * r.stderr_ + 0.01));
  }
}

TEST_CASE("uplink offset g(rho)") {
  Eigen::MatrixXd g(2, 2);
  g.setOnes();
  SECTION("converges as rho grows") {
    const double a = uplink_offset_g(g, 1e6, 1.0, 0.03, 20000, 3);
    const double b = uplink_offset_g(g, 1e8, 1.0, 0.03, 20000, 3);
    CHECK(std::abs(a - b) < 0.01);
  }
  SECTION("kappa shifts the limit by r log2 kappa per singular dimension") {
    // N=M=1: g(rho) -> r E[log2(kappa |h|^2)]
    Eigen::MatrixXd g1(1, 1);
    g1 << 1.0;
    const double k1 = uplink_offset_g(g1, 1e8, 1.0, 0.5, 40000, 5);
    const double k01 = uplink_offset_g(g1, 1e8, 0.1, 0.5, 40000, 5);
    CHECK(k01 - k1 == Catch::Approx(0.5 * std::log2(0.1)).margin(0.01));
  }
}
