// Experiment runner: topology export, tradeoff / balance / SNR sweeps, and
// single-shot evaluators for the closed-form bounds.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ratebal/bounds.hpp"
#include "ratebal/experiment.hpp"
#include "ratebal/fading.hpp"
#include "ratebal/lattice_sim.hpp"
#include "ratebal/precoder.hpp"
#include "ratebal/topology.hpp"

using namespace ratebal;

namespace {

std::string out_dir_default() {
  const char* env = std::getenv("RATEBAL_OUT");
  return env ? env : ".";
}

void print_value(double v) { std::printf("%.17g\n", v); }

std::vector<double> draw_diag_samples(const std::vector<double>& gains,
                                      long trials, std::uint64_t seed) {
  std::vector<double> out(trials);
  for (long t = 0; t < trials; ++t) {
    Substream s(seed, StreamId::generic, t);
    double acc = 0.0;
    for (double g : gains) acc += std::norm(s.cgaussian(g));
    out[t] = acc;
  }
  return out;
}

int run_validate(std::uint64_t seed) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%-44s %s\n", name, ok ? "PASS" : "FAIL");
    if (!ok) ++failures;
  };

  {  // LQ reconstruction / unitarity on random sizes
    bool ok = true;
    for (int t = 0; t < 12 && ok; ++t) {
      Substream s(seed, StreamId::generic, 1000 + t);
      const int n = 1 + static_cast<int>(s.uniform() * 8);
      const int m = n + static_cast<int>(s.uniform() * 8);
      CMatrix h(n, m);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) h(i, j) = s.cgaussian(1.0);
      const PrecoderState st = lq_decompose(h);
      ok = ok && (st.lower * st.q - h).norm() <= 1e-10 * h.norm();
      ok = ok && (st.q * st.q.adjoint() - CMatrix::Identity(m, m)).norm() <= 1e-10;
      for (int i = 0; i < n && ok; ++i)
        ok = std::abs(st.diag(i).imag()) <= 1e-12 && st.diag(i).real() >= 0.0;
    }
    check("lq reconstruction/unitarity", ok);
  }
  {  // equal-error water filling
    Eigen::VectorXd g(4);
    g << 1.0, 0.4, 0.2, 0.05;
    const auto a = allocate_finite(g, 14.0 / 180.0, 180.0, 2.0);
    bool ok = !a.active.empty();
    for (size_t k = 0; k < a.active.size() && ok; ++k) {
      const double err =
          g(a.active[k]) * std::exp2(2.0 - a.bits_per_block[k]);
      ok = std::abs(err / a.common_error - 1.0) < 1e-12;
    }
    check("equal quantization error", ok);
  }
  {  // budget inversion round trip
    const double f = f_tilde(1e-3, 3.0, 180.0, 4.0, 2.0);
    const auto xb = xi_of_budget(f, 3.0, 180.0, 4.0, 2.0);
    check("feedback budget round trip",
          std::abs(xb.xi2 / 1e-3 - 1.0) < 1e-9 && !xb.clamped);
  }
  {  // V bounded by c0
    bool ok = true;
    for (double x = 1.0; x < 40.0; x += 0.37)
      ok = ok && V_of(x, 4.0) <= c0_of(4.0) + 1e-12;
    check("V(x) <= c0", ok);
  }
  {  // scalar bound sits 2 bits above the rate-distortion cost
    bool ok = true;
    for (double ratio : {4.0, 64.0, 4096.0})
      ok = ok && std::abs(scalar_feedback_bound(ratio, 1.0) -
                          rd_feedback_bits(ratio, 1.0) - 2.0) < 1e-12;
    check("scalar bound gap = 2 bits", ok);
  }
  {  // mod cell
    bool ok = mod_cell({0.3, -0.4}) == std::complex<double>(0.3, -0.4);
    const double h = kCellHalf;
    ok = ok && std::abs(mod_interval(h) + h) < 1e-12;
    ok = ok && std::abs(mod_interval(0.2 + kCellPeriod) - 0.2) < 1e-12;
    check("mod cell identities", ok);
  }
  {  // transmit power constraint on a small modulo chain
    Substream s(seed, StreamId::generic, 7);
    const int n = 4;
    CMatrix hh(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) hh(i, j) = s.cgaussian(1.0);
    const PrecoderState st = lq_decompose(hh);
    Eigen::VectorXcd a(n);
    for (int i = 0; i < n; ++i)
      a(i) = 100.0 * mmse_coefficient(st.diag(i), 100.0, 0.0);
    double pow_acc = 0.0;
    const long trials = 20000;
    for (long t = 0; t < trials; ++t) {
      Eigen::VectorXcd v(n), u(n);
      for (int i = 0; i < n; ++i) {
        v(i) = uniform_cell(s);
        u(i) = uniform_cell(s);
      }
      const Eigen::VectorXcd sym = encode_block(v, st, a, u);
      pow_acc += (st.q_top().adjoint() * sym).squaredNorm();
    }
    check("power constraint E||x||^2 = N (1%)",
          std::abs(pow_acc / trials / n - 1.0) < 0.01);
  }
  {  // envelope dominance
    auto curve = [](double f) { return std::log2(1.0 + f); };
    bool ok = true;
    for (double f : {0.0, 0.5, 2.0, 10.0})
      ok = ok && time_sharing_envelope(curve, f) >= curve(f) - 1e-9;
    check("time-sharing envelope dominates", ok);
  }
  {  // doubly-logarithmic trend of the closed-form rate surrogate
    const double alpha = 4.0, b = 3.0, T = 180.0, Q = 2.0, r = 0.03;
    std::vector<double> ones{1.0};
    double prev_ratio = -1e9;
    double last_slope = 0.0, prev_rt = 0.0, prev_ll = 0.0;
    bool ok = true;
    for (double e : {6.0, 12.0, 24.0}) {
      const double rho = std::pow(10.0, e);
      const double xi2 = xi_upper_bound(rho, r, T, alpha, Q, b, 0.0);
      const double rt = r_tilde(rho, xi2, b, alpha, ones);
      const double ll = std::log2(std::log2(rho));
      ok = ok && rt / ll >= prev_ratio - 1e-12;
      if (prev_ll > 0.0) last_slope = (rt - prev_rt) / (ll - prev_ll);
      prev_ratio = rt / ll;
      prev_rt = rt;
      prev_ll = ll;
    }
    ok = ok && last_slope >= th2_exponent(alpha) - 0.1;
    check("doubly-log trend (Th.2 surrogate)", ok);
  }

  std::printf("%s\n", failures ? "VALIDATE: FAIL" : "VALIDATE: OK");
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uplink-downlink rate balancing experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir = out_dir_default();
  std::uint64_t seed = 0;
  long trials = 0;
  int workers = 0;
  app.add_option("--config", config_path, "experiment config (json)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "rng seed override");
  app.add_option("--trials", trials, "trial count override");
  app.add_option("--workers", workers, "worker thread override");

  auto load_cfg = [&]() {
    ExperimentConfig c = load_config_file(config_path);
    if (seed) c.seed = seed;
    if (trials) {
      if (trials < 100) throw CLI::ValidationError("--trials must be >= 100");
      c.trials = trials;
    }
    if (workers) c.workers = workers;
    return c;
  };

  // --- topology ---
  auto* topo_cmd = app.add_subcommand("topology", "build and export the grid");
  int topo_rings = 4;
  bool topo_trim = true;
  int topo_aps = 1;
  double topo_alpha = 4.0;
  topo_cmd->add_option("--rings", topo_rings);
  topo_cmd->add_flag("--trim,!--no-trim", topo_trim, "remove corner sites");
  topo_cmd->add_option("--antennas-per-site", topo_aps);
  topo_cmd->add_option("--alpha", topo_alpha);
  topo_cmd->callback([&]() {
    NetworkTopology t = build_hex_grid(topo_rings, topo_aps, topo_trim);
    t.alpha = topo_alpha;
    t.mobiles.push_back(corner_mobile(t));
    gain_map(t);
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream os(out_dir + "/topology.txt");
      dump_topology(t, os);
    }
    {
      std::ofstream os(out_dir + "/gains.csv");
      export_gain_csv(t.gain, os);
    }
    std::printf("sites=%zu antennas=%d mobiles=%zu -> %s/topology.txt\n",
                t.sites.size(), t.num_antennas(), t.mobiles.size(),
                out_dir.c_str());
  });

  // --- sweeps ---
  auto add_sweep = [&](const char* name, const char* desc, auto runner,
                       const char* file) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->callback([&, runner, file]() {
      const ExperimentConfig c = load_cfg();
      const Scenario s = make_scenario(c);
      std::filesystem::create_directories(out_dir);
      const std::string base = out_dir + "/" + file;
      ResumeLog resume(base + ".partial");
      const auto rows = runner(c, s, &resume);
      write_csv(base, rows);
      resume.discard();
      std::printf("%zu rows -> %s\n", rows.size(), base.c_str());
    });
  };
  {
    auto* cmd = app.add_subcommand(
        "tradeoff", "downlink SE vs feedback SE per cooperation size");
    cmd->callback([&]() {
      const ExperimentConfig c = load_cfg();
      const Scenario s = make_scenario(c);
      std::filesystem::create_directories(out_dir);
      const std::string base = out_dir + "/tradeoff.csv";
      ResumeLog resume(base + ".partial");
      const auto rows = run_tradeoff_sweep(c, s, &resume);
      write_csv(base, rows);
      resume.discard();
      // where each larger cooperation size overtakes the previous one
      std::ofstream xs(out_dir + "/tradeoff_crossings.csv");
      xs << "# " << kCsvVersion << "\n";
      xs << "from_L,to_L,feedback_se_bps_hz\n";
      for (size_t k = 1; k + 1 < c.coop_sizes.size(); ++k) {
        const auto a =
            curve_of(rows, "dp-L" + std::to_string(c.coop_sizes[k]), 1 << 20);
        const auto b = curve_of(
            rows, "dp-L" + std::to_string(c.coop_sizes[k + 1]), 1 << 20);
        for (double x : crossing_points(a, b))
          xs << c.coop_sizes[k] << "," << c.coop_sizes[k + 1] << ","
             << format_g17(x) << "\n";
      }
      std::printf("%zu rows -> %s\n", rows.size(), base.c_str());
    });
  }
  add_sweep("balance", "optimal-activity balance curve with slope tangents",
            [](const ExperimentConfig& c, const Scenario& s, ResumeLog* r) {
              return run_balance_curve(c, s, r);
            },
            "balance.csv");
  add_sweep("snr-sweep", "fixed and proportional feedback over SNR",
            [](const ExperimentConfig& c, const Scenario& s, ResumeLog* r) {
              return run_snr_sweep(c, s, r);
            },
            "snr_sweep.csv");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "single-shot evaluators");
  eval_cmd->require_subcommand(1);
  {
    auto* c = eval_cmd->add_subcommand("th1", "exchange ratio T/L");
    static double T = 180, L = 6, r = -1;
    c->add_option("--T", T);
    c->add_option("--L", L);
    c->add_option("--r", r, "uplink fraction: print multiplexing gain instead");
    c->callback([&]() {
      print_value(r >= 0 ? th1_multiplexing(r, T, L) : th1_exchange_ratio(T, L));
    });
  }
  {
    auto* c = eval_cmd->add_subcommand("th2", "rate exponent alpha/2 - 1");
    static double alpha = 4.0;
    c->add_option("--alpha", alpha);
    c->callback([&]() { print_value(th2_exponent(alpha)); });
  }
  {
    auto* c = eval_cmd->add_subcommand("prop1-slope",
                                       "downlink bits per feedback bit");
    static double alpha = 4.0, q = 2.0, T = 180.0, L = 6.0;
    c->add_option("--alpha", alpha);
    c->add_option("--q", q);
    c->add_option("--T", T);
    c->add_option("--L", L);
    c->callback([&]() { print_value(prop1_slope(alpha, q, T, L)); });
  }
  {
    auto* c = eval_cmd->add_subcommand("coherence", "coherence block size");
    static double doppler = 5.5, delay = 630e-9, factor = 40.0;
    c->add_option("--doppler", doppler, "Hz");
    c->add_option("--delay", delay, "seconds");
    c->add_option("--factor", factor);
    c->callback([&]() {
      print_value(coherence_block(doppler, delay, factor).block_symbols);
    });
  }
  {
    auto* c = eval_cmd->add_subcommand("breve", "interference-limited rate");
    static double F = 0.1, Q = 2.0, T = 180.0;
    static std::vector<double> gains{1.0, 1.0, 1.0};
    static long n = 20000;
    static std::uint64_t s = 1;
    c->add_option("--F", F, "feedback rate, bits/channel use");
    c->add_option("--Q", Q);
    c->add_option("--T", T);
    c->add_option("--gains", gains, "per-antenna sigma^2")->expected(-1);
    c->add_option("--trials", n);
    c->add_option("--eval-seed", s);
    c->callback([&]() {
      std::vector<double> lg;
      for (double g : gains) lg.push_back(std::log2(g));
      const auto diag = draw_diag_samples(gains, n, s);
      print_value(breve_rate(F, lg, gains.size(), Q, T, diag));
    });
  }
  {
    auto* c = eval_cmd->add_subcommand("envelope", "time-sharing envelope");
    static double F = 0.1, Q = 2.0, T = 180.0;
    static std::vector<double> gains{1.0, 1.0, 1.0};
    static long n = 20000;
    static std::uint64_t s = 1;
    c->add_option("--F", F);
    c->add_option("--Q", Q);
    c->add_option("--T", T);
    c->add_option("--gains", gains)->expected(-1);
    c->add_option("--trials", n);
    c->add_option("--eval-seed", s);
    c->callback([&]() {
      std::vector<double> lg;
      for (double g : gains) lg.push_back(std::log2(g));
      const auto diag = draw_diag_samples(gains, n, s);
      auto curve = [&](double f) {
        return breve_rate(f, lg, gains.size(), Q, T, diag);
      };
      print_value(time_sharing_envelope(curve, F));
    });
  }
  {
    auto* c = eval_cmd->add_subcommand("xi-bound", "quantization error cap");
    static double rho = 1e3, r = 0.03, T = 180.0, alpha = 4.0, q = 2.0, b = 3.0,
                  g = 0.0;
    c->add_option("--rho", rho);
    c->add_option("--r", r);
    c->add_option("--T", T);
    c->add_option("--alpha", alpha);
    c->add_option("--q", q);
    c->add_option("--b", b);
    c->add_option("--g", g);
    c->callback(
        [&]() { print_value(xi_upper_bound(rho, r, T, alpha, q, b, g)); });
  }
  {
    auto* c = eval_cmd->add_subcommand("residual-coeff",
                                       "unsimulated interference constant");
    static int rings = 4, horizon = 220;
    static double alpha = 4.0;
    static bool trim = true;
    c->add_option("--rings", rings);
    c->add_option("--horizon", horizon);
    c->add_option("--alpha", alpha);
    c->add_flag("--trim,!--no-trim", trim);
    c->callback([&]() {
      NetworkTopology t = build_hex_grid(rings, 1, trim);
      t.alpha = alpha;
      t.mobiles.push_back(corner_mobile(t));
      print_value(residual_interference_coeff(t, horizon));
    });
  }

  // --- validate ---
  auto* val_cmd = app.add_subcommand("validate", "run the invariant suite");
  val_cmd->callback([&]() {
    if (run_validate(seed ? seed : 1) != 0) throw CLI::RuntimeError(1);
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
