#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ratebal/bounds.hpp"
#include "ratebal/lattice_sim.hpp"
#include "ratebal/topology.hpp"

namespace ratebal {

using json = nlohmann::json;

inline constexpr const char* kCsvVersion = "ratebal-csv v1";

// One sweep point.  rho_db rides along so the SNR sweep shares the schema.
struct CurvePoint {
  std::string scheme;
  int fed = 0;
  double feedback_se = 0.0;
  double downlink_se = 0.0;
  double stderr_ = 0.0;
  long trials = 0;
  std::uint64_t seed = 0;
  double rho_db = 0.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int workers = 0;  // 0: hardware default
  long trials = 400;
  int rings = 4;
  bool trim = true;
  int antennas_per_site = 1;
  double alpha = 4.0;
  double rho_db = 30.0;
  long T = 180;
  double residual = 0.027;  // negative: recompute from the lattice
  QuantizerKind quantizer = QuantizerKind::dithered_scalar;
  MiMode mi_mode = MiMode::analytic;
  int hist_bins = 32;
  long symbols_per_block = 12000;

  std::vector<int> coop_sizes{1, 3, 6, 12, 21};
  std::vector<double> xi2_log10_grid;  // descending xi^2 sweep
  std::vector<int> tangent_sizes{6, 12, 21};

  std::vector<double> snr_rho_db_grid{20, 25, 30, 35, 40, 42.5, 45, 47.5, 50};
  std::vector<double> snr_fixed_bits{24, 48};
  bool snr_proportional = true;
  double r = 0.03;
  double kappa_ul = 0.1;
  int snr_connectivity = 6;
  long uplink_trials = 160;

  ExperimentConfig() {
    for (double e = 0.5; e >= -3.51; e -= 1.0 / 3.0)
      xi2_log10_grid.push_back(e);
  }
};

inline ExperimentConfig load_config(const json& j) {
  ExperimentConfig c;
  auto get = [&](const json& o, const char* k, auto def) {
    using T = decltype(def);
    return o.contains(k) ? o.at(k).get<T>() : def;
  };
  c.seed = get(j, "seed", c.seed);
  c.workers = get(j, "workers", c.workers);
  c.trials = get(j, "trials", c.trials);
  if (c.trials < 100)
    throw std::invalid_argument("config: trials must be >= 100");
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    c.rings = get(t, "rings", c.rings);
    c.trim = get(t, "trim", c.trim);
    c.antennas_per_site = get(t, "antennas_per_site", c.antennas_per_site);
    c.alpha = get(t, "alpha", c.alpha);
  }
  c.rho_db = get(j, "rho_db", c.rho_db);
  c.T = get(j, "T", c.T);
  if (j.contains("residual")) {
    if (j.at("residual").is_string())
      c.residual = -1.0;  // "auto"
    else
      c.residual = j.at("residual").get<double>();
  }
  if (j.contains("quantizer"))
    c.quantizer = j.at("quantizer").get<std::string>() == "rd-model"
                      ? QuantizerKind::rate_distortion_model
                      : QuantizerKind::dithered_scalar;
  if (j.contains("mi")) {
    const auto& m = j.at("mi");
    if (m.contains("mode"))
      c.mi_mode = m.at("mode").get<std::string>() == "histogram"
                      ? MiMode::histogram
                      : MiMode::analytic;
    c.hist_bins = get(m, "bins", c.hist_bins);
    c.symbols_per_block = get(m, "symbols", c.symbols_per_block);
  }
  if (j.contains("tradeoff")) {
    const auto& t = j.at("tradeoff");
    if (t.contains("coop_sizes"))
      c.coop_sizes = t.at("coop_sizes").get<std::vector<int>>();
    if (t.contains("xi2_log10_grid"))
      c.xi2_log10_grid = t.at("xi2_log10_grid").get<std::vector<double>>();
  }
  if (j.contains("balance")) {
    const auto& t = j.at("balance");
    if (t.contains("tangent_sizes"))
      c.tangent_sizes = t.at("tangent_sizes").get<std::vector<int>>();
  }
  if (j.contains("snr")) {
    const auto& s = j.at("snr");
    if (s.contains("rho_db_grid"))
      c.snr_rho_db_grid = s.at("rho_db_grid").get<std::vector<double>>();
    if (s.contains("fixed_bits"))
      c.snr_fixed_bits = s.at("fixed_bits").get<std::vector<double>>();
    c.snr_proportional = get(s, "proportional", c.snr_proportional);
    c.r = get(s, "r", c.r);
    c.kappa_ul = get(s, "kappa_ul", c.kappa_ul);
    c.snr_connectivity = get(s, "connectivity", c.snr_connectivity);
    c.uplink_trials = get(s, "uplink_trials", c.uplink_trials);
  }
  for (size_t i = 1; i < c.snr_rho_db_grid.size(); ++i)
    if (c.snr_rho_db_grid[i] <= c.snr_rho_db_grid[i - 1])
      throw std::invalid_argument("config: snr grid must be increasing");
  // descending error grid <=> strictly increasing feedback grid
  for (size_t i = 1; i < c.xi2_log10_grid.size(); ++i)
    if (c.xi2_log10_grid[i] >= c.xi2_log10_grid[i - 1])
      throw std::invalid_argument("config: xi2 grid must be decreasing");
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  json j;
  is >> j;
  return load_config(j);
}

// --- derived scenario state -------------------------------------------------

struct Scenario {
  NetworkTopology topo;
  Eigen::VectorXd ref_gains;  // corner-mobile row, nearest gain normalized
  double resid = 0.0;
  double rho = 0.0;
  double density_b = 0.0;
};

inline Scenario make_scenario(const ExperimentConfig& c) {
  Scenario s;
  s.topo = build_hex_grid(c.rings, c.antennas_per_site, c.trim);
  s.topo.alpha = c.alpha;
  s.topo.mobiles.push_back(corner_mobile(s.topo));
  gain_map(s.topo);
  Eigen::VectorXd row = s.topo.gain.row(0);
  const double gmax = row.maxCoeff();
  s.ref_gains = row / gmax;
  s.resid = c.residual < 0.0 ? residual_interference_coeff(s.topo, 220)
                             : c.residual;
  s.topo.residual_noise_coeff = s.resid;
  s.rho = std::pow(10.0, c.rho_db / 10.0);
  s.density_b = density_bound(s.topo, 0);
  return s;
}

// Reference row restricted to the L strongest antennas (ties by index).
inline Eigen::VectorXd keep_strongest(const Eigen::VectorXd& row, int count) {
  std::vector<int> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return row(a) > row(b); });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(row.size());
  for (int k = 0; k < count && k < row.size(); ++k)
    out(order[k]) = row(order[k]);
  return out;
}

// --- CSV ---------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_row(const CurvePoint& p) {
  std::ostringstream os;
  os << p.scheme << "," << p.fed << "," << format_g17(p.feedback_se) << ","
     << format_g17(p.downlink_se) << "," << format_g17(p.stderr_) << ","
     << p.trials << "," << p.seed << "," << format_g17(p.rho_db);
  return os.str();
}

inline void write_csv(const std::string& path,
                      const std::vector<CurvePoint>& rows) {
  std::ofstream os(path);
  os << "# " << kCsvVersion << "\n";
  os << "scheme,L_fed,feedback_se_bps_hz,downlink_se_bps_hz,stderr,trials,"
        "seed,rho_db\n";
  for (const auto& p : rows) os << csv_row(p) << "\n";
}

// Point-level resume log: every finished point is appended with its plan key,
// so an interrupted sweep restarts where it stopped and the final file is
// written in plan order regardless.
class ResumeLog {
 public:
  explicit ResumeLog(const std::string& path) : path_(path) {
    std::ifstream is(path_);
    std::string line;
    while (std::getline(is, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      done_[line.substr(0, tab)] = line.substr(tab + 1);
    }
  }

  std::optional<std::string> lookup(const std::string& key) const {
    const auto it = done_.find(key);
    if (it == done_.end()) return std::nullopt;
    return it->second;
  }

  void record(const std::string& key, const std::string& row) {
    done_[key] = row;
    std::ofstream os(path_, std::ios::app);
    os << key << "\t" << row << "\n";
    os.flush();
  }

  void discard() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  std::string path_;
  std::map<std::string, std::string> done_;
};

inline CurvePoint parse_csv_row(const std::string& row) {
  CurvePoint p;
  std::istringstream is(row);
  std::string f;
  std::getline(is, p.scheme, ',');
  std::getline(is, f, ',');
  p.fed = std::stoi(f);
  std::getline(is, f, ',');
  p.feedback_se = std::stod(f);
  std::getline(is, f, ',');
  p.downlink_se = std::stod(f);
  std::getline(is, f, ',');
  p.stderr_ = std::stod(f);
  std::getline(is, f, ',');
  p.trials = std::stol(f);
  std::getline(is, f, ',');
  p.seed = std::stoull(f);
  std::getline(is, f, ',');
  p.rho_db = std::stod(f);
  return p;
}

// --- sweeps -------------------------------------------------------------------

inline LatticeConfig lattice_config(const ExperimentConfig& c,
                                    const Scenario& s) {
  LatticeConfig lc;
  lc.trials = c.trials;
  lc.hist_bins = c.hist_bins;
  lc.symbols_per_block = c.symbols_per_block;
  lc.rho = s.rho;
  lc.mi_mode = c.mi_mode;
  lc.workers = c.workers > 0 ? c.workers : default_workers();
  lc.seed = c.seed;
  lc.T = c.T;
  lc.user_shift = c.antennas_per_site;
  return lc;
}

// Fig. 2 reproduction: one curve per cooperation size, sweeping the common
// quantization error over the fed set (the fixed-step scheme of the paper's
// simulation section).
inline std::vector<CurvePoint> run_tradeoff_sweep(const ExperimentConfig& c,
                                                  const Scenario& s,
                                                  ResumeLog* resume = nullptr) {
  const LatticeConfig lc = lattice_config(c, s);
  const double Q = quantizer_overhead(c.quantizer);
  std::vector<CurvePoint> rows;
  for (int coop : c.coop_sizes) {
    // cooperation sizes count base stations; each contributes all antennas
    const Eigen::VectorXd masked =
        keep_strongest(s.ref_gains, coop * c.antennas_per_site);
    std::vector<double> grid = coop == 1 ? std::vector<double>{1.0}
                                         : c.xi2_log10_grid;
    for (size_t gi = 0; gi < grid.size(); ++gi) {
      std::ostringstream key;
      key << "tradeoff/" << coop << "/" << gi;
      if (resume) {
        if (auto hit = resume->lookup(key.str())) {
          rows.push_back(parse_csv_row(*hit));
          continue;
        }
      }
      CurvePoint p;
      p.rho_db = c.rho_db;
      p.seed = c.seed;
      FeedbackAllocation alloc;
      if (coop == 1) {
        // single-BS service: feedback buys nothing, emit the baseline point
        alloc = FeedbackAllocation{};
      } else {
        const double xi2 = std::pow(10.0, grid[gi]);
        alloc = allocate_infinite(masked, xi2, c.T, Q);
      }
      const SimResult r =
          run_downlink(s.ref_gains, alloc, c.quantizer, s.resid, lc);
      p.scheme = coop == 1 ? "no-coop" : "dp-L" + std::to_string(coop);
      p.fed = coop == 1 ? 1 : static_cast<int>(alloc.active.size());
      p.feedback_se = r.feedback_se;
      p.downlink_se = r.mean_mi;
      p.stderr_ = r.mean_stderr;
      p.trials = r.trials;
      rows.push_back(p);
      if (resume) resume->record(key.str(), csv_row(p));
    }
  }
  return rows;
}

// Fig. 3 reproduction: the fed set follows the optimal-quantization activity
// rule sigma^2 > xi^2 over the whole grid, plus the slope tangents at the
// requested set sizes.  The zf-baseline curve rides the same sweep.
inline std::vector<CurvePoint> run_balance_curve(const ExperimentConfig& c,
                                                 const Scenario& s,
                                                 ResumeLog* resume = nullptr) {
  const LatticeConfig lc = lattice_config(c, s);
  const double Q = quantizer_overhead(c.quantizer);
  std::vector<CurvePoint> rows;
  for (size_t gi = 0; gi < c.xi2_log10_grid.size(); ++gi) {
    for (int zf = 0; zf < 2; ++zf) {
      std::ostringstream key;
      key << "balance/" << (zf ? "zf" : "dp") << "/" << gi;
      if (resume) {
        if (auto hit = resume->lookup(key.str())) {
          rows.push_back(parse_csv_row(*hit));
          continue;
        }
      }
      const double xi2 = std::pow(10.0, c.xi2_log10_grid[gi]);
      const FeedbackAllocation alloc =
          allocate_infinite(s.ref_gains, xi2, c.T, Q);
      LatticeConfig run = lc;
      run.scheme = zf ? SimScheme::zf_baseline : SimScheme::dp_modulo;
      const SimResult r =
          run_downlink(s.ref_gains, alloc, c.quantizer, s.resid, run);
      CurvePoint p;
      p.scheme = zf ? "zf-baseline" : "dp-balance";
      p.fed = static_cast<int>(alloc.active.size());
      p.feedback_se = r.feedback_se;
      p.downlink_se = r.mean_mi;
      p.stderr_ = r.mean_stderr;
      p.trials = r.trials;
      p.seed = c.seed;
      p.rho_db = c.rho_db;
      rows.push_back(p);
      if (resume) resume->record(key.str(), csv_row(p));
    }
  }

  // slope tangents anchored where the swept fed count matches
  for (int lsz : c.tangent_sizes) {
    const CurvePoint* anchor = nullptr;
    for (const auto& p : rows)
      if (p.scheme == "dp-balance" &&
          (!anchor || std::abs(p.fed - lsz) < std::abs(anchor->fed - lsz)))
        anchor = &p;
    if (!anchor) continue;
    const double slope = prop1_slope(c.alpha, Q, c.T, lsz);
    for (double dx : {-0.04, 0.0, 0.08}) {
      CurvePoint p;
      p.scheme = "tangent-L" + std::to_string(lsz);
      p.fed = lsz;
      p.feedback_se = anchor->feedback_se + dx;
      p.downlink_se = anchor->downlink_se + slope * dx;
      p.trials = 0;
      p.seed = c.seed;
      p.rho_db = c.rho_db;
      rows.push_back(p);
    }
  }
  return rows;
}

// Fig. 4 reproduction: finite-connectivity network, fixed-rate feedback
// curves over SNR plus the proportional-feedback trajectory and its slope
// reference line.
inline std::vector<CurvePoint> run_snr_sweep(const ExperimentConfig& c,
                                             const Scenario& s,
                                             ResumeLog* resume = nullptr) {
  const double Q = quantizer_overhead(c.quantizer);
  const Eigen::VectorXd row = keep_strongest(s.ref_gains, c.snr_connectivity);
  std::vector<CurvePoint> rows;

  std::vector<std::pair<std::string, double>> plans;  // (scheme, bits or -1)
  plans.push_back({"fixed-F0", 0.0});
  for (double bits : c.snr_fixed_bits)
    plans.push_back({"fixed-F" + std::to_string(static_cast<int>(bits)), bits});
  if (c.snr_proportional) plans.push_back({"proportional", -1.0});

  for (const auto& [scheme, bits] : plans) {
    for (size_t gi = 0; gi < c.snr_rho_db_grid.size(); ++gi) {
      std::ostringstream key;
      key << "snr/" << scheme << "/" << gi;
      if (resume) {
        if (auto hit = resume->lookup(key.str())) {
          rows.push_back(parse_csv_row(*hit));
          continue;
        }
      }
      const double rho_db = c.snr_rho_db_grid[gi];
      const double rho = std::pow(10.0, rho_db / 10.0);
      FeedbackAllocation alloc;
      if (bits > 0.0) {
        alloc = allocate_finite(row, bits / c.T, c.T, Q);
      } else if (bits < 0.0) {
        // feedback budget = r * R_UL at this SNR
        const Eigen::MatrixXd ul_gain =
            cyclic_gain_rows(row, static_cast<int>(row.size())).transpose();
        const RateEstimate ul =
            uplink_rate(ul_gain, c.kappa_ul * rho, c.uplink_trials, c.seed);
        alloc = allocate_finite(row, c.r * ul.mean, c.T, Q);
      }
      LatticeConfig run = lattice_config(c, s);
      run.rho = rho;
      const SimResult r = run_downlink(row, alloc, c.quantizer, 0.0, run);
      CurvePoint p;
      p.scheme = scheme;
      p.fed = static_cast<int>(alloc.active.size());
      p.feedback_se = r.feedback_se;
      p.downlink_se = r.mean_mi;
      p.stderr_ = r.mean_stderr;
      p.trials = r.trials;
      p.seed = c.seed;
      p.rho_db = rho_db;
      rows.push_back(p);
      if (resume) resume->record(key.str(), csv_row(p));
    }
  }

  // Eq.-(7)-slope reference anchored at the last proportional point
  const CurvePoint* anchor = nullptr;
  for (const auto& p : rows)
    if (p.scheme == "proportional") anchor = &p;
  if (anchor) {
    const double slope =
        th1_multiplexing(c.r, static_cast<double>(c.T), c.snr_connectivity);
    for (double rho_db : c.snr_rho_db_grid) {
      CurvePoint p;
      p.scheme = "slope-ref";
      p.fed = c.snr_connectivity;
      p.downlink_se = anchor->downlink_se +
                      slope * (rho_db - anchor->rho_db) * std::log2(10.0) / 10.0;
      p.trials = 0;
      p.seed = c.seed;
      p.rho_db = rho_db;
      rows.push_back(p);
    }
  }
  return rows;
}

// --- curve analysis -----------------------------------------------------------

// x-locations where curve b overtakes curve a (sign changes of the
// interpolated difference).
inline std::vector<double> crossing_points(
    const std::vector<std::pair<double, double>>& a,
    const std::vector<std::pair<double, double>>& b) {
  std::vector<double> xs;
  for (const auto& p : a) xs.push_back(p.first);
  for (const auto& p : b) xs.push_back(p.first);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  auto interp = [](const std::vector<std::pair<double, double>>& c, double x)
      -> std::optional<double> {
    if (c.empty() || x < c.front().first || x > c.back().first)
      return std::nullopt;
    for (size_t i = 1; i < c.size(); ++i)
      if (x <= c[i].first) {
        const double t =
            (x - c[i - 1].first) / (c[i].first - c[i - 1].first + 1e-300);
        return c[i - 1].second + t * (c[i].second - c[i - 1].second);
      }
    return c.back().second;
  };
  std::vector<double> out;
  std::optional<double> prev_diff;
  double prev_x = 0.0;
  for (double x : xs) {
    const auto ya = interp(a, x), yb = interp(b, x);
    if (!ya || !yb) continue;
    const double d = *yb - *ya;
    if (prev_diff && *prev_diff < 0.0 && d >= 0.0) {
      const double t = *prev_diff / (*prev_diff - d + 1e-300);
      out.push_back(prev_x + t * (x - prev_x));
    }
    prev_diff = d;
    prev_x = x;
  }
  return out;
}

inline std::vector<std::pair<double, double>> curve_of(
    const std::vector<CurvePoint>& rows, const std::string& scheme, int fed_max,
    int fed_min = 0) {
  std::vector<std::pair<double, double>> c;
  for (const auto& p : rows)
    if (p.scheme == scheme && p.fed <= fed_max && p.fed >= fed_min)
      c.push_back({p.feedback_se, p.downlink_se});
  std::sort(c.begin(), c.end());
  return c;
}

}  // namespace ratebal
