#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace ratebal {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Network geometry with unit inter-site spacing.  Gains are pure path loss,
// d^(-alpha); transmit power and SNR normalization are applied downstream.
struct NetworkTopology {
  std::vector<Vec2> sites;
  int antennas_per_site = 1;
  std::vector<Vec2> mobiles;
  double alpha = 4.0;
  Eigen::MatrixXd gain;          // mobiles x antennas, filled by gain_map
  double residual_noise_coeff = 0.0;

  int num_antennas() const {
    return static_cast<int>(sites.size()) * antennas_per_site;
  }
  Vec2 antenna_pos(int j) const { return sites[j / antennas_per_site]; }
};

namespace hexgrid {

// Sites of the centered hexagonal patch, axial coordinates (m, n) with
// basis (1,0) and (1/2, sqrt(3)/2); ring index is max(|m|,|n|,|m+n|).
inline std::vector<Vec2> patch(int rings) {
  if (rings < 0) throw std::invalid_argument("rings must be >= 0");
  std::vector<Vec2> out;
  const double hy = std::sqrt(3.0) / 2.0;
  for (int m = -rings; m <= rings; ++m)
    for (int n = -rings; n <= rings; ++n)
      if (std::max({std::abs(m), std::abs(n), std::abs(m + n)}) <= rings)
        out.push_back({m + 0.5 * n, hy * n});
  return out;
}

// One lattice ring (ring 0 is the origin site), walked along its perimeter.
inline std::vector<Vec2> ring(int r) {
  std::vector<Vec2> out;
  const double hy = std::sqrt(3.0) / 2.0;
  if (r == 0) {
    out.push_back({0.0, 0.0});
    return out;
  }
  static constexpr int dirs[6][2] = {{-1, 1}, {-1, 0}, {0, -1},
                                     {1, -1}, {1, 0},  {0, 1}};
  int m = r, n = 0;
  out.reserve(6 * r);
  for (const auto& d : dirs)
    for (int k = 0; k < r; ++k) {
      out.push_back({m + 0.5 * n, hy * n});
      m += d[0];
      n += d[1];
    }
  return out;
}

}  // namespace hexgrid

// Centered hexagonal patch of 1 + 3*rings*(rings+1) sites.  With
// trim_corners, the 6 outermost corner sites are removed; for rings = 4 this
// yields the 55-site layout used throughout the experiments.
inline NetworkTopology build_hex_grid(int rings, int antennas_per_site = 1,
                                      bool trim_corners = false) {
  NetworkTopology t;
  t.antennas_per_site = antennas_per_site;
  t.sites = hexgrid::patch(rings);
  if (trim_corners && rings >= 1) {
    // corners are the 6 sites at the maximum center distance (= rings)
    std::vector<double> d(t.sites.size());
    for (size_t i = 0; i < t.sites.size(); ++i)
      d[i] = std::hypot(t.sites[i].x, t.sites[i].y);
    const double dmax = *std::max_element(d.begin(), d.end());
    std::vector<Vec2> kept;
    for (size_t i = 0; i < t.sites.size(); ++i)
      if (d[i] < dmax - 1e-9) kept.push_back(t.sites[i]);
    t.sites = std::move(kept);
  }
  return t;
}

// Voronoi vertex adjacent to the grid center: the point equidistant from the
// three mutually-neighboring sites nearest the centroid.  For a unit-spacing
// hex grid the distance to each is 1/sqrt(3).
inline Vec2 corner_mobile(const NetworkTopology& t) {
  if (t.sites.size() < 3)
    throw std::invalid_argument("corner_mobile: need at least 3 sites");
  Vec2 c{0.0, 0.0};
  for (const auto& s : t.sites) {
    c.x += s.x;
    c.y += s.y;
  }
  c.x /= static_cast<double>(t.sites.size());
  c.y /= static_cast<double>(t.sites.size());

  std::vector<int> idx(t.sites.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return dist(t.sites[a], c) < dist(t.sites[b], c);
  });

  // first two nearest, then the nearest third that closes a triangle with
  // both (pairwise distance within 1.5 spacings, non-collinear)
  const Vec2 s0 = t.sites[idx[0]];
  const Vec2 s1 = t.sites[idx[1]];
  for (size_t k = 2; k < idx.size(); ++k) {
    const Vec2 s2 = t.sites[idx[k]];
    if (dist(s0, s2) > 1.5 || dist(s1, s2) > 1.5) continue;
    const double ax = s1.x - s0.x, ay = s1.y - s0.y;
    const double bx = s2.x - s0.x, by = s2.y - s0.y;
    const double det = 2.0 * (ax * by - ay * bx);
    if (std::abs(det) < 1e-12) continue;  // collinear
    const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by;
    Vec2 v;
    v.x = s0.x + (by * a2 - ay * b2) / det;
    v.y = s0.y + (ax * b2 - bx * a2) / det;
    return v;
  }
  throw std::runtime_error("corner_mobile: no Voronoi vertex (degenerate grid)");
}

// sigma^2_{i,j} = d_{i,j}^(-alpha).  All antennas of a site share its
// position, so columns of the same site are identical.
inline Eigen::MatrixXd gain_map(NetworkTopology& t) {
  const int n = static_cast<int>(t.mobiles.size());
  const int m = t.num_antennas();
  Eigen::MatrixXd g(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double d = dist(t.mobiles[i], t.antenna_pos(j));
      if (d <= 0.0)
        throw std::domain_error("gain_map: mobile colocated with antenna");
      g(i, j) = std::pow(d, -t.alpha);
    }
  t.gain = g;
  return g;
}

// Circulant gain matrix: row i is the reference row cyclically shifted by i
// positions (row 0 equals the reference).
inline Eigen::MatrixXd cyclic_gain_rows(const Eigen::VectorXd& reference,
                                        int n_rows) {
  const int m = static_cast<int>(reference.size());
  if (m < 1 || n_rows > m)
    throw std::invalid_argument("cyclic_gain_rows: need 1 <= N <= M");
  Eigen::MatrixXd g(n_rows, m);
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = reference((j - i + m) % m);
  return g;
}

// Tightest constant b with j <= b * d_(j)^2 over the sorted antenna
// distances (the circle-count bound evaluated on the actual grid).
inline double density_bound(const NetworkTopology& t, int mobile) {
  const int m = t.num_antennas();
  if (m < 1) throw std::invalid_argument("density_bound: no antennas");
  std::vector<double> d(m);
  for (int j = 0; j < m; ++j)
    d[j] = dist(t.mobiles[mobile], t.antenna_pos(j));
  std::sort(d.begin(), d.end());
  double b = 0.0;
  for (int j = 0; j < m; ++j)
    b = std::max(b, static_cast<double>(j + 1) / (d[j] * d[j]));
  return b;
}

// Aggregate path gain of the lattice sites outside the simulated patch, for
// the topology's first mobile, expressed relative to the strongest in-patch
// gain (the same normalization used for SNR).  Converges for alpha > 2.
// The guard triggers when the outermost ring still contributes more than
// 1e-6 in normalized units.
inline double residual_interference_coeff(const NetworkTopology& t,
                                          int horizon_rings) {
  if (t.mobiles.empty())
    throw std::invalid_argument("residual_interference_coeff: no mobile");
  const Vec2 mob = t.mobiles.front();

  double gmax = 0.0;
  for (const auto& s : t.sites)
    gmax = std::max(gmax, std::pow(dist(mob, s), -t.alpha));

  std::unordered_set<std::uint64_t> patch;
  auto key = [](const Vec2& p) {
    const std::uint64_t a =
        static_cast<std::uint64_t>(std::llround(p.x * 4.0) + (1 << 30));
    const std::uint64_t b =
        static_cast<std::uint64_t>(std::llround(p.y * 8.0 / std::sqrt(3.0)) +
                                   (1 << 30));
    return (a << 32) | b;
  };
  for (const auto& s : t.sites) patch.insert(key(s));
  auto in_patch = [&](const Vec2& p) { return patch.count(key(p)) > 0; };

  double sum = 0.0;
  double last_ring = 0.0;
  for (int r = 0; r <= horizon_rings; ++r) {
    last_ring = 0.0;
    for (const auto& p : hexgrid::ring(r)) {
      if (in_patch(p)) continue;
      last_ring += std::pow(dist(mob, p), -t.alpha) / gmax;
    }
    sum += last_ring;
  }
  if (last_ring > 1e-6)
    throw std::runtime_error(
        "residual_interference_coeff: horizon too small (tail still > 1e-6)");
  return sum;
}

// --- text serialization ------------------------------------------------

inline void dump_topology(const NetworkTopology& t, std::ostream& os) {
  os.precision(17);
  os << "# ratebal topology v1\n";
  os << "alpha " << t.alpha << "\n";
  os << "antennas_per_site " << t.antennas_per_site << "\n";
  os << "sites " << t.sites.size() << "\n";
  for (const auto& s : t.sites) os << s.x << " " << s.y << "\n";
  os << "mobiles " << t.mobiles.size() << "\n";
  for (const auto& m : t.mobiles) os << m.x << " " << m.y << "\n";
}

inline NetworkTopology load_topology(std::istream& is) {
  NetworkTopology t;
  std::string line;
  auto next = [&]() -> std::istringstream {
    while (std::getline(is, line)) {
      if (!line.empty() && line[0] != '#') return std::istringstream(line);
    }
    throw std::runtime_error("load_topology: truncated file");
  };
  std::string key;
  size_t n = 0;
  {
    auto ls = next();
    ls >> key >> t.alpha;
    if (key != "alpha") throw std::runtime_error("load_topology: expected alpha");
  }
  {
    auto ls = next();
    ls >> key >> t.antennas_per_site;
    if (key != "antennas_per_site")
      throw std::runtime_error("load_topology: expected antennas_per_site");
  }
  {
    auto ls = next();
    ls >> key >> n;
    if (key != "sites") throw std::runtime_error("load_topology: expected sites");
  }
  for (size_t i = 0; i < n; ++i) {
    auto ls = next();
    Vec2 p;
    ls >> p.x >> p.y;
    t.sites.push_back(p);
  }
  {
    auto ls = next();
    ls >> key >> n;
    if (key != "mobiles")
      throw std::runtime_error("load_topology: expected mobiles");
  }
  for (size_t i = 0; i < n; ++i) {
    auto ls = next();
    Vec2 p;
    ls >> p.x >> p.y;
    t.mobiles.push_back(p);
  }
  return t;
}

inline void export_gain_csv(const Eigen::MatrixXd& gain, std::ostream& os) {
  os.precision(17);
  for (Eigen::Index i = 0; i < gain.rows(); ++i) {
    for (Eigen::Index j = 0; j < gain.cols(); ++j) {
      if (j) os << ",";
      os << gain(i, j);
    }
    os << "\n";
  }
}

}  // namespace ratebal
