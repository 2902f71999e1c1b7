#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/matrix.hpp"
#include "gridrisk/rng.hpp"
#include "gridrisk/stats.hpp"

namespace gridrisk {

// Uniforms are kept strictly inside (0,1) before any inverse CDF.
constexpr double kUniformClamp = 1e-12;

// Stream ids: scenario walks use the scenario index; auxiliary draws live in
// disjoint high ranges so no stream is ever reused across purposes.
constexpr uint64_t kLhsStreamBase = 0x100000000ULL;

struct WindCurve {
  double v_min = 1.0;   // m/s, cut-in
  double v_max = 15.0;  // m/s, rated
  double p_r = 100.0;   // MW per turbine

  double power(double v) const {
    const double num = v * v * v - v_min * v_min * v_min;
    const double den = v_max * v_max * v_max - v_min * v_min * v_min;
    return std::clamp(p_r * num / den, 0.0, p_r);
  }
};

struct CovarianceSpec {
  Mat c;

  static CovarianceSpec identity(int m) {
    CovarianceSpec s;
    s.c = Mat::identity(m);
    return s;
  }

  // 1 on the diagonal, rho between same-type variables of adjacent zones
  // (columns ordered: Z loads, then Z wind speeds; adjacency = consecutive
  // order within each block), 0 otherwise.
  static CovarianceSpec default_for_zones(int z, double rho = 0.3) {
    CovarianceSpec s;
    s.c = Mat::identity(2 * z);
    for (int block = 0; block < 2; ++block)
      for (int i = 0; i + 1 < z; ++i) {
        const int a = block * z + i, b = a + 1;
        s.c(a, b) = rho;
        s.c(b, a) = rho;
      }
    return s;
  }

  void validate() const {
    if (c.rows != c.cols) throw std::invalid_argument("covariance: not square");
    for (int i = 0; i < c.rows; ++i) {
      if (std::abs(c(i, i) - 1.0) > 1e-12)
        throw std::invalid_argument("covariance: diagonal entry " + std::to_string(i) + " is not 1");
      for (int j = 0; j < i; ++j)
        if (std::abs(c(i, j) - c(j, i)) > 1e-12)
          throw std::invalid_argument("covariance: not symmetric at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
    }
    cholesky(c);  // throws naming the pivot if not positive definite
  }
};

// Raw correlated draws: marginal-space values w plus the uniforms and
// correlated latents behind them, for fidelity diagnostics.
struct SampleDraws {
  int n = 0, t = 0, m = 0;
  std::vector<double> w;       // n*t*m, marginal space (MW or m/s)
  std::vector<double> u;       // n*t*m, copula uniforms
  std::vector<double> latent;  // n*t*m, correlated Gaussian latents

  size_t idx(int scen, int step, int var) const {
    return (static_cast<size_t>(scen) * t + step) * m + var;
  }
};

// Correlated sampling: a cumulative Gaussian walk x_t = x_{t-1} + eps is
// rescaled to unit variance (s_t = x_t / sqrt(t)), mixed spatially by the
// Cholesky factor of C, pushed through the normal CDF and then through each
// marginal's inverse CDF. Consecutive latents of one variable have
// correlation sqrt(t/(t+1)) by construction.
inline SampleDraws sample_correlated(int n, int t, const std::vector<MarginalSpec>& marginals,
                                     const CovarianceSpec& cov, uint64_t seed) {
  const int m = static_cast<int>(marginals.size());
  if (m == 0 || cov.c.rows != m) throw std::invalid_argument("sample_correlated: |marginals| != dim(C)");
  if (n < 1 || t < 1) throw std::invalid_argument("sample_correlated: need N >= 1 and T >= 1");
  const Mat chol_l = cholesky(cov.c);

  SampleDraws out;
  out.n = n;
  out.t = t;
  out.m = m;
  out.w.resize(static_cast<size_t>(n) * t * m);
  out.u.resize(out.w.size());
  out.latent.resize(out.w.size());

  std::vector<double> x(m), s(m), xc(m);
  for (int scen = 0; scen < n; ++scen) {
    CounterRng rng(seed, static_cast<uint64_t>(scen));
    std::fill(x.begin(), x.end(), 0.0);
    for (int step = 0; step < t; ++step) {
      for (int i = 0; i < m; ++i) x[i] += inv_norm_cdf(rng.next_uniform());
      const double scale = 1.0 / std::sqrt(static_cast<double>(step + 1));
      for (int i = 0; i < m; ++i) s[i] = x[i] * scale;
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j) acc += chol_l(i, j) * s[j];
        xc[i] = acc;
      }
      for (int i = 0; i < m; ++i) {
        const double ui =
            std::clamp(norm_cdf(xc[i]), kUniformClamp, 1.0 - kUniformClamp);
        const size_t k = out.idx(scen, step, i);
        out.latent[k] = xc[i];
        out.u[k] = ui;
        out.w[k] = marginals[i].inv_cdf(ui);
      }
    }
  }
  return out;
}

// Stratified uniforms: column i gets exactly one value per stratum
// [j/N, (j+1)/N), in a seeded random scenario order.
inline Mat lhs_uniforms(int n, int m, uint64_t seed) {
  Mat u(n, m);
  std::vector<int> perm(n);
  for (int i = 0; i < m; ++i) {
    CounterRng rng(seed, kLhsStreamBase + static_cast<uint64_t>(i));
    std::iota(perm.begin(), perm.end(), 0);
    for (int j = n - 1; j > 0; --j)
      std::swap(perm[j], perm[rng.next_u64() % static_cast<uint64_t>(j + 1)]);
    for (int j = 0; j < n; ++j) {
      const double stratified = (perm[j] + rng.next_uniform()) / n;
      u(j, i) = std::clamp(stratified, kUniformClamp, 1.0 - kUniformClamp);
    }
  }
  return u;
}

inline Mat lhs_first_step(int n, const std::vector<MarginalSpec>& marginals, uint64_t seed) {
  const int m = static_cast<int>(marginals.size());
  Mat vals = lhs_uniforms(n, m, seed);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) vals(j, i) = marginals[i].inv_cdf(vals(j, i));
  return vals;
}

// Replace the first-step uniforms with LHS values by rank: the scenario
// holding the r-th smallest correlated u receives the r-th smallest
// stratified value, preserving cross-column dependence while enforcing
// one-sample-per-stratum marginals. Latents are untouched, so the walk's
// temporal correlation is unaffected.
inline void apply_lhs_first_step(SampleDraws& draws, const std::vector<MarginalSpec>& marginals,
                                 uint64_t seed) {
  const Mat lu = lhs_uniforms(draws.n, draws.m, seed);
  std::vector<int> order(draws.n);
  std::vector<double> col(draws.n);
  for (int i = 0; i < draws.m; ++i) {
    for (int scen = 0; scen < draws.n; ++scen) col[scen] = draws.u[draws.idx(scen, 0, i)];
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return col[a] != col[b] ? col[a] < col[b] : a < b;
    });
    std::vector<double> sorted_u(draws.n);
    for (int scen = 0; scen < draws.n; ++scen) sorted_u[scen] = lu(scen, i);
    std::sort(sorted_u.begin(), sorted_u.end());
    for (int r = 0; r < draws.n; ++r) {
      const size_t k = draws.idx(order[r], 0, i);
      draws.u[k] = sorted_u[r];
      draws.w[k] = marginals[i].inv_cdf(sorted_u[r]);
    }
  }
}

// Split zonal values to member entities by fixed fractions. factors[j] is the
// share of bus j; bus_zone[j] is the zone index of bus j; zonal has one value
// per zone index.
inline std::vector<double> disaggregate(const std::vector<double>& zonal,
                                        const std::vector<double>& factors,
                                        const std::vector<int>& bus_zone,
                                        const std::vector<int>& zone_ids) {
  if (factors.size() != bus_zone.size())
    throw std::invalid_argument("disaggregate: factors/bus_zone size mismatch");
  std::vector<double> sums(zonal.size(), 0.0);
  for (size_t j = 0; j < factors.size(); ++j) {
    if (factors[j] < 0.0) throw std::invalid_argument("disaggregate: negative factor");
    sums[bus_zone[j]] += factors[j];
  }
  for (size_t z = 0; z < zonal.size(); ++z) {
    if (std::abs(sums[z] - 1.0) <= 1e-9) continue;
    if (std::abs(sums[z]) <= 1e-9 && zonal[z] == 0.0) continue;
    throw std::runtime_error("zone " + std::to_string(zone_ids[z]) + ": disaggregation factors sum to " +
                             std::to_string(sums[z]) + ", expected 1");
  }
  std::vector<double> out(factors.size());
  for (size_t j = 0; j < factors.size(); ++j) out[j] = factors[j] * zonal[bus_zone[j]];
  return out;
}

// N correlated realizations of zonal load (MW), wind speed (m/s) and wind
// power (MW) over T steps, plus the metadata needed to reproduce them.
struct ScenarioSet {
  int n = 0, t = 0, n_zones = 0;
  uint64_t seed = 0;
  std::vector<int> zone_ids;
  std::string config_hash;
  std::vector<double> zonal_load;  // n*t*zones MW
  std::vector<double> wind_speed;  // n*t*zones m/s
  std::vector<double> zonal_wind;  // n*t*zones MW

  size_t idx(int scen, int step, int z) const {
    return (static_cast<size_t>(scen) * t + step) * n_zones + z;
  }
  double load(int scen, int step, int z) const { return zonal_load[idx(scen, step, z)]; }
  double wind(int scen, int step, int z) const { return zonal_wind[idx(scen, step, z)]; }
};

inline std::vector<MarginalSpec> zonal_marginals(const Grid& g) {
  std::vector<MarginalSpec> m;
  for (const Zone& z : g.zones) m.push_back(z.load);
  for (const Zone& z : g.zones) m.push_back(z.wind_speed);
  return m;
}

inline ScenarioSet generate_scenarios(const Grid& g, int n, int t, uint64_t seed,
                                      const CovarianceSpec* cov = nullptr, bool lhs = true,
                                      WindCurve curve = {}) {
  const int z = static_cast<int>(g.zones.size());
  const std::vector<MarginalSpec> marg = zonal_marginals(g);
  CovarianceSpec c = cov ? *cov : CovarianceSpec::default_for_zones(z);
  c.validate();
  if (c.c.rows != 2 * z)
    throw std::invalid_argument("covariance dimension " + std::to_string(c.c.rows) +
                                " does not match 2 x zones = " + std::to_string(2 * z));

  SampleDraws draws = sample_correlated(n, t, marg, c, seed);
  if (lhs) apply_lhs_first_step(draws, marg, seed);

  ScenarioSet s;
  s.n = n;
  s.t = t;
  s.n_zones = z;
  s.seed = seed;
  for (const Zone& zn : g.zones) s.zone_ids.push_back(zn.id);
  s.zonal_load.resize(static_cast<size_t>(n) * t * z);
  s.wind_speed.resize(s.zonal_load.size());
  s.zonal_wind.resize(s.zonal_load.size());
  for (int scen = 0; scen < n; ++scen)
    for (int step = 0; step < t; ++step)
      for (int zi = 0; zi < z; ++zi) {
        const size_t k = s.idx(scen, step, zi);
        s.zonal_load[k] = draws.w[draws.idx(scen, step, zi)];
        s.wind_speed[k] = draws.w[draws.idx(scen, step, z + zi)];
        s.zonal_wind[k] = g.zones[zi].n_turbines * curve.power(s.wind_speed[k]);
      }
  return s;
}

// Bus-level disaggregation of one (scenario, step) slice.
inline std::vector<double> bus_loads(const Grid& g, const ScenarioSet& s, int scen, int step) {
  std::vector<double> zonal(s.n_zones);
  for (int z = 0; z < s.n_zones; ++z) zonal[z] = s.load(scen, step, z);
  std::vector<int> bus_zone(g.buses.size());
  for (size_t j = 0; j < g.buses.size(); ++j) bus_zone[j] = g.zone_index(g.buses[j].zone);
  return disaggregate(zonal, g.load_shares(), bus_zone, s.zone_ids);
}

inline std::vector<double> bus_wind(const Grid& g, const ScenarioSet& s, int scen, int step) {
  std::vector<double> zonal(s.n_zones);
  for (int z = 0; z < s.n_zones; ++z) zonal[z] = s.wind(scen, step, z);
  std::vector<int> bus_zone(g.buses.size());
  std::vector<double> q(g.buses.size());
  for (size_t j = 0; j < g.buses.size(); ++j) {
    bus_zone[j] = g.zone_index(g.buses[j].zone);
    q[j] = g.buses[j].wind_share;
  }
  return disaggregate(zonal, q, bus_zone, s.zone_ids);
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_scenarios(const ScenarioSet& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scenario file " + path);
  std::string buf;
  buf += "# gridrisk scenarios\n";
  buf += "# config_hash " + (s.config_hash.empty() ? std::string("-") : s.config_hash) + "\n";
  buf += "# n " + std::to_string(s.n) + "\n";
  buf += "# t " + std::to_string(s.t) + "\n";
  buf += "# zones " + std::to_string(s.n_zones) + "\n";
  buf += "# seed " + std::to_string(s.seed) + "\n";
  buf += "scenario,t";
  for (int z : s.zone_ids) buf += ",load_z" + std::to_string(z);
  for (int z : s.zone_ids) buf += ",wind_speed_z" + std::to_string(z);
  for (int z : s.zone_ids) buf += ",wind_z" + std::to_string(z);
  buf += "\n";
  for (int scen = 0; scen < s.n; ++scen)
    for (int step = 0; step < s.t; ++step) {
      buf += std::to_string(scen) + "," + std::to_string(step + 1);
      for (int z = 0; z < s.n_zones; ++z) buf += "," + detail::fmt17(s.load(scen, step, z));
      for (int z = 0; z < s.n_zones; ++z) buf += "," + detail::fmt17(s.wind_speed[s.idx(scen, step, z)]);
      for (int z = 0; z < s.n_zones; ++z) buf += "," + detail::fmt17(s.wind(scen, step, z));
      buf += "\n";
    }
  out << buf;
}

inline ScenarioSet read_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  ScenarioSet s;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      ss >> key;
      if (key == "config_hash") {
        std::string v;
        ss >> v;
        s.config_hash = v == "-" ? "" : v;
      } else if (key == "n") ss >> s.n;
      else if (key == "t") ss >> s.t;
      else if (key == "zones") ss >> s.n_zones;
      else if (key == "seed") ss >> s.seed;
      continue;
    }
    if (!header_done) {
      // column header row; recover zone ids from load_z* names
      std::istringstream ss(line);
      std::string colname;
      while (std::getline(ss, colname, ','))
        if (colname.rfind("load_z", 0) == 0) s.zone_ids.push_back(std::stoi(colname.substr(6)));
      if (static_cast<int>(s.zone_ids.size()) != s.n_zones)
        throw std::runtime_error(path + ": zone columns do not match declared zone count");
      s.zonal_load.resize(static_cast<size_t>(s.n) * s.t * s.n_zones);
      s.wind_speed.resize(s.zonal_load.size());
      s.zonal_wind.resize(s.zonal_load.size());
      header_done = true;
      continue;
    }
    std::istringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != static_cast<size_t>(2 + 3 * s.n_zones))
      throw std::runtime_error(path + ": bad scenario row width");
    const int scen = static_cast<int>(vals[0]);
    const int step = static_cast<int>(vals[1]) - 1;
    for (int z = 0; z < s.n_zones; ++z) {
      const size_t k = s.idx(scen, step, z);
      s.zonal_load[k] = vals[2 + z];
      s.wind_speed[k] = vals[2 + s.n_zones + z];
      s.zonal_wind[k] = vals[2 + 2 * s.n_zones + z];
    }
  }
  if (!header_done) throw std::runtime_error(path + ": missing scenario header");
  return s;
}

}  // namespace gridrisk
