#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/lp.hpp"
#include "gridrisk/milp.hpp"
#include "gridrisk/ptdf.hpp"
#include "gridrisk/scenario.hpp"

namespace gridrisk {

struct ScucConfig {
  double reserve_fraction = 0.05;
  double gap = 1e-4;
  double int_tol = 1e-6;
  int node_limit = 10000;
  double shed_penalty = -1.0;  // < 0: take the grid's value
};

struct ScucProblem {
  const Grid* grid = nullptr;
  const DcModel* dc = nullptr;
  int t = 0;
  Mat bus_load;  // t x n_bus, MW
  Mat bus_wind;  // t x n_bus, MW
  double reserve_fraction = 0.05;
  double shed_penalty = 1000.0;
};

inline ScucProblem build_scuc(const Grid& g, const DcModel& dc, const Mat& bus_load,
                              const Mat& bus_wind, const ScucConfig& cfg) {
  const int nb = static_cast<int>(g.buses.size());
  if (bus_load.rows < 1 || bus_load.cols != nb || bus_wind.rows != bus_load.rows ||
      bus_wind.cols != nb)
    throw std::invalid_argument("build_scuc: load/wind dimensions inconsistent with grid");
  if (!(cfg.reserve_fraction >= 0.0 && cfg.reserve_fraction < 1.0))
    throw std::invalid_argument("build_scuc: reserve_fraction must lie in [0, 1)");
  ScucProblem pb;
  pb.grid = &g;
  pb.dc = &dc;
  pb.t = bus_load.rows;
  pb.bus_load = bus_load;
  pb.bus_wind = bus_wind;
  pb.reserve_fraction = cfg.reserve_fraction;
  pb.shed_penalty = cfg.shed_penalty < 0.0 ? g.shed_penalty : cfg.shed_penalty;
  for (const Generator& gen : g.gens)
    if (gen.kind == GenKind::Thermal && pb.shed_penalty <= gen.cost_lin)
      throw std::invalid_argument("build_scuc: shed penalty must exceed every linear generation cost");
  return pb;
}

inline ScucProblem make_scuc_problem(const Grid& g, const DcModel& dc, const ScenarioSet& s,
                                     int scen, const ScucConfig& cfg) {
  const int nb = static_cast<int>(g.buses.size());
  Mat load(s.t, nb), wind(s.t, nb);
  for (int step = 0; step < s.t; ++step) {
    const std::vector<double> l = bus_loads(g, s, scen, step);
    const std::vector<double> w = bus_wind(g, s, scen, step);
    for (int b = 0; b < nb; ++b) {
      load(step, b) = l[b];
      wind(step, b) = w[b];
    }
  }
  return build_scuc(g, dc, load, wind, cfg);
}

struct ScucSolution {
  enum class Status { Optimal, GapLimited, Infeasible };
  Status status = Status::Infeasible;
  double objective = 0.0;
  double best_bound = 0.0;
  Mat u;      // thermal x t, 0/1
  Mat p;      // thermal x t, MW
  Mat shed;   // t x buses, MW
  Mat curt;   // t x buses, MW wind curtailed
  Mat flows;  // t x branches, MW
  long nodes = 0;
  long lp_iterations = 0;
};

// Column layout and row assembly for one SCUC instance. Commitment u, start
// indicator y and stop indicator z are linked by u_t - u_{t-1} = y_t - z_t, so
// the objective SU.y + SD.z + noload.u + lin.p is linear. Line flows enter as
// lazily separated PTDF rows.
class ScucLp {
 public:
  explicit ScucLp(const ScucProblem& pb) : pb_(pb) {
    const Grid& g = *pb.grid;
    thermal_ = g.thermal_indices();
    const int nu = static_cast<int>(thermal_.size());
    const int nb = static_cast<int>(g.buses.size());
    const int t = pb.t;
    for (int b = 0; b < nb; ++b)
      if (g.buses[b].wind_share > 0.0) wind_bus_.push_back(b);
    const int nw = static_cast<int>(wind_bus_.size());

    iu_ = 0;
    iy_ = nu * t;
    iz_ = 2 * nu * t;
    ip_ = 3 * nu * t;
    ished_ = 4 * nu * t;
    icurt_ = ished_ + nb * t;

    for (int k = 0; k < nu; ++k) {
      const Generator& gen = g.gens[thermal_[k]];
      for (int s = 0; s < t; ++s) {
        double lo = 0.0, up = 1.0;
        // min-up/min-down carryover from the initial state
        if (gen.u0 == 1 && gen.hours0 < gen.min_up && s < gen.min_up - gen.hours0) lo = 1.0;
        if (gen.u0 == 0 && gen.hours0 < gen.min_down && s < gen.min_down - gen.hours0) up = 0.0;
        lp_.add_col(lo, up, gen.cost_noload);
      }
    }
    for (int k = 0; k < nu; ++k)
      for (int s = 0; s < t; ++s) lp_.add_col(0.0, 1.0, g.gens[thermal_[k]].cost_startup);
    for (int k = 0; k < nu; ++k)
      for (int s = 0; s < t; ++s) lp_.add_col(0.0, 1.0, g.gens[thermal_[k]].cost_shutdown);
    for (int k = 0; k < nu; ++k) {
      const Generator& gen = g.gens[thermal_[k]];
      for (int s = 0; s < t; ++s) {
        double lo = 0.0, up = gen.p_max;
        if (s == 0) {
          const double p_prev = gen.u0 ? gen.p0 : 0.0;
          lo = std::max(lo, p_prev - gen.ramp);
          up = std::min(up, p_prev + gen.ramp);
        }
        lp_.add_col(lo, up, gen.cost_lin);
      }
    }
    for (int b = 0; b < nb; ++b)
      for (int s = 0; s < t; ++s)
        lp_.add_col(0.0, pb.bus_load(s, b), pb.shed_penalty * g.buses[b].shed_cost_mult);
    for (int w = 0; w < nw; ++w)
      for (int s = 0; s < t; ++s) lp_.add_col(0.0, pb.bus_wind(s, wind_bus_[w]), 0.0);

    binaries_.resize(nu * t);
    for (int j = 0; j < nu * t; ++j) binaries_[j] = j;

    // status linking and minimum up/down times
    for (int k = 0; k < nu; ++k) {
      const Generator& gen = g.gens[thermal_[k]];
      for (int s = 0; s < t; ++s) {
        std::vector<std::pair<int, double>> e{{u(k, s), 1.0}, {y(k, s), -1.0}, {z(k, s), 1.0}};
        if (s == 0) {
          lp_.add_row(gen.u0, gen.u0, e);
        } else {
          e.emplace_back(u(k, s - 1), -1.0);
          lp_.add_row(0.0, 0.0, e);
        }
      }
      for (int s = 0; s < t; ++s) {
        std::vector<std::pair<int, double>> e{{u(k, s), -1.0}};
        for (int q = std::max(0, s - gen.min_up + 1); q <= s; ++q) e.emplace_back(y(k, q), 1.0);
        lp_.add_row(-kInf, 0.0, e);
      }
      for (int s = 0; s < t; ++s) {
        std::vector<std::pair<int, double>> e{{u(k, s), 1.0}};
        for (int q = std::max(0, s - gen.min_down + 1); q <= s; ++q) e.emplace_back(z(k, q), 1.0);
        lp_.add_row(-kInf, 1.0, e);
      }
    }
    // generation limits tied to commitment, and ramping
    for (int k = 0; k < nu; ++k) {
      const Generator& gen = g.gens[thermal_[k]];
      for (int s = 0; s < t; ++s)
        lp_.add_row(-kInf, 0.0, {{p(k, s), 1.0}, {u(k, s), -gen.p_max}});
      for (int s = 0; s < t; ++s)
        lp_.add_row(0.0, kInf, {{p(k, s), 1.0}, {u(k, s), -gen.p_min}});
      for (int s = 1; s < t; ++s)
        lp_.add_row(-gen.ramp, gen.ramp, {{p(k, s), 1.0}, {p(k, s - 1), -1.0}});
    }
    // per-step system balance and spinning reserve
    for (int s = 0; s < t; ++s) {
      std::vector<std::pair<int, double>> e;
      double rhs = 0.0;
      for (int k = 0; k < nu; ++k) e.emplace_back(p(k, s), 1.0);
      for (int b = 0; b < nb; ++b) {
        e.emplace_back(shed(b, s), 1.0);
        rhs += pb.bus_load(s, b) - pb.bus_wind(s, b);
      }
      for (int w = 0; w < nw; ++w) e.emplace_back(curt(w, s), -1.0);
      lp_.add_row(rhs, rhs, e);
    }
    for (int s = 0; s < t; ++s) {
      std::vector<std::pair<int, double>> e;
      double total_load = 0.0;
      for (int k = 0; k < nu; ++k) {
        e.emplace_back(u(k, s), g.gens[thermal_[k]].p_max);
        e.emplace_back(p(k, s), -1.0);
      }
      for (int b = 0; b < nb; ++b) total_load += pb.bus_load(s, b);
      lp_.add_row(pb.reserve_fraction * total_load, kInf, e);
    }
  }

  LpSolver& lp() { return lp_; }
  const std::vector<int>& binaries() const { return binaries_; }
  int n_thermal() const { return static_cast<int>(thermal_.size()); }

  int u(int k, int s) const { return iu_ + k * pb_.t + s; }
  int y(int k, int s) const { return iy_ + k * pb_.t + s; }
  int z(int k, int s) const { return iz_ + k * pb_.t + s; }
  int p(int k, int s) const { return ip_ + k * pb_.t + s; }
  int shed(int b, int s) const { return ished_ + b * pb_.t + s; }
  int curt(int w, int s) const { return icurt_ + w * pb_.t + s; }

  // Branch flow implied by a candidate point, from PTDF on net injections.
  double flow_at(const std::vector<double>& x, int l, int s) const {
    const Grid& g = *pb_.grid;
    const DcModel& dc = *pb_.dc;
    double f = 0.0;
    for (size_t k = 0; k < thermal_.size(); ++k)
      f += dc.ptdf(l, g.bus_index(g.gens[thermal_[k]].bus)) * x[p(static_cast<int>(k), s)];
    for (int b = 0; b < dc.n_bus; ++b)
      f += dc.ptdf(l, b) * (x[shed(b, s)] + pb_.bus_wind(s, b) - pb_.bus_load(s, b));
    for (size_t w = 0; w < wind_bus_.size(); ++w)
      f -= dc.ptdf(l, wind_bus_[w]) * x[curt(static_cast<int>(w), s)];
    return f;
  }

  // Lazy separation over all (branch, step) pairs not yet in the LP.
  std::vector<LazyRow> separate(const std::vector<double>& x) {
    const Grid& g = *pb_.grid;
    const DcModel& dc = *pb_.dc;
    std::vector<LazyRow> out;
    for (int l = 0; l < dc.n_branch; ++l) {
      const double limit = g.branches[l].flow_limit;
      for (int s = 0; s < pb_.t; ++s) {
        if (added_.count({l, s})) continue;
        const double f = flow_at(x, l, s);
        if (std::abs(f) <= limit + 1e-6) continue;
        out.push_back(make_flow_row(l, s));
        added_.insert({l, s});
      }
    }
    return out;
  }

  LazyRow make_flow_row(int l, int s) const {
    const Grid& g = *pb_.grid;
    const DcModel& dc = *pb_.dc;
    LazyRow row;
    double shift = 0.0;
    for (size_t k = 0; k < thermal_.size(); ++k) {
      const double c = dc.ptdf(l, g.bus_index(g.gens[thermal_[k]].bus));
      if (std::abs(c) > 1e-12) row.entries.emplace_back(p(static_cast<int>(k), s), c);
    }
    for (int b = 0; b < dc.n_bus; ++b) {
      const double c = dc.ptdf(l, b);
      shift += c * (pb_.bus_wind(s, b) - pb_.bus_load(s, b));
      if (std::abs(c) > 1e-12) row.entries.emplace_back(shed(b, s), c);
    }
    for (size_t w = 0; w < wind_bus_.size(); ++w) {
      const double c = dc.ptdf(l, wind_bus_[w]);
      if (std::abs(c) > 1e-12) row.entries.emplace_back(curt(static_cast<int>(w), s), -c);
    }
    const double limit = g.branches[l].flow_limit;
    row.lo = -limit - shift;
    row.up = limit - shift;
    return row;
  }

  // Pre-add every flow row (eager mode, used by the fixed-commitment solve).
  void add_all_flow_rows() {
    for (int l = 0; l < pb_.dc->n_branch; ++l)
      for (int s = 0; s < pb_.t; ++s) {
        if (added_.count({l, s})) continue;
        const LazyRow r = make_flow_row(l, s);
        lp_.add_row(r.lo, r.up, r.entries);
        added_.insert({l, s});
      }
  }

  void fix_commitment(const Mat& u01) {
    if (u01.rows != n_thermal() || u01.cols != pb_.t)
      throw std::invalid_argument("fix_commitment: schedule shape mismatch");
    for (int k = 0; k < n_thermal(); ++k)
      for (int s = 0; s < pb_.t; ++s) {
        const double v = u01(k, s) > 0.5 ? 1.0 : 0.0;
        lp_.set_col_bounds(u(k, s), v, v);
      }
  }

  ScucSolution extract(const MilpResult& r) const {
    ScucSolution sol;
    sol.nodes = r.nodes;
    sol.lp_iterations = r.lp_iterations;
    switch (r.status) {
      case MilpResult::Status::Optimal: sol.status = ScucSolution::Status::Optimal; break;
      case MilpResult::Status::GapLimited: sol.status = ScucSolution::Status::GapLimited; break;
      case MilpResult::Status::Infeasible: sol.status = ScucSolution::Status::Infeasible; return sol;
    }
    sol.objective = r.objective;
    sol.best_bound = r.best_bound;
    const int nu = n_thermal(), t = pb_.t;
    const int nb = pb_.dc->n_bus, q = pb_.dc->n_branch;
    sol.u = Mat(nu, t);
    sol.p = Mat(nu, t);
    sol.shed = Mat(t, nb);
    sol.curt = Mat(t, nb);
    sol.flows = Mat(t, q);
    for (int k = 0; k < nu; ++k)
      for (int s = 0; s < t; ++s) {
        sol.u(k, s) = r.x[u(k, s)] > 0.5 ? 1.0 : 0.0;
        sol.p(k, s) = std::clamp(r.x[p(k, s)], 0.0, pb_.grid->gens[thermal_[k]].p_max);
      }
    for (int b = 0; b < nb; ++b)
      for (int s = 0; s < t; ++s) sol.shed(s, b) = std::max(0.0, r.x[shed(b, s)]);
    for (size_t w = 0; w < wind_bus_.size(); ++w)
      for (int s = 0; s < t; ++s)
        sol.curt(s, wind_bus_[w]) = std::max(0.0, r.x[curt(static_cast<int>(w), s)]);
    for (int l = 0; l < q; ++l)
      for (int s = 0; s < t; ++s) sol.flows(s, l) = flow_at(r.x, l, s);
    return sol;
  }

 private:
  const ScucProblem& pb_;
  LpSolver lp_;
  std::vector<int> thermal_;
  std::vector<int> wind_bus_;
  std::vector<int> binaries_;
  std::set<std::pair<int, int>> added_;
  int iu_ = 0, iy_ = 0, iz_ = 0, ip_ = 0, ished_ = 0, icurt_ = 0;
};

inline ScucSolution solve_scuc(const ScucProblem& pb, const ScucConfig& cfg = {}) {
  ScucLp builder(pb);
  MilpOptions opt;
  opt.gap = cfg.gap;
  opt.int_tol = cfg.int_tol;
  opt.node_limit = cfg.node_limit;
  opt.lazy = [&builder](const std::vector<double>& x) { return builder.separate(x); };
  const MilpResult r = solve_milp(builder.lp(), builder.binaries(), opt);
  if (r.status == MilpResult::Status::Infeasible)
    throw std::runtime_error("scuc: MILP reported infeasible despite shed slacks");
  return builder.extract(r);
}

// Dispatch with the commitment schedule frozen: an LP over generation, shed
// and curtailment. Flow limits are optional so callers can measure shedding
// on a copper-plate network.
inline ScucSolution solve_dispatch_fixed_uc(const ScucProblem& pb, const Mat& uc,
                                            bool include_flow_limits = true,
                                            const ScucConfig& cfg = {}) {
  ScucLp builder(pb);
  builder.fix_commitment(uc);
  if (include_flow_limits) builder.add_all_flow_rows();
  MilpOptions opt;
  opt.gap = cfg.gap;
  opt.node_limit = 1;
  const MilpResult r = solve_milp(builder.lp(), {}, opt);
  return builder.extract(r);
}

struct CauseAwareShed {
  std::vector<double> total;       // per step, system MW
  std::vector<double> reserve;     // per step, system MW
  std::vector<double> nonreserve;  // per step, max(total - reserve, 0)
  Mat total_bus;                   // t x buses
  Mat reserve_bus;                 // t x buses
  int clamp_events = 0;            // entries where reserve exceeded total by > 1e-6
  ScucSolution milp;
  ScucSolution fixed;
};

// Dual-solve decomposition: the full MILP gives total shedding; re-dispatching
// under the MILP's commitment with line limits dropped isolates the part
// attributable to the commitment/reserve position; the remainder is charged
// to non-reserve (network) constraints.
inline CauseAwareShed cause_aware_shedding(const ScucProblem& pb, const ScucConfig& cfg = {}) {
  CauseAwareShed out;
  out.milp = solve_scuc(pb, cfg);
  out.fixed = solve_dispatch_fixed_uc(pb, out.milp.u, false, cfg);
  if (out.fixed.status == ScucSolution::Status::Infeasible)
    throw std::runtime_error("cause_aware: fixed-commitment dispatch infeasible");
  const int t = pb.t, nb = pb.dc->n_bus;
  out.total_bus = out.milp.shed;
  out.reserve_bus = out.fixed.shed;
  out.total.resize(t);
  out.reserve.resize(t);
  out.nonreserve.resize(t);
  for (int s = 0; s < t; ++s) {
    double tot = 0.0, res = 0.0;
    for (int b = 0; b < nb; ++b) {
      tot += out.milp.shed(s, b);
      res += out.fixed.shed(s, b);
    }
    out.total[s] = tot;
    out.reserve[s] = res;
    out.nonreserve[s] = std::max(tot - res, 0.0);
    if (res > tot + 1e-6) ++out.clamp_events;
  }
  return out;
}

struct QoiRecord {
  Mat gen_zonal;                // t x zones, thermal MW
  std::vector<double> gen_sys;  // t
  Mat shed_zonal;               // t x zones
  std::vector<double> shed_sys;
  Mat inj;                      // t x buses, net MW injection
  Mat flows;                    // t x branches, from PTDF on net injections
};

inline QoiRecord extract_qois(const ScucProblem& pb, const ScucSolution& sol) {
  const Grid& g = *pb.grid;
  const DcModel& dc = *pb.dc;
  const int t = pb.t, nz = static_cast<int>(g.zones.size()), nb = dc.n_bus;
  const std::vector<int> thermal = g.thermal_indices();
  QoiRecord q;
  q.gen_zonal = Mat(t, nz);
  q.shed_zonal = Mat(t, nz);
  q.gen_sys.assign(t, 0.0);
  q.shed_sys.assign(t, 0.0);
  q.inj = Mat(t, nb);
  q.flows = Mat(t, dc.n_branch);
  std::vector<int> bus_zone(nb);
  for (int b = 0; b < nb; ++b) bus_zone[b] = g.zone_index(g.buses[b].zone);
  std::vector<double> inj(nb);
  for (int s = 0; s < t; ++s) {
    for (int b = 0; b < nb; ++b)
      inj[b] = pb.bus_wind(s, b) - sol.curt(s, b) - pb.bus_load(s, b) + sol.shed(s, b);
    for (size_t k = 0; k < thermal.size(); ++k) {
      const Generator& gen = g.gens[thermal[k]];
      const double v = sol.p(static_cast<int>(k), s);
      q.gen_sys[s] += v;
      q.gen_zonal(s, bus_zone[g.bus_index(gen.bus)]) += v;
      inj[g.bus_index(gen.bus)] += v;
    }
    for (int b = 0; b < nb; ++b) {
      const double v = sol.shed(s, b);
      q.shed_sys[s] += v;
      q.shed_zonal(s, bus_zone[b]) += v;
      q.inj(s, b) = inj[b];
    }
    const std::vector<double> f = dc.flows(inj);
    for (int l = 0; l < dc.n_branch; ++l) q.flows(s, l) = f[l];
  }
  return q;
}

}  // namespace gridrisk
