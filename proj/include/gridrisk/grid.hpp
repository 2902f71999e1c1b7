#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridrisk/stats.hpp"

namespace gridrisk {

struct Bus {
  int id = 0;
  int zone = 0;
  double base_load = 0.0;       // MW, used to derive intra-zone load shares
  double wind_share = 0.0;      // fraction of its zone's wind power injected here
  double shed_cost_mult = 1.0;  // scales the system shed penalty at this bus
};

enum class GenKind { Thermal, Wind };

struct Generator {
  int id = 0;
  int bus = 0;
  GenKind kind = GenKind::Thermal;
  double p_min = 0.0;
  double p_max = 0.0;
  double cost_lin = 0.0;      // $/MWh
  double cost_noload = 0.0;   // $/h while committed
  double cost_startup = 0.0;  // $ per start
  double cost_shutdown = 0.0; // $ per stop
  int min_up = 1;             // hours
  int min_down = 1;           // hours
  double ramp = 0.0;          // MW/h, symmetric
  int u0 = 1;                 // committed before hour 1
  double p0 = 0.0;            // output before hour 1 (only meaningful if u0=1)
  int hours0 = 1;             // hours already spent in the initial state
};

struct Branch {
  int id = 0;
  int from = 0;
  int to = 0;
  double reactance = 0.0;   // p.u.
  double flow_limit = 0.0;  // MW, symmetric
};

struct Zone {
  int id = 0;
  MarginalSpec load;        // MW
  MarginalSpec wind_speed;  // m/s
  int n_turbines = 0;
};

struct Grid {
  std::string name = "case";
  double base_mva = 100.0;
  int slack_bus = 0;
  double shed_penalty = 1000.0;  // $/MWh base penalty for unserved load

  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Branch> branches;
  std::vector<Zone> zones;

  int bus_index(int id) const {
    for (size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return static_cast<int>(i);
    throw std::runtime_error("unknown bus id " + std::to_string(id));
  }

  int zone_index(int id) const {
    for (size_t i = 0; i < zones.size(); ++i)
      if (zones[i].id == id) return static_cast<int>(i);
    throw std::runtime_error("unknown zone id " + std::to_string(id));
  }

  // Per-bus share of its zone's load, r[i][j] in the disaggregation
  // L_bus = r * L_zone, derived from base_load and normalized per zone.
  std::vector<double> load_shares() const {
    std::vector<double> zone_total(zones.size(), 0.0);
    for (const Bus& b : buses) zone_total[zone_index(b.zone)] += b.base_load;
    std::vector<double> r(buses.size(), 0.0);
    for (size_t j = 0; j < buses.size(); ++j) {
      const double tot = zone_total[zone_index(buses[j].zone)];
      r[j] = tot > 0.0 ? buses[j].base_load / tot : 0.0;
    }
    return r;
  }

  double total_base_load() const {
    double s = 0.0;
    for (const Bus& b : buses) s += b.base_load;
    return s;
  }

  std::vector<int> thermal_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < gens.size(); ++i)
      if (gens[i].kind == GenKind::Thermal) out.push_back(static_cast<int>(i));
    return out;
  }

  void validate() const;
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const size_t pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline double to_num(const std::string& tok, const std::string& where) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": bad number '" + tok + "'");
  }
  if (used != tok.size()) throw std::runtime_error(where + ": bad number '" + tok + "'");
  return v;
}

inline int to_int(const std::string& tok, const std::string& where) {
  const double v = to_num(tok, where);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) throw std::runtime_error(where + ": expected integer '" + tok + "'");
  return i;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline void Grid::validate() const {
  if (buses.empty()) throw std::runtime_error("grid has no buses");
  if (zones.empty()) throw std::runtime_error("grid has no zones");

  std::map<int, int> bus_seen, zone_seen, gen_seen, br_seen;
  for (const Zone& z : zones) {
    if (zone_seen.count(z.id)) throw std::runtime_error("zone " + std::to_string(z.id) + ": duplicate id");
    zone_seen[z.id] = 1;
    if (z.n_turbines < 0) throw std::runtime_error("zone " + std::to_string(z.id) + ": negative turbine count");
  }
  for (const Bus& b : buses) {
    if (bus_seen.count(b.id)) throw std::runtime_error("bus " + std::to_string(b.id) + ": duplicate id");
    bus_seen[b.id] = 1;
    if (!zone_seen.count(b.zone))
      throw std::runtime_error("bus " + std::to_string(b.id) + ": unknown zone " + std::to_string(b.zone));
    if (b.base_load < 0.0) throw std::runtime_error("bus " + std::to_string(b.id) + ": negative base load");
    if (b.wind_share < 0.0) throw std::runtime_error("bus " + std::to_string(b.id) + ": negative wind share");
    if (b.shed_cost_mult <= 0.0)
      throw std::runtime_error("bus " + std::to_string(b.id) + ": shed cost multiplier must be positive");
  }
  if (!bus_seen.count(slack_bus))
    throw std::runtime_error("slack bus " + std::to_string(slack_bus) + " does not exist");

  for (const Generator& g : gens) {
    const std::string where = "gen " + std::to_string(g.id);
    if (gen_seen.count(g.id)) throw std::runtime_error(where + ": duplicate id");
    gen_seen[g.id] = 1;
    if (!bus_seen.count(g.bus)) throw std::runtime_error(where + ": unknown bus " + std::to_string(g.bus));
    if (g.p_min < 0.0 || g.p_min > g.p_max) throw std::runtime_error(where + ": need 0 <= p_min <= p_max");
    if (g.cost_lin < 0.0 || g.cost_noload < 0.0 || g.cost_startup < 0.0 || g.cost_shutdown < 0.0)
      throw std::runtime_error(where + ": costs must be nonnegative");
    if (g.kind == GenKind::Wind) {
      if (g.cost_lin != 0.0) throw std::runtime_error(where + ": wind generators must have zero linear cost");
      if (g.min_up != 0 || g.min_down != 0)
        throw std::runtime_error(where + ": wind generators must have min_up = min_down = 0");
      continue;
    }
    if (g.min_up < 1 || g.min_down < 1) throw std::runtime_error(where + ": min up/down must be >= 1 hour");
    if (g.ramp <= 0.0) throw std::runtime_error(where + ": ramp must be positive");
    if (g.u0 != 0 && g.u0 != 1) throw std::runtime_error(where + ": u0 must be 0 or 1");
    if (g.u0 == 1 && (g.p0 < g.p_min || g.p0 > g.p_max))
      throw std::runtime_error(where + ": initial output outside [p_min, p_max]");
    if (g.hours0 < 1) throw std::runtime_error(where + ": hours0 must be >= 1");
  }

  for (const Branch& br : branches) {
    const std::string where = "branch " + std::to_string(br.id);
    if (br_seen.count(br.id)) throw std::runtime_error(where + ": duplicate id");
    br_seen[br.id] = 1;
    if (!bus_seen.count(br.from)) throw std::runtime_error(where + ": unknown bus " + std::to_string(br.from));
    if (!bus_seen.count(br.to)) throw std::runtime_error(where + ": unknown bus " + std::to_string(br.to));
    if (br.from == br.to) throw std::runtime_error(where + ": from and to are the same bus");
    if (br.reactance <= 0.0) throw std::runtime_error(where + ": reactance must be positive");
    if (br.flow_limit <= 0.0) throw std::runtime_error(where + ": flow limit must be positive");
  }

  // Wind shares must form a unit partition within every zone that has turbines.
  for (const Zone& z : zones) {
    if (z.n_turbines == 0) continue;
    double s = 0.0;
    for (const Bus& b : buses)
      if (b.zone == z.id) s += b.wind_share;
    if (std::abs(s - 1.0) > 1e-9)
      throw std::runtime_error("zone " + std::to_string(z.id) + ": wind shares sum to " +
                               detail::fmt(s) + ", expected 1");
  }

  // Connectivity from the slack over branches.
  std::vector<int> reach(buses.size(), 0);
  std::vector<int> stack{bus_index(slack_bus)};
  reach[stack[0]] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const Branch& br : branches) {
      const int a = bus_index(br.from), b = bus_index(br.to);
      if (a == u && !reach[b]) { reach[b] = 1; stack.push_back(b); }
      if (b == u && !reach[a]) { reach[a] = 1; stack.push_back(a); }
    }
  }
  for (size_t i = 0; i < buses.size(); ++i)
    if (!reach[i])
      throw std::runtime_error("grid is not connected: bus " + std::to_string(buses[i].id) +
                               " unreachable from slack");
}

inline Grid parse_grid(std::istream& in) {
  Grid g;
  g.slack_bus = -1;
  std::string section, line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    const std::vector<std::string> tok = detail::tokenize(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (tok[0].front() == '[') {
      if (tok.size() != 1 || tok[0].back() != ']')
        throw std::runtime_error(where + ": malformed section header");
      section = tok[0].substr(1, tok[0].size() - 2);
      continue;
    }
    if (section == "meta") {
      if (tok.size() != 2) throw std::runtime_error(where + ": meta entries are 'key value'");
      if (tok[0] == "name") g.name = tok[1];
      else if (tok[0] == "base_mva") g.base_mva = detail::to_num(tok[1], where);
      else if (tok[0] == "slack_bus") g.slack_bus = detail::to_int(tok[1], where);
      else if (tok[0] == "shed_penalty") g.shed_penalty = detail::to_num(tok[1], where);
      else throw std::runtime_error(where + ": unknown meta key '" + tok[0] + "'");
    } else if (section == "bus") {
      if (tok.size() < 3 || tok.size() > 5)
        throw std::runtime_error(where + ": bus needs 'id zone base_load [wind_share [shed_cost_mult]]'");
      Bus b;
      b.id = detail::to_int(tok[0], where);
      b.zone = detail::to_int(tok[1], where);
      b.base_load = detail::to_num(tok[2], where);
      if (tok.size() > 3) b.wind_share = detail::to_num(tok[3], where);
      if (tok.size() > 4) b.shed_cost_mult = detail::to_num(tok[4], where);
      g.buses.push_back(b);
    } else if (section == "gen") {
      if (tok.size() != 12 && tok.size() != 15)
        throw std::runtime_error(where +
                                 ": gen needs 'id bus kind pmin pmax cost_lin cost_noload startup shutdown "
                                 "min_up min_down ramp [u0 p0 hours0]'");
      Generator gn;
      gn.id = detail::to_int(tok[0], where);
      gn.bus = detail::to_int(tok[1], where);
      if (tok[2] == "thermal") gn.kind = GenKind::Thermal;
      else if (tok[2] == "wind") gn.kind = GenKind::Wind;
      else throw std::runtime_error(where + ": generator kind must be 'thermal' or 'wind'");
      gn.p_min = detail::to_num(tok[3], where);
      gn.p_max = detail::to_num(tok[4], where);
      gn.cost_lin = detail::to_num(tok[5], where);
      gn.cost_noload = detail::to_num(tok[6], where);
      gn.cost_startup = detail::to_num(tok[7], where);
      gn.cost_shutdown = detail::to_num(tok[8], where);
      gn.min_up = detail::to_int(tok[9], where);
      gn.min_down = detail::to_int(tok[10], where);
      gn.ramp = detail::to_num(tok[11], where);
      if (tok.size() == 15) {
        gn.u0 = detail::to_int(tok[12], where);
        gn.p0 = detail::to_num(tok[13], where);
        gn.hours0 = detail::to_int(tok[14], where);
      } else {
        gn.u0 = 1;
        gn.p0 = gn.p_min;
        gn.hours0 = std::max(gn.min_up, 1);
      }
      g.gens.push_back(gn);
    } else if (section == "branch") {
      if (tok.size() != 5)
        throw std::runtime_error(where + ": branch needs 'id from to reactance flow_limit'");
      Branch br;
      br.id = detail::to_int(tok[0], where);
      br.from = detail::to_int(tok[1], where);
      br.to = detail::to_int(tok[2], where);
      br.reactance = detail::to_num(tok[3], where);
      br.flow_limit = detail::to_num(tok[4], where);
      g.branches.push_back(br);
    } else if (section == "zone") {
      if (tok.size() != 8)
        throw std::runtime_error(
            where + ": zone needs 'id load_mu load_sigma load_min load_max wind_k wind_lambda n_turbines'");
      Zone z;
      z.id = detail::to_int(tok[0], where);
      z.load = MarginalSpec::trunc_normal(detail::to_num(tok[1], where), detail::to_num(tok[2], where),
                                          detail::to_num(tok[3], where), detail::to_num(tok[4], where));
      z.wind_speed = MarginalSpec::weibull(detail::to_num(tok[5], where), detail::to_num(tok[6], where));
      z.n_turbines = detail::to_int(tok[7], where);
      g.zones.push_back(z);
    } else if (section.empty()) {
      throw std::runtime_error(where + ": data before any [section]");
    } else {
      throw std::runtime_error(where + ": unknown section '" + section + "'");
    }
  }
  if (g.slack_bus < 0 && !g.buses.empty()) g.slack_bus = g.buses.front().id;
  g.validate();
  return g;
}

inline Grid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file " + path);
  try {
    return parse_grid(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

inline std::string serialize_grid(const Grid& g) {
  using detail::fmt;
  std::string out;
  out += "[meta]\n";
  out += "name " + g.name + "\n";
  out += "base_mva " + fmt(g.base_mva) + "\n";
  out += "slack_bus " + std::to_string(g.slack_bus) + "\n";
  out += "shed_penalty " + fmt(g.shed_penalty) + "\n";
  out += "\n[bus]\n# id zone base_load wind_share shed_cost_mult\n";
  for (const Bus& b : g.buses)
    out += std::to_string(b.id) + " " + std::to_string(b.zone) + " " + fmt(b.base_load) + " " +
           fmt(b.wind_share) + " " + fmt(b.shed_cost_mult) + "\n";
  out += "\n[gen]\n# id bus kind pmin pmax cost_lin cost_noload startup shutdown min_up min_down ramp u0 p0 hours0\n";
  for (const Generator& gn : g.gens)
    out += std::to_string(gn.id) + " " + std::to_string(gn.bus) + " " +
           (gn.kind == GenKind::Thermal ? "thermal" : "wind") + " " + fmt(gn.p_min) + " " +
           fmt(gn.p_max) + " " + fmt(gn.cost_lin) + " " + fmt(gn.cost_noload) + " " +
           fmt(gn.cost_startup) + " " + fmt(gn.cost_shutdown) + " " + std::to_string(gn.min_up) + " " +
           std::to_string(gn.min_down) + " " + fmt(gn.ramp) + " " + std::to_string(gn.u0) + " " +
           fmt(gn.p0) + " " + std::to_string(gn.hours0) + "\n";
  out += "\n[branch]\n# id from to reactance flow_limit\n";
  for (const Branch& br : g.branches)
    out += std::to_string(br.id) + " " + std::to_string(br.from) + " " + std::to_string(br.to) + " " +
           fmt(br.reactance) + " " + fmt(br.flow_limit) + "\n";
  out += "\n[zone]\n# id load_mu load_sigma load_min load_max wind_k wind_lambda n_turbines\n";
  for (const Zone& z : g.zones)
    out += std::to_string(z.id) + " " + fmt(z.load.tn.mu) + " " + fmt(z.load.tn.sigma) + " " +
           fmt(z.load.tn.a) + " " + fmt(z.load.tn.b) + " " + fmt(z.wind_speed.wb.k) + " " +
           fmt(z.wind_speed.wb.lambda) + " " + std::to_string(z.n_turbines) + "\n";
  return out;
}

inline void save_grid(const Grid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write grid file " + path);
  out << serialize_grid(g);
}

}  // namespace gridrisk
