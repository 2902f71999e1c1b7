#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/ptdf.hpp"
#include "gridrisk/scenario.hpp"
#include "gridrisk/scuc.hpp"

namespace gridrisk {

enum class LabelStatus { Optimal, GapLimited, Failed };

inline const char* label_status_name(LabelStatus s) {
  switch (s) {
    case LabelStatus::Optimal:
      return "optimal";
    case LabelStatus::GapLimited:
      return "gap_limited";
    default:
      return "failed";
  }
}

inline LabelStatus parse_label_status(const std::string& s) {
  if (s == "optimal") return LabelStatus::Optimal;
  if (s == "gap_limited") return LabelStatus::GapLimited;
  if (s == "failed") return LabelStatus::Failed;
  throw std::runtime_error("unknown label status '" + s + "'");
}

// Everything downstream consumers need from one solved scenario: zonal and
// system aggregates for the surrogate targets, net injections for the flow
// head, and the reserve/non-reserve shedding split.
struct LabelRecord {
  int scenario = 0;
  LabelStatus status = LabelStatus::Failed;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int clamp_events = 0;
  std::vector<double> gen_sys;          // per step, thermal MW
  std::vector<double> shed_sys;         // per step, MW
  std::vector<double> shed_reserve;     // per step, MW attributed to the reserve position
  std::vector<double> shed_nonreserve;  // per step, MW
  Mat gen_zonal;                        // t x zones
  Mat shed_zonal;                       // t x zones
  Mat inj;                              // t x buses, net MW injection
  Mat flows;                            // t x branches, MW

  bool usable() const { return status != LabelStatus::Failed; }
};

struct LabelSet {
  int t = 0;
  std::string config_hash;
  std::vector<int> zone_ids;
  std::vector<int> bus_ids;
  std::vector<int> branch_ids;
  std::vector<LabelRecord> records;

  int n_usable() const {
    int k = 0;
    for (const LabelRecord& r : records) k += r.usable() ? 1 : 0;
    return k;
  }
};

inline LabelRecord label_scenario(const Grid& g, const DcModel& dc, const ScenarioSet& s,
                                  int scen, const ScucConfig& cfg = {}) {
  const int t = s.t;
  LabelRecord rec;
  rec.scenario = scen;
  rec.gen_sys.assign(t, 0.0);
  rec.shed_sys.assign(t, 0.0);
  rec.shed_reserve.assign(t, 0.0);
  rec.shed_nonreserve.assign(t, 0.0);
  rec.gen_zonal = Mat(t, static_cast<int>(g.zones.size()));
  rec.shed_zonal = Mat(t, static_cast<int>(g.zones.size()));
  rec.inj = Mat(t, static_cast<int>(g.buses.size()));
  rec.flows = Mat(t, static_cast<int>(g.branches.size()));
  try {
    const ScucProblem pb = make_scuc_problem(g, dc, s, scen, cfg);
    const CauseAwareShed ca = cause_aware_shedding(pb, cfg);
    if (!std::isfinite(ca.milp.objective)) return rec;  // node limit hit before any incumbent
    const QoiRecord qoi = extract_qois(pb, ca.milp);
    rec.status = ca.milp.status == ScucSolution::Status::Optimal ? LabelStatus::Optimal
                                                                 : LabelStatus::GapLimited;
    rec.objective = ca.milp.objective;
    rec.clamp_events = ca.clamp_events;
    rec.gen_sys = qoi.gen_sys;
    rec.shed_sys = qoi.shed_sys;
    rec.shed_reserve = ca.reserve;
    rec.shed_nonreserve = ca.nonreserve;
    rec.gen_zonal = qoi.gen_zonal;
    rec.shed_zonal = qoi.shed_zonal;
    rec.inj = qoi.inj;
    rec.flows = qoi.flows;
  } catch (const std::exception&) {
    rec.status = LabelStatus::Failed;
  }
  return rec;
}

namespace detail {

inline std::string join_ids(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> split_ids(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';'))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_num(const std::string& tok, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw std::runtime_error("labels: bad number '" + tok + "' in " + where);
  return v;
}

}  // namespace detail

// Wide CSV, one row per (scenario, step). The first line is a self-describing
// header so readers never guess shapes; a part file is the same format with a
// single scenario in it.
inline void write_labels_csv(const LabelSet& set, const std::string& path) {
  const int nz = static_cast<int>(set.zone_ids.size());
  const int nb = static_cast<int>(set.bus_ids.size());
  const int q = static_cast<int>(set.branch_ids.size());
  std::ostringstream out;
  out << "# gridrisk-labels v1 hash=" << (set.config_hash.empty() ? "none" : set.config_hash)
      << " n=" << set.records.size() << " t=" << set.t << " zones=" << detail::join_ids(set.zone_ids)
      << " buses=" << detail::join_ids(set.bus_ids)
      << " branches=" << detail::join_ids(set.branch_ids) << "\n";
  out << "scenario,t,status,objective,clamp_events,gen_sys,shed_sys,shed_reserve,shed_nonreserve";
  for (int id : set.zone_ids) out << ",gen_z" << id;
  for (int id : set.zone_ids) out << ",shed_z" << id;
  for (int id : set.bus_ids) out << ",inj_b" << id;
  for (int id : set.branch_ids) out << ",flow_" << id;
  out << "\n";
  for (const LabelRecord& rec : set.records) {
    for (int step = 0; step < set.t; ++step) {
      out << rec.scenario << ',' << step << ',' << label_status_name(rec.status) << ','
          << detail::fmt17(rec.objective) << ',' << rec.clamp_events << ','
          << detail::fmt17(rec.gen_sys[step]) << ',' << detail::fmt17(rec.shed_sys[step]) << ','
          << detail::fmt17(rec.shed_reserve[step]) << ','
          << detail::fmt17(rec.shed_nonreserve[step]);
      for (int z = 0; z < nz; ++z) out << ',' << detail::fmt17(rec.gen_zonal(step, z));
      for (int z = 0; z < nz; ++z) out << ',' << detail::fmt17(rec.shed_zonal(step, z));
      for (int b = 0; b < nb; ++b) out << ',' << detail::fmt17(rec.inj(step, b));
      for (int l = 0; l < q; ++l) out << ',' << detail::fmt17(rec.flows(step, l));
      out << "\n";
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("labels: cannot write " + tmp);
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

inline LabelSet read_labels_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("labels: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("# gridrisk-labels v1 ", 0) != 0)
    throw std::runtime_error("labels: missing header in " + path);

  LabelSet set;
  int n = -1;
  {
    std::stringstream ss(line.substr(2));
    std::string tok;
    while (ss >> tok) {
      const size_t eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "hash")
        set.config_hash = val == "none" ? "" : val;
      else if (key == "n")
        n = std::stoi(val);
      else if (key == "t")
        set.t = std::stoi(val);
      else if (key == "zones")
        set.zone_ids = detail::split_ids(val);
      else if (key == "buses")
        set.bus_ids = detail::split_ids(val);
      else if (key == "branches")
        set.branch_ids = detail::split_ids(val);
    }
  }
  if (n < 0 || set.t <= 0) throw std::runtime_error("labels: malformed header in " + path);
  if (!std::getline(f, line)) throw std::runtime_error("labels: missing column header in " + path);

  const int nz = static_cast<int>(set.zone_ids.size());
  const int nb = static_cast<int>(set.bus_ids.size());
  const int q = static_cast<int>(set.branch_ids.size());
  const size_t want_cols = 9 + 2 * static_cast<size_t>(nz) + nb + q;

  LabelRecord* cur = nullptr;
  int lineno = 2;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const std::vector<std::string> c = detail::split_csv(line);
    if (c.size() != want_cols)
      throw std::runtime_error("labels: expected " + std::to_string(want_cols) + " columns, got " +
                               std::to_string(c.size()) + " at " + where);
    const int scen = static_cast<int>(detail::parse_num(c[0], where));
    const int step = static_cast<int>(detail::parse_num(c[1], where));
    if (cur == nullptr || cur->scenario != scen) {
      if (step != 0) throw std::runtime_error("labels: scenario block not starting at t=0 at " + where);
      set.records.emplace_back();
      cur = &set.records.back();
      cur->scenario = scen;
      cur->status = parse_label_status(c[2]);
      cur->objective = detail::parse_num(c[3], where);
      cur->clamp_events = static_cast<int>(detail::parse_num(c[4], where));
      cur->gen_sys.assign(set.t, 0.0);
      cur->shed_sys.assign(set.t, 0.0);
      cur->shed_reserve.assign(set.t, 0.0);
      cur->shed_nonreserve.assign(set.t, 0.0);
      cur->gen_zonal = Mat(set.t, nz);
      cur->shed_zonal = Mat(set.t, nz);
      cur->inj = Mat(set.t, nb);
      cur->flows = Mat(set.t, q);
    }
    if (step < 0 || step >= set.t) throw std::runtime_error("labels: step out of range at " + where);
    cur->gen_sys[step] = detail::parse_num(c[5], where);
    cur->shed_sys[step] = detail::parse_num(c[6], where);
    cur->shed_reserve[step] = detail::parse_num(c[7], where);
    cur->shed_nonreserve[step] = detail::parse_num(c[8], where);
    int k = 9;
    for (int z = 0; z < nz; ++z) cur->gen_zonal(step, z) = detail::parse_num(c[k++], where);
    for (int z = 0; z < nz; ++z) cur->shed_zonal(step, z) = detail::parse_num(c[k++], where);
    for (int b = 0; b < nb; ++b) cur->inj(step, b) = detail::parse_num(c[k++], where);
    for (int l = 0; l < q; ++l) cur->flows(step, l) = detail::parse_num(c[k++], where);
  }
  if (static_cast<int>(set.records.size()) != n)
    throw std::runtime_error("labels: header announced " + std::to_string(n) + " scenarios, found " +
                             std::to_string(set.records.size()) + " in " + path);
  return set;
}

struct LabelJob {
  std::string parts_dir;    // empty disables part files and resume
  std::string config_hash;  // stamped into parts and the merged set
  int jobs = 1;
  ScucConfig scuc;
};

struct LabelRunInfo {
  int solved = 0;
  int reused = 0;
  int failed = 0;
  std::vector<double> seconds;  // per scenario, 0 when a part was reused
};

inline std::string label_part_path(const std::string& dir, int scen) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%05d.csv", scen);
  return dir + "/" + buf;
}

// Labels every scenario in the set. With a parts directory, finished scenarios
// are persisted one file each (written to a temp name, then renamed) and a
// restarted run re-solves only what is missing or stale. Results do not depend
// on the worker count because records land at their scenario index.
inline LabelSet label_scenarios(const Grid& g, const DcModel& dc, const ScenarioSet& s,
                                const LabelJob& job, LabelRunInfo* info = nullptr) {
  LabelSet set;
  set.t = s.t;
  set.config_hash = job.config_hash;
  for (const Zone& z : g.zones) set.zone_ids.push_back(z.id);
  for (const Bus& b : g.buses) set.bus_ids.push_back(b.id);
  for (const Branch& br : g.branches) set.branch_ids.push_back(br.id);
  set.records.resize(s.n);

  LabelRunInfo local;
  LabelRunInfo& ri = info ? *info : local;
  ri.solved = ri.reused = ri.failed = 0;
  ri.seconds.assign(s.n, 0.0);

  const bool use_parts = !job.parts_dir.empty();
  if (use_parts) std::filesystem::create_directories(job.parts_dir);

  std::atomic<int> next{0}, solved{0}, reused{0}, failed{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    try {
      for (;;) {
        const int scen = next.fetch_add(1);
        if (scen >= s.n) return;
        LabelRecord rec;
        bool from_part = false;
        if (use_parts) {
          try {
            LabelSet part = read_labels_csv(label_part_path(job.parts_dir, scen));
            if (part.records.size() == 1 && part.records[0].scenario == scen && part.t == s.t &&
                part.config_hash == set.config_hash && part.zone_ids == set.zone_ids &&
                part.bus_ids == set.bus_ids && part.branch_ids == set.branch_ids) {
              rec = std::move(part.records[0]);
              from_part = true;
            }
          } catch (const std::exception&) {
            // missing or stale part, fall through to a fresh solve
          }
        }
        if (!from_part) {
          const auto t0 = std::chrono::steady_clock::now();
          rec = label_scenario(g, dc, s, scen, job.scuc);
          ri.seconds[scen] =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          if (use_parts) {
            LabelSet one;
            one.t = set.t;
            one.config_hash = set.config_hash;
            one.zone_ids = set.zone_ids;
            one.bus_ids = set.bus_ids;
            one.branch_ids = set.branch_ids;
            one.records.push_back(rec);
            write_labels_csv(one, label_part_path(job.parts_dir, scen));
          }
        }
        (from_part ? reused : solved).fetch_add(1);
        if (rec.status == LabelStatus::Failed) failed.fetch_add(1);
        set.records[scen] = std::move(rec);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int n_workers = std::max(1, job.jobs);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  ri.solved = solved.load();
  ri.reused = reused.load();
  ri.failed = failed.load();
  return set;
}

}  // namespace gridrisk
