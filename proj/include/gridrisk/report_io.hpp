#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridrisk/risk.hpp"
#include "gridrisk/scenario.hpp"

namespace gridrisk {

namespace detail {

using json = nlohmann::json;

inline json estimate_json(const Estimate& e) {
  json j;
  j["value"] = e.defined ? json(e.value) : json(nullptr);
  j["count"] = e.count;
  return j;
}

inline json risk_json(const RiskValue& rv) {
  json j;
  j["standalone"] = rv.standalone;
  if (rv.windowed) {
    j["future"] = rv.future;
    j["combined"] = rv.total;
  } else {
    j["future"] = nullptr;
    j["combined"] = nullptr;
  }
  return j;
}

inline json estimate_mat_json(const EstimateMat& m, const std::vector<int>& ids) {
  json j;
  j["branch_ids"] = ids;
  json rows = json::array();
  for (int a = 0; a < m.value.rows; ++a) {
    json row = json::array();
    for (int b = 0; b < m.value.cols; ++b) {
      if (m.count(a, b) > 0.0)
        row.push_back(m.value(a, b));
      else
        row.push_back(nullptr);
    }
    rows.push_back(std::move(row));
  }
  j["p"] = std::move(rows);
  json counts = json::array();
  for (int a = 0; a < m.count.rows; ++a) counts.push_back(static_cast<long>(m.count(a, 0)));
  j["conditioning_counts"] = std::move(counts);
  return j;
}

inline json curve_json(const CostCurve& c) {
  json segs = json::array();
  for (const CostCurve::Segment& s : c.segments) {
    json seg;
    seg["upto"] = std::isfinite(s.upto) ? json(s.upto) : json(nullptr);
    seg["rate"] = s.rate;
    segs.push_back(std::move(seg));
  }
  return segs;
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("report: cannot write " + tmp);
    f << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline void write_report_json(const RiskReport& rep, const std::string& path) {
  using detail::json;
  json j;
  j["source"] = rep.source;
  j["config_hash"] = rep.config_hash;
  j["samples"] = rep.n;
  j["horizon"] = rep.t;
  j["delta_t"] = rep.delta_t;
  j["eps"] = rep.eps;
  j["shed_tolerance"] = rep.shed_tolerance;
  j["discount"] = rep.discount;
  j["shed_curve"] = detail::curve_json(rep.shed_curve);
  j["overload_curve"] = detail::curve_json(rep.overload_curve);
  j["zone_ids"] = rep.zone_ids;
  j["branch_ids"] = rep.branch_ids;
  j["significant_branch_ids"] = rep.set_branch_ids;

  json shed = json::array();
  for (const ScopeShedSeries& s : rep.shed) {
    json js;
    js["scope"] = s.scope_id < 0 ? json("system") : json(s.scope_id);
    json ps = json::array(), pm = json::array(), rk = json::array();
    for (int step = 0; step < rep.t; ++step) {
      ps.push_back(detail::estimate_json(s.p_standalone[step]));
      pm.push_back(detail::estimate_json(s.p_multistep[step]));
      rk.push_back(detail::risk_json(s.risk[step]));
    }
    js["p_standalone"] = std::move(ps);
    js["p_multistep"] = std::move(pm);
    js["risk"] = std::move(rk);
    shed.push_back(std::move(js));
  }
  j["shedding"] = std::move(shed);

  json ovl = json::array();
  for (const BranchOverloadSeries& b : rep.overload) {
    json jb;
    jb["branch_id"] = b.branch_id;
    json ps = json::array(), pm = json::array(), rk = json::array();
    for (int step = 0; step < rep.t; ++step) {
      ps.push_back(detail::estimate_json(b.p_standalone[step]));
      pm.push_back(detail::estimate_json(b.p_multistep[step]));
      rk.push_back(detail::risk_json(b.risk[step]));
    }
    jb["p_standalone"] = std::move(ps);
    jb["p_multistep"] = std::move(pm);
    jb["risk"] = std::move(rk);
    ovl.push_back(std::move(jb));
  }
  j["overload"] = std::move(ovl);

  json osys = json::array();
  for (int step = 0; step < rep.t; ++step)
    osys.push_back(detail::risk_json(rep.overload_system[step]));
  j["overload_system_risk"] = std::move(osys);

  json cond = json::array();
  for (const ConditionalBlock& blk : rep.conditionals) {
    json jc;
    jc["t"] = blk.t;
    jc["standalone"] = detail::estimate_mat_json(blk.standalone, rep.set_branch_ids);
    jc["multistep_union"] = detail::estimate_mat_json(blk.multistep_union, rep.set_branch_ids);
    json slices = json::array();
    for (size_t dt = 0; dt < blk.per_step.size(); ++dt) {
      json slice = detail::estimate_mat_json(blk.per_step[dt], rep.set_branch_ids);
      slice["dt"] = static_cast<int>(dt) + 1;
      slices.push_back(std::move(slice));
    }
    jc["per_step"] = std::move(slices);
    cond.push_back(std::move(jc));
  }
  j["conditional_overload"] = std::move(cond);

  detail::write_text_atomic(path, j.dump(2) + "\n");
}

// Flat per-series CSVs for external plotting, one file per metric family.
inline void write_report_csvs(const RiskReport& rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ostringstream out;
    out << "scope,t,p_standalone,n,p_multistep,conditioning_count\n";
    for (const ScopeShedSeries& s : rep.shed) {
      const std::string scope = s.scope_id < 0 ? "system" : "zone_" + std::to_string(s.scope_id);
      for (int step = 0; step < rep.t; ++step) {
        out << scope << ',' << step << ',' << detail::fmt17(s.p_standalone[step].value) << ','
            << s.p_standalone[step].count << ',';
        if (s.p_multistep[step].defined)
          out << detail::fmt17(s.p_multistep[step].value);
        out << ',' << s.p_multistep[step].count << "\n";
      }
    }
    detail::write_text_atomic(dir + "/shed_probability.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "scope,t,standalone,future,combined\n";
    for (const ScopeShedSeries& s : rep.shed) {
      const std::string scope = s.scope_id < 0 ? "system" : "zone_" + std::to_string(s.scope_id);
      for (int step = 0; step < rep.t; ++step) {
        const RiskValue& rv = s.risk[step];
        out << scope << ',' << step << ',' << detail::fmt17(rv.standalone) << ',';
        if (rv.windowed)
          out << detail::fmt17(rv.future) << ',' << detail::fmt17(rv.total);
        else
          out << ',';
        out << "\n";
      }
    }
    detail::write_text_atomic(dir + "/shed_risk.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "branch,t,p_standalone,n,p_multistep,conditioning_count\n";
    for (const BranchOverloadSeries& b : rep.overload) {
      for (int step = 0; step < rep.t; ++step) {
        out << b.branch_id << ',' << step << ',' << detail::fmt17(b.p_standalone[step].value)
            << ',' << b.p_standalone[step].count << ',';
        if (b.p_multistep[step].defined)
          out << detail::fmt17(b.p_multistep[step].value);
        out << ',' << b.p_multistep[step].count << "\n";
      }
    }
    detail::write_text_atomic(dir + "/overload_probability.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "branch,t,standalone,future,combined\n";
    for (const BranchOverloadSeries& b : rep.overload) {
      for (int step = 0; step < rep.t; ++step) {
        const RiskValue& rv = b.risk[step];
        out << b.branch_id << ',' << step << ',' << detail::fmt17(rv.standalone) << ',';
        if (rv.windowed)
          out << detail::fmt17(rv.future) << ',' << detail::fmt17(rv.total);
        else
          out << ',';
        out << "\n";
      }
    }
    for (int step = 0; step < rep.t; ++step) {
      const RiskValue& rv = rep.overload_system[step];
      out << "system," << step << ',' << detail::fmt17(rv.standalone) << ',';
      if (rv.windowed)
        out << detail::fmt17(rv.future) << ',' << detail::fmt17(rv.total);
      else
        out << ',';
      out << "\n";
    }
    detail::write_text_atomic(dir + "/overload_risk.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "t,kind,dt,given_branch,branch,p,conditioning_count\n";
    for (const ConditionalBlock& blk : rep.conditionals) {
      auto emit = [&](const EstimateMat& m, const std::string& kind, int dt) {
        for (int a = 0; a < m.value.rows; ++a)
          for (int b = 0; b < m.value.cols; ++b) {
            out << blk.t << ',' << kind << ',';
            if (dt > 0)
              out << dt;
            out << ',' << rep.set_branch_ids[a] << ',' << rep.set_branch_ids[b] << ',';
            if (m.count(a, b) > 0.0)
              out << detail::fmt17(m.value(a, b));
            out << ',' << static_cast<long>(m.count(a, b)) << "\n";
          }
      };
      emit(blk.standalone, "standalone", 0);
      emit(blk.multistep_union, "multistep_union", 0);
      for (size_t dt = 0; dt < blk.per_step.size(); ++dt)
        emit(blk.per_step[dt], "per_step", static_cast<int>(dt) + 1);
    }
    detail::write_text_atomic(dir + "/conditional_overload.csv", out.str());
  }
}

inline void write_divergence_csv(const Divergence& d, const std::string& path) {
  std::ostringstream out;
  out << "metric,scope,t,reference,candidate,divergence,kind,comparable\n";
  for (const DivergenceRow& r : d.rows) {
    out << r.metric << ',' << r.scope << ',' << r.t << ',' << detail::fmt17(r.ref) << ','
        << detail::fmt17(r.other) << ',' << detail::fmt17(r.diff) << ','
        << (r.is_probability ? "abs" : "rel") << ',' << (r.comparable ? 1 : 0) << "\n";
  }
  detail::write_text_atomic(path, out.str());
}

}  // namespace gridrisk
