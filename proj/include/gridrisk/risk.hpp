#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/labels.hpp"
#include "gridrisk/matrix.hpp"

namespace gridrisk {

// Marginal cost rate in $/MW as a piecewise-constant function of the MW level;
// the resulting cost integral is piecewise linear and evaluated in closed form.
struct CostCurve {
  struct Segment {
    double upto = std::numeric_limits<double>::infinity();  // MW upper edge
    double rate = 0.0;                                      // $/MW on (prev, upto]
  };
  std::vector<Segment> segments;

  static CostCurve constant(double rate) {
    CostCurve c;
    c.segments.push_back({std::numeric_limits<double>::infinity(), rate});
    c.validate();
    return c;
  }

  static CostCurve table(std::vector<Segment> segs) {
    CostCurve c;
    c.segments = std::move(segs);
    c.validate();
    return c;
  }

  void validate() const {
    if (segments.empty()) throw std::invalid_argument("cost curve: no segments");
    double prev = 0.0;
    for (size_t i = 0; i < segments.size(); ++i) {
      if (!(segments[i].rate >= 0.0)) throw std::invalid_argument("cost curve: negative rate");
      if (!(segments[i].upto > prev)) throw std::invalid_argument("cost curve: edges not increasing");
      prev = segments[i].upto;
    }
    if (std::isfinite(segments.back().upto))
      throw std::invalid_argument("cost curve: last segment must be unbounded");
  }

  double integral(double x) const {
    if (!(x > 0.0)) return 0.0;
    double total = 0.0, lo = 0.0;
    for (const Segment& s : segments) {
      const double hi = std::min(x, s.upto);
      if (hi > lo) total += s.rate * (hi - lo);
      if (x <= s.upto) break;
      lo = s.upto;
    }
    return total;
  }

  bool operator==(const CostCurve& o) const {
    if (segments.size() != o.segments.size()) return false;
    for (size_t i = 0; i < segments.size(); ++i)
      if (segments[i].upto != o.segments[i].upto || segments[i].rate != o.segments[i].rate)
        return false;
    return true;
  }
};

inline double shed_cost(double psi_mw, const CostCurve& curve) { return curve.integral(psi_mw); }

inline double overload_cost(double gamma_mw, double gamma_max, double eps,
                            const CostCurve& curve) {
  if (!(gamma_max > 0.0)) throw std::invalid_argument("overload_cost: gamma_max must be positive");
  const double excess = gamma_mw - eps * gamma_max;
  return excess > 0.0 ? curve.integral(excess) : 0.0;
}

// Sample arrays feeding the estimators. Scope order is zones in grid order
// followed by the system total; flows are signed MW, one matrix per branch.
struct RiskInputs {
  int n = 0, t = 0;
  std::vector<int> zone_ids;
  std::vector<int> branch_ids;
  std::vector<double> gamma_max;  // per branch
  std::vector<Mat> shed_mw;       // per scope, n x t
  std::vector<Mat> flow_mw;       // per branch, n x t
  std::vector<int> scenarios;     // original scenario indices backing row i
  std::string source;             // "milp" or "gnn"
  std::string config_hash;
};

inline RiskInputs risk_inputs_from_labels(const Grid& g, const LabelSet& labels) {
  RiskInputs in;
  in.t = labels.t;
  in.zone_ids = labels.zone_ids;
  in.branch_ids = labels.branch_ids;
  for (int id : labels.branch_ids) {
    bool found = false;
    for (const Branch& br : g.branches)
      if (br.id == id) {
        in.gamma_max.push_back(br.flow_limit);
        found = true;
        break;
      }
    if (!found) throw std::invalid_argument("risk inputs: branch id not in grid");
  }
  const int nz = static_cast<int>(labels.zone_ids.size());
  const int q = static_cast<int>(labels.branch_ids.size());
  for (const LabelRecord& rec : labels.records)
    if (rec.usable()) in.scenarios.push_back(rec.scenario);
  in.n = static_cast<int>(in.scenarios.size());
  if (in.n == 0) throw std::invalid_argument("risk inputs: no usable labels");
  in.shed_mw.assign(nz + 1, Mat(in.n, in.t));
  in.flow_mw.assign(q, Mat(in.n, in.t));
  in.source = "milp";
  in.config_hash = labels.config_hash;
  int row = 0;
  for (const LabelRecord& rec : labels.records) {
    if (!rec.usable()) continue;
    for (int step = 0; step < in.t; ++step) {
      for (int z = 0; z < nz; ++z) in.shed_mw[z](row, step) = rec.shed_zonal(step, z);
      in.shed_mw[nz](row, step) = rec.shed_sys[step];
      for (int l = 0; l < q; ++l) in.flow_mw[l](row, step) = rec.flows(step, l);
    }
    ++row;
  }
  return in;
}

struct RiskConfig {
  double shed_tolerance = 1e-3;  // MW before a scope counts as shedding
  double eps = 0.85;             // overload at |flow| > eps * limit
  int delta_t = 2;               // future window, hours
  CostCurve shed_curve = CostCurve::constant(10.0);
  CostCurve overload_curve = CostCurve::constant(1.0);
  bool discount = false;         // scale future terms by 1/(1+dt)
  std::vector<int> branch_set;   // branch indices in risk sums and matrices; empty = all
};

struct IndicatorSeries {
  std::vector<Mat> shed;      // per scope, n x t, entries 0/1
  std::vector<Mat> overload;  // per branch, n x t
};

inline IndicatorSeries build_indicators(const RiskInputs& in, const RiskConfig& cfg) {
  IndicatorSeries ind;
  ind.shed.reserve(in.shed_mw.size());
  for (const Mat& s : in.shed_mw) {
    Mat b(s.rows, s.cols);
    for (size_t k = 0; k < s.a.size(); ++k) b.a[k] = s.a[k] > cfg.shed_tolerance ? 1.0 : 0.0;
    ind.shed.push_back(std::move(b));
  }
  ind.overload.reserve(in.flow_mw.size());
  for (size_t l = 0; l < in.flow_mw.size(); ++l) {
    const double thr = cfg.eps * in.gamma_max[l];
    const Mat& f = in.flow_mw[l];
    Mat b(f.rows, f.cols);
    for (size_t k = 0; k < f.a.size(); ++k) b.a[k] = std::fabs(f.a[k]) > thr ? 1.0 : 0.0;
    ind.overload.push_back(std::move(b));
  }
  return ind;
}

// A probability estimate that remembers how many samples condition it; a zero
// conditioning count is reported as undefined, never as 0.
struct Estimate {
  double value = 0.0;
  long count = 0;
  bool defined = false;
};

inline Estimate p_standalone(const Mat& ind, int t) {
  if (t < 0 || t >= ind.cols) throw std::invalid_argument("p_standalone: step out of range");
  Estimate e;
  e.count = ind.rows;
  if (ind.rows == 0) return e;
  long hits = 0;
  for (int i = 0; i < ind.rows; ++i) hits += ind(i, t) != 0.0 ? 1 : 0;
  e.value = static_cast<double>(hits) / static_cast<double>(ind.rows);
  e.defined = true;
  return e;
}

inline Estimate p_multistep(const Mat& ind, int t, int delta_t) {
  if (t < 0 || delta_t < 1 || t + delta_t >= ind.cols)
    throw std::invalid_argument("p_multistep: window exceeds horizon");
  Estimate e;
  long cond = 0, hits = 0;
  for (int i = 0; i < ind.rows; ++i) {
    if (ind(i, t) == 0.0) continue;
    ++cond;
    for (int dt = 1; dt <= delta_t; ++dt)
      if (ind(i, t + dt) != 0.0) {
        ++hits;
        break;
      }
  }
  e.count = cond;
  if (cond > 0) {
    e.value = static_cast<double>(hits) / static_cast<double>(cond);
    e.defined = true;
  }
  return e;
}

// Conditional probability of overload on branch j given overload on branch i.
struct EstimateMat {
  Mat value;  // row i, col j
  Mat count;  // conditioning counts per row, replicated across the row
};

inline EstimateMat conditional_overload_standalone(const std::vector<Mat>& overload,
                                                   const std::vector<int>& branches, int t) {
  const int k = static_cast<int>(branches.size());
  EstimateMat out;
  out.value = Mat(k, k);
  out.count = Mat(k, k);
  for (int a = 0; a < k; ++a) {
    const Mat& gi = overload[branches[a]];
    long cond = 0;
    std::vector<long> joint(k, 0);
    for (int i = 0; i < gi.rows; ++i) {
      if (gi(i, t) == 0.0) continue;
      ++cond;
      for (int b = 0; b < k; ++b)
        if (overload[branches[b]](i, t) != 0.0) ++joint[b];
    }
    for (int b = 0; b < k; ++b) {
      out.count(a, b) = static_cast<double>(cond);
      out.value(a, b) = cond > 0 ? static_cast<double>(joint[b]) / cond : 0.0;
    }
  }
  return out;
}

// p(branch j overloads anywhere in (t, t+delta_t] | branch i overloaded at t).
inline EstimateMat conditional_overload_multistep(const std::vector<Mat>& overload,
                                                  const std::vector<int>& branches, int t,
                                                  int delta_t) {
  const int k = static_cast<int>(branches.size());
  if (!overload.empty() && (delta_t < 1 || t + delta_t >= overload[0].cols))
    throw std::invalid_argument("conditional multistep: window exceeds horizon");
  EstimateMat out;
  out.value = Mat(k, k);
  out.count = Mat(k, k);
  for (int a = 0; a < k; ++a) {
    const Mat& gi = overload[branches[a]];
    long cond = 0;
    std::vector<long> joint(k, 0);
    for (int i = 0; i < gi.rows; ++i) {
      if (gi(i, t) == 0.0) continue;
      ++cond;
      for (int b = 0; b < k; ++b) {
        const Mat& gj = overload[branches[b]];
        for (int dt = 1; dt <= delta_t; ++dt)
          if (gj(i, t + dt) != 0.0) {
            ++joint[b];
            break;
          }
      }
    }
    for (int b = 0; b < k; ++b) {
      out.count(a, b) = static_cast<double>(cond);
      out.value(a, b) = cond > 0 ? static_cast<double>(joint[b]) / cond : 0.0;
    }
  }
  return out;
}

// One per-t' slice of the multi-step conditional: p(Gamma_j at t+dt | Gamma_i at t).
inline EstimateMat conditional_overload_slice(const std::vector<Mat>& overload,
                                              const std::vector<int>& branches, int t, int dt) {
  const int k = static_cast<int>(branches.size());
  EstimateMat out;
  out.value = Mat(k, k);
  out.count = Mat(k, k);
  for (int a = 0; a < k; ++a) {
    const Mat& gi = overload[branches[a]];
    long cond = 0;
    std::vector<long> joint(k, 0);
    for (int i = 0; i < gi.rows; ++i) {
      if (gi(i, t) == 0.0) continue;
      ++cond;
      for (int b = 0; b < k; ++b)
        if (overload[branches[b]](i, t + dt) != 0.0) ++joint[b];
    }
    for (int b = 0; b < k; ++b) {
      out.count(a, b) = static_cast<double>(cond);
      out.value(a, b) = cond > 0 ? static_cast<double>(joint[b]) / cond : 0.0;
    }
  }
  return out;
}

// Standalone, future-window and combined risk at one step. The combined value
// is the exact sum of the two parts; `windowed` records whether the future
// window fit inside the horizon.
struct RiskValue {
  double standalone = 0.0;
  double future = 0.0;
  double total = 0.0;
  bool windowed = false;
};

inline RiskValue shed_risk(const Mat& shed_mw, int t, int delta_t, const CostCurve& curve,
                           bool discount) {
  if (t < 0 || t >= shed_mw.cols) throw std::invalid_argument("shed_risk: step out of range");
  RiskValue rv;
  const double inv_n = shed_mw.rows > 0 ? 1.0 / shed_mw.rows : 0.0;
  double s = 0.0;
  for (int i = 0; i < shed_mw.rows; ++i) s += curve.integral(shed_mw(i, t));
  rv.standalone = s * inv_n;
  rv.windowed = t + delta_t < shed_mw.cols && delta_t >= 1;
  if (rv.windowed) {
    for (int dt = 1; dt <= delta_t; ++dt) {
      double f = 0.0;
      for (int i = 0; i < shed_mw.rows; ++i) f += curve.integral(shed_mw(i, t + dt));
      rv.future += (discount ? 1.0 / (1.0 + dt) : 1.0) * f * inv_n;
    }
  }
  rv.total = rv.standalone + rv.future;
  return rv;
}

inline RiskValue overload_risk_branch(const Mat& flow_mw, double gamma_max, int t, int delta_t,
                                      double eps, const CostCurve& curve, bool discount) {
  if (t < 0 || t >= flow_mw.cols) throw std::invalid_argument("overload_risk: step out of range");
  RiskValue rv;
  const double inv_n = flow_mw.rows > 0 ? 1.0 / flow_mw.rows : 0.0;
  double s = 0.0;
  for (int i = 0; i < flow_mw.rows; ++i)
    s += overload_cost(std::fabs(flow_mw(i, t)), gamma_max, eps, curve);
  rv.standalone = s * inv_n;
  rv.windowed = t + delta_t < flow_mw.cols && delta_t >= 1;
  if (rv.windowed) {
    for (int dt = 1; dt <= delta_t; ++dt) {
      double f = 0.0;
      for (int i = 0; i < flow_mw.rows; ++i)
        f += overload_cost(std::fabs(flow_mw(i, t + dt)), gamma_max, eps, curve);
      rv.future += (discount ? 1.0 / (1.0 + dt) : 1.0) * f * inv_n;
    }
  }
  rv.total = rv.standalone + rv.future;
  return rv;
}

// Branches ranked by the scenario-average of max_t |flow| / limit, ties broken
// by branch id. Returns indices into the flow array, best first.
inline std::vector<int> significant_branches(const std::vector<Mat>& flow_mw,
                                             const std::vector<double>& gamma_max,
                                             const std::vector<int>& branch_ids, int k) {
  const int q = static_cast<int>(flow_mw.size());
  if (k < 1 || k > q) k = q;
  std::vector<double> score(q, 0.0);
  for (int l = 0; l < q; ++l) {
    const Mat& f = flow_mw[l];
    if (f.rows == 0) continue;
    double sum = 0.0;
    for (int i = 0; i < f.rows; ++i) {
      double peak = 0.0;
      for (int step = 0; step < f.cols; ++step) peak = std::max(peak, std::fabs(f(i, step)));
      sum += peak / gamma_max[l];
    }
    score[l] = sum / f.rows;
  }
  std::vector<int> order(q);
  for (int l = 0; l < q; ++l) order[l] = l;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return branch_ids[a] < branch_ids[b];
  });
  order.resize(k);
  return order;
}

struct ScopeShedSeries {
  int scope_id = -1;  // zone id, or -1 for the system scope
  std::vector<Estimate> p_standalone;  // per t
  std::vector<Estimate> p_multistep;   // per t, undefined where the window does not fit
  std::vector<RiskValue> risk;         // per t
};

struct BranchOverloadSeries {
  int branch_id = 0;
  std::vector<Estimate> p_standalone;
  std::vector<Estimate> p_multistep;
  std::vector<RiskValue> risk;
};

struct ConditionalBlock {
  int t = 0;
  EstimateMat standalone;
  EstimateMat multistep_union;
  std::vector<EstimateMat> per_step;  // dt = 1..delta_t slices
};

struct RiskReport {
  std::string source;
  std::string config_hash;
  int n = 0, t = 0, delta_t = 0;
  double eps = 0.0, shed_tolerance = 0.0;
  bool discount = false;
  CostCurve shed_curve, overload_curve;
  std::vector<int> zone_ids;
  std::vector<int> branch_ids;          // full universe, label order
  std::vector<int> set_branch_ids;      // ids of the branches inside the risk sums
  std::vector<ScopeShedSeries> shed;    // zones then system
  std::vector<BranchOverloadSeries> overload;   // branch set only
  std::vector<RiskValue> overload_system;       // per t, summed over the branch set
  std::vector<ConditionalBlock> conditionals;   // one block per t with a full window
};

inline RiskReport assess_risk(const RiskInputs& in, const RiskConfig& cfg) {
  if (in.n <= 0 || in.t <= 0) throw std::invalid_argument("assess_risk: empty inputs");
  if (cfg.delta_t < 0 || cfg.delta_t >= in.t)
    throw std::invalid_argument("assess_risk: delta_t must lie inside the horizon");
  std::vector<int> set = cfg.branch_set;
  if (set.empty())
    for (size_t l = 0; l < in.flow_mw.size(); ++l) set.push_back(static_cast<int>(l));
  for (int l : set)
    if (l < 0 || l >= static_cast<int>(in.flow_mw.size()))
      throw std::invalid_argument("assess_risk: branch set index out of range");

  const IndicatorSeries ind = build_indicators(in, cfg);
  RiskReport rep;
  rep.source = in.source;
  rep.config_hash = in.config_hash;
  rep.n = in.n;
  rep.t = in.t;
  rep.delta_t = cfg.delta_t;
  rep.eps = cfg.eps;
  rep.shed_tolerance = cfg.shed_tolerance;
  rep.discount = cfg.discount;
  rep.shed_curve = cfg.shed_curve;
  rep.overload_curve = cfg.overload_curve;
  rep.zone_ids = in.zone_ids;
  rep.branch_ids = in.branch_ids;
  for (int l : set) rep.set_branch_ids.push_back(in.branch_ids[l]);

  const int nz = static_cast<int>(in.zone_ids.size());
  for (int s = 0; s <= nz; ++s) {
    ScopeShedSeries sr;
    sr.scope_id = s < nz ? in.zone_ids[s] : -1;
    for (int step = 0; step < in.t; ++step) {
      sr.p_standalone.push_back(p_standalone(ind.shed[s], step));
      sr.p_multistep.push_back(step + cfg.delta_t < in.t && cfg.delta_t >= 1
                                   ? p_multistep(ind.shed[s], step, cfg.delta_t)
                                   : Estimate{});
      sr.risk.push_back(shed_risk(in.shed_mw[s], step, cfg.delta_t, cfg.shed_curve, cfg.discount));
    }
    rep.shed.push_back(std::move(sr));
  }

  rep.overload_system.assign(in.t, RiskValue{});
  for (int l : set) {
    BranchOverloadSeries br;
    br.branch_id = in.branch_ids[l];
    for (int step = 0; step < in.t; ++step) {
      br.p_standalone.push_back(p_standalone(ind.overload[l], step));
      br.p_multistep.push_back(step + cfg.delta_t < in.t && cfg.delta_t >= 1
                                   ? p_multistep(ind.overload[l], step, cfg.delta_t)
                                   : Estimate{});
      const RiskValue rv = overload_risk_branch(in.flow_mw[l], in.gamma_max[l], step, cfg.delta_t,
                                                cfg.eps, cfg.overload_curve, cfg.discount);
      rep.overload_system[step].standalone += rv.standalone;
      rep.overload_system[step].future += rv.future;
      rep.overload_system[step].total += rv.total;
      rep.overload_system[step].windowed = rv.windowed;
      br.risk.push_back(rv);
    }
    rep.overload.push_back(std::move(br));
  }

  if (cfg.delta_t >= 1) {
    for (int step = 0; step + cfg.delta_t < in.t; ++step) {
      ConditionalBlock blk;
      blk.t = step;
      blk.standalone = conditional_overload_standalone(ind.overload, set, step);
      blk.multistep_union = conditional_overload_multistep(ind.overload, set, step, cfg.delta_t);
      for (int dt = 1; dt <= cfg.delta_t; ++dt)
        blk.per_step.push_back(conditional_overload_slice(ind.overload, set, step, dt));
      rep.conditionals.push_back(std::move(blk));
    }
  }
  return rep;
}

// Divergence between two reports over the same scenario set: absolute
// differences for probabilities, relative differences for risks.
struct DivergenceRow {
  std::string metric;
  std::string scope;
  int t = 0;
  double ref = 0.0, other = 0.0, diff = 0.0;
  bool is_probability = false;
  bool comparable = true;
};

struct Divergence {
  std::vector<DivergenceRow> rows;
  double max_prob_diff = 0.0;
  double max_risk_diff = 0.0;
  int incomparable = 0;
};

namespace detail {

inline double rel_diff(double ref, double other) {
  const double denom = std::max({std::fabs(ref), std::fabs(other), 1e-9});
  return std::fabs(ref - other) / denom;
}

}  // namespace detail

inline Divergence compare_pathways(const RiskReport& ref, const RiskReport& other) {
  if (ref.n != other.n || ref.t != other.t || ref.delta_t != other.delta_t ||
      ref.eps != other.eps || ref.discount != other.discount ||
      !(ref.shed_curve == other.shed_curve) || !(ref.overload_curve == other.overload_curve) ||
      ref.zone_ids != other.zone_ids || ref.set_branch_ids != other.set_branch_ids)
    throw std::invalid_argument("compare: reports were produced under different configurations");

  Divergence d;
  auto add_prob = [&](const std::string& metric, const std::string& scope, int t,
                      const Estimate& a, const Estimate& b) {
    DivergenceRow row{metric, scope, t, a.value, b.value, 0.0, true, true};
    if (!a.defined || !b.defined) {
      row.comparable = false;
      if (a.defined != b.defined) ++d.incomparable;
    } else {
      row.diff = std::fabs(a.value - b.value);
      d.max_prob_diff = std::max(d.max_prob_diff, row.diff);
    }
    d.rows.push_back(std::move(row));
  };
  auto add_risk = [&](const std::string& metric, const std::string& scope, int t, double a,
                      double b, bool windowed) {
    DivergenceRow row{metric, scope, t, a, b, 0.0, false, windowed};
    if (windowed) {
      row.diff = detail::rel_diff(a, b);
      d.max_risk_diff = std::max(d.max_risk_diff, row.diff);
    }
    d.rows.push_back(std::move(row));
  };

  for (size_t s = 0; s < ref.shed.size(); ++s) {
    const ScopeShedSeries& a = ref.shed[s];
    const ScopeShedSeries& b = other.shed[s];
    const std::string scope = a.scope_id < 0 ? "system" : "zone_" + std::to_string(a.scope_id);
    for (int step = 0; step < ref.t; ++step) {
      add_prob("p_shed", scope, step, a.p_standalone[step], b.p_standalone[step]);
      add_prob("p_shed_multistep", scope, step, a.p_multistep[step], b.p_multistep[step]);
      if (a.risk[step].windowed)
        add_risk("shed_risk_combined", scope, step, a.risk[step].total, b.risk[step].total, true);
    }
  }
  for (size_t l = 0; l < ref.overload.size(); ++l) {
    const BranchOverloadSeries& a = ref.overload[l];
    const BranchOverloadSeries& b = other.overload[l];
    const std::string scope = "branch_" + std::to_string(a.branch_id);
    for (int step = 0; step < ref.t; ++step) {
      add_prob("p_overload", scope, step, a.p_standalone[step], b.p_standalone[step]);
      add_prob("p_overload_multistep", scope, step, a.p_multistep[step], b.p_multistep[step]);
    }
  }
  for (int step = 0; step < ref.t; ++step)
    if (ref.overload_system[step].windowed)
      add_risk("overload_risk_combined", "system", step, ref.overload_system[step].total,
               other.overload_system[step].total, true);
  return d;
}

}  // namespace gridrisk
