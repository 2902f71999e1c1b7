#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/labels.hpp"
#include "gridrisk/matrix.hpp"
#include "gridrisk/ptdf.hpp"
#include "gridrisk/rng.hpp"
#include "gridrisk/scenario.hpp"

namespace gridrisk {

// Stream ids, disjoint from the scenario sampler's ranges.
constexpr uint64_t kGnnInitStream = 0x200000000ULL;     // + tensor index
constexpr uint64_t kGnnSplitStream = 0x210000000ULL;    // dataset split shuffle
constexpr uint64_t kGnnShuffleStream = 0x220000000ULL;  // + epoch

enum class HeadKind { Generation, Shedding, Flow };

inline const char* head_name(HeadKind h) {
  switch (h) {
    case HeadKind::Generation:
      return "generation";
    case HeadKind::Shedding:
      return "shedding";
    default:
      return "flow";
  }
}

inline HeadKind parse_head(const std::string& s) {
  if (s == "generation") return HeadKind::Generation;
  if (s == "shedding") return HeadKind::Shedding;
  if (s == "flow") return HeadKind::Flow;
  throw std::runtime_error("unknown head '" + s + "'");
}

struct GraphTopology {
  int n_nodes = 0;
  std::vector<std::vector<int>> adj;         // sorted, deduplicated, symmetric
  std::vector<std::vector<int>> zone_nodes;  // node indices per zone, grid zone order
  std::vector<int> zone_ids;
};

inline GraphTopology make_topology(const Grid& g) {
  GraphTopology topo;
  topo.n_nodes = static_cast<int>(g.buses.size());
  topo.adj.resize(topo.n_nodes);
  for (const Branch& br : g.branches) {
    const int a = g.bus_index(br.from), b = g.bus_index(br.to);
    topo.adj[a].push_back(b);
    topo.adj[b].push_back(a);
  }
  for (std::vector<int>& nb : topo.adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  topo.zone_nodes.resize(g.zones.size());
  for (const Zone& z : g.zones) topo.zone_ids.push_back(z.id);
  for (int v = 0; v < topo.n_nodes; ++v)
    topo.zone_nodes[g.zone_index(g.buses[v].zone)].push_back(v);
  return topo;
}

// One scenario's node features: 8 static columns (bus-type one-hot, normalized
// generator capacity, degree, normalized zone index, base load share) followed
// by the T-step load and wind MW series at the bus.
inline Mat scenario_features(const Grid& g, const ScenarioSet& s, int scen,
                             const GraphTopology& topo) {
  const int nb = topo.n_nodes, t = s.t;
  const int nz = static_cast<int>(g.zones.size());
  Mat x(nb, 8 + 2 * t);
  std::vector<double> pmax(nb, 0.0);
  std::vector<char> has_gen(nb, 0);
  for (const Generator& gen : g.gens) {
    const int v = g.bus_index(gen.bus);
    has_gen[v] = 1;
    pmax[v] += gen.p_max;
  }
  const double pmax_top = *std::max_element(pmax.begin(), pmax.end());
  const double load_total = g.total_base_load();
  for (int v = 0; v < nb; ++v) {
    const Bus& b = g.buses[v];
    const bool hg = has_gen[v] != 0, hl = b.base_load > 0.0;
    x(v, 0) = hg && !hl ? 1.0 : 0.0;
    x(v, 1) = !hg && hl ? 1.0 : 0.0;
    x(v, 2) = hg && hl ? 1.0 : 0.0;
    x(v, 3) = !hg && !hl ? 1.0 : 0.0;
    x(v, 4) = pmax_top > 0.0 ? pmax[v] / pmax_top : 0.0;
    x(v, 5) = static_cast<double>(topo.adj[v].size());
    x(v, 6) = nz > 1 ? static_cast<double>(g.zone_index(b.zone)) / (nz - 1) : 0.0;
    x(v, 7) = load_total > 0.0 ? b.base_load / load_total : 0.0;
  }
  for (int step = 0; step < t; ++step) {
    const std::vector<double> l = bus_loads(g, s, scen, step);
    const std::vector<double> w = bus_wind(g, s, scen, step);
    for (int v = 0; v < nb; ++v) {
      x(v, 8 + step) = l[v];
      x(v, 8 + t + step) = w[v];
    }
  }
  return x;
}

// Per-node injection caps for the flow head's bound penalty: the single-node
// injection that would push some branch to twice its limit. Nodes the PTDF
// cannot see (the slack) fall back to the sum of doubled limits.
inline std::vector<double> injection_bounds(const Grid& g, const DcModel& dc) {
  double fallback = 0.0;
  for (const Branch& br : g.branches) fallback += 2.0 * br.flow_limit;
  std::vector<double> ub(dc.n_bus, fallback);
  for (int v = 0; v < dc.n_bus; ++v) {
    double lim = std::numeric_limits<double>::infinity();
    for (int l = 0; l < dc.n_branch; ++l) {
      const double p = std::fabs(dc.ptdf(l, v));
      if (p > 1e-9) lim = std::min(lim, 2.0 * g.branches[l].flow_limit / p);
    }
    if (std::isfinite(lim)) ub[v] = lim;
  }
  return ub;
}

// Targets for the graph-level heads are stored as per-node means
// (zone total / zone size, system total / node count) so that pooled
// predictions in a shared per-step scale stay exactly zone/system consistent.
struct GraphSample {
  int scenario = 0;
  Mat x;       // nodes x d_in, raw units
  Mat target;  // (zones+1) x t for graph heads, nodes x t injections for the flow head
  Mat lb, ub;  // target-shaped bounds, raw units
};

struct Dataset {
  HeadKind head = HeadKind::Generation;
  int t = 0;
  GraphTopology topo;
  std::vector<GraphSample> samples;  // usable labels only
};

inline Dataset encode_features(const Grid& g, const ScenarioSet& s, const LabelSet& labels,
                               HeadKind head, const DcModel* dc = nullptr) {
  if (static_cast<int>(labels.records.size()) != s.n || labels.t != s.t)
    throw std::invalid_argument("encode_features: scenario and label sets are misaligned");
  if (labels.zone_ids != s.zone_ids)
    throw std::invalid_argument("encode_features: zone ordering mismatch between labels and scenarios");
  if (head == HeadKind::Flow && dc == nullptr)
    throw std::invalid_argument("encode_features: flow head needs the dc model");

  Dataset ds;
  ds.head = head;
  ds.t = s.t;
  ds.topo = make_topology(g);
  const int nb = ds.topo.n_nodes;
  const int nz = static_cast<int>(g.zones.size());
  std::vector<double> zsize(nz, 0.0);
  for (int z = 0; z < nz; ++z) zsize[z] = static_cast<double>(ds.topo.zone_nodes[z].size());
  for (int z = 0; z < nz; ++z)
    if (zsize[z] == 0.0) throw std::invalid_argument("encode_features: zone without buses");

  std::vector<double> pmax_zone(nz, 0.0);
  double pmax_total = 0.0;
  for (const Generator& gen : g.gens)
    if (gen.kind == GenKind::Thermal) {
      pmax_zone[g.zone_index(g.buses[g.bus_index(gen.bus)].zone)] += gen.p_max;
      pmax_total += gen.p_max;
    }
  const std::vector<double> inj_ub =
      head == HeadKind::Flow ? injection_bounds(g, *dc) : std::vector<double>();

  for (int scen = 0; scen < s.n; ++scen) {
    const LabelRecord& rec = labels.records[scen];
    if (!rec.usable()) continue;
    GraphSample smp;
    smp.scenario = scen;
    smp.x = scenario_features(g, s, scen, ds.topo);
    if (head == HeadKind::Flow) {
      smp.target = Mat(nb, s.t);
      smp.ub = Mat(nb, s.t);
      smp.lb = Mat(nb, s.t);
      for (int v = 0; v < nb; ++v)
        for (int step = 0; step < s.t; ++step) {
          smp.target(v, step) = rec.inj(step, v);
          smp.ub(v, step) = inj_ub[v];
          smp.lb(v, step) = -inj_ub[v];
        }
    } else {
      const bool gen_head = head == HeadKind::Generation;
      smp.target = Mat(nz + 1, s.t);
      smp.ub = Mat(nz + 1, s.t);
      smp.lb = Mat(nz + 1, s.t);
      for (int step = 0; step < s.t; ++step) {
        double sys = 0.0;
        for (int z = 0; z < nz; ++z) {
          const double tot = gen_head ? rec.gen_zonal(step, z) : rec.shed_zonal(step, z);
          smp.target(z, step) = tot / zsize[z];
          smp.ub(z, step) =
              (gen_head ? pmax_zone[z] : s.load(scen, step, z)) / zsize[z];
          sys += gen_head ? 0.0 : s.load(scen, step, z);
        }
        smp.target(nz, step) = (gen_head ? rec.gen_sys[step] : rec.shed_sys[step]) / nb;
        smp.ub(nz, step) = (gen_head ? pmax_total : sys) / nb;
      }
    }
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

struct Linear {
  Mat w;                  // out x in
  std::vector<double> b;  // out
};

struct ParamSet {
  Linear enc1, enc2, sage1, sage2, dec1, dec2;

  std::array<Linear*, 6> all() { return {&enc1, &enc2, &sage1, &sage2, &dec1, &dec2}; }
  std::array<const Linear*, 6> all() const {
    return {&enc1, &enc2, &sage1, &sage2, &dec1, &dec2};
  }

  void zero() {
    for (Linear* l : all()) {
      l->w.fill(0.0);
      std::fill(l->b.begin(), l->b.end(), 0.0);
    }
  }
};

// Layer widths follow one rule: D_H doubles the input width for the pooled
// heads and quadruples it for the flow head.
inline int hidden_dim(HeadKind head, int d_in) {
  return head == HeadKind::Flow ? 4 * d_in : 2 * d_in;
}

struct SurrogateModel {
  HeadKind head = HeadKind::Generation;
  int t = 0, d_in = 0, d_hidden = 0;
  int n_nodes = 0, n_zones = 0;
  uint64_t seed = 0;
  std::string config_hash;
  ParamSet w;
  // z-score statistics from the training split
  std::vector<double> x_mu, x_sigma;  // per feature column
  Mat y_mu, y_sigma;                  // 1 x t shared across scopes, or nodes x t for the flow head
};

inline SurrogateModel make_surrogate(HeadKind head, int t, const GraphTopology& topo,
                                     uint64_t seed) {
  SurrogateModel m;
  m.head = head;
  m.t = t;
  m.d_in = 8 + 2 * t;
  m.d_hidden = hidden_dim(head, m.d_in);
  m.n_nodes = topo.n_nodes;
  m.n_zones = static_cast<int>(topo.zone_ids.size());
  m.seed = seed;
  int tensor = 0;
  auto init = [&](Linear& l, int out, int in) {
    l.w = Mat(out, in);
    l.b.assign(out, 0.0);
    CounterRng rng(seed, kGnnInitStream + tensor++);
    const double lim = std::sqrt(6.0 / (in + out));
    for (double& v : l.w.a) v = (2.0 * rng.next_uniform() - 1.0) * lim;
  };
  const int h = m.d_hidden;
  init(m.w.enc1, 2 * m.d_in, m.d_in);
  init(m.w.enc2, h, 2 * m.d_in);
  init(m.w.sage1, h, 2 * h);
  init(m.w.sage2, h, 2 * h);
  init(m.w.dec1, 2 * t, h);
  init(m.w.dec2, t, 2 * t);
  m.x_mu.assign(m.d_in, 0.0);
  m.x_sigma.assign(m.d_in, 1.0);
  m.y_mu = head == HeadKind::Flow ? Mat(topo.n_nodes, t) : Mat(1, t);
  m.y_sigma = m.y_mu;
  m.y_sigma.fill(1.0);
  return m;
}

inline void affine(const Mat& x, const Linear& l, Mat& z) {
  matmul_nt(x, l.w, z);
  for (int i = 0; i < z.rows; ++i) {
    double* r = z.row(i);
    for (int j = 0; j < z.cols; ++j) r[j] += l.b[j];
  }
}

inline void relu_inplace(Mat& z) {
  for (double& v : z.a) v = v > 0.0 ? v : 0.0;
}

inline Mat neighbor_mean(const Mat& h, const GraphTopology& topo) {
  Mat out(h.rows, h.cols);
  for (int v = 0; v < h.rows; ++v) {
    const std::vector<int>& nb = topo.adj[v];
    if (nb.empty()) continue;  // isolated node keeps a zero neighbor mean
    double* r = out.row(v);
    for (int u : nb) {
      const double* s = h.row(u);
      for (int j = 0; j < h.cols; ++j) r[j] += s[j];
    }
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (int j = 0; j < h.cols; ++j) r[j] *= inv;
  }
  return out;
}

inline Mat concat_self_neighbors(const Mat& h, const GraphTopology& topo) {
  const Mat nm = neighbor_mean(h, topo);
  Mat m(h.rows, 2 * h.cols);
  for (int v = 0; v < h.rows; ++v)
    for (int j = 0; j < h.cols; ++j) {
      m(v, j) = h(v, j);
      m(v, h.cols + j) = nm(v, j);
    }
  return m;
}

// Adjoint of concat_self_neighbors: the left half flows straight through, the
// right half redistributes each row to its neighbors at that row's 1/deg.
inline Mat concat_adjoint(const Mat& dm, const GraphTopology& topo) {
  const int h = dm.cols / 2;
  Mat out(dm.rows, h);
  for (int v = 0; v < dm.rows; ++v)
    for (int j = 0; j < h; ++j) out(v, j) = dm(v, j);
  for (int u = 0; u < dm.rows; ++u) {
    const std::vector<int>& nb = topo.adj[u];
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (int v : nb)
      for (int j = 0; j < h; ++j) out(v, j) += inv * dm(u, h + j);
  }
  return out;
}

// Mean pooling per zone plus a final all-node row for the system scope.
inline Mat pool_scopes(const Mat& node_out, const GraphTopology& topo) {
  const int nz = static_cast<int>(topo.zone_nodes.size());
  Mat p(nz + 1, node_out.cols);
  for (int z = 0; z < nz; ++z) {
    for (int v : topo.zone_nodes[z]) {
      const double* s = node_out.row(v);
      double* r = p.row(z);
      for (int j = 0; j < node_out.cols; ++j) r[j] += s[j];
    }
    const double inv = 1.0 / static_cast<double>(topo.zone_nodes[z].size());
    for (int j = 0; j < node_out.cols; ++j) p(z, j) *= inv;
  }
  const double inv = 1.0 / static_cast<double>(node_out.rows);
  for (int v = 0; v < node_out.rows; ++v)
    for (int j = 0; j < node_out.cols; ++j) p(nz, j) += inv * node_out(v, j);
  return p;
}

struct ForwardCache {
  Mat x, a1, a2, m1, a3, m2, a4, a5, out;
};

inline Mat forward_cached(const SurrogateModel& m, const GraphTopology& topo, const Mat& xnorm,
                          ForwardCache& c) {
  if (xnorm.rows != m.n_nodes || xnorm.cols != m.d_in)
    throw std::invalid_argument("forward: feature shape does not match the model");
  c.x = xnorm;
  affine(c.x, m.w.enc1, c.a1);
  relu_inplace(c.a1);
  affine(c.a1, m.w.enc2, c.a2);
  relu_inplace(c.a2);
  c.m1 = concat_self_neighbors(c.a2, topo);
  affine(c.m1, m.w.sage1, c.a3);
  relu_inplace(c.a3);
  c.m2 = concat_self_neighbors(c.a3, topo);
  affine(c.m2, m.w.sage2, c.a4);
  relu_inplace(c.a4);
  affine(c.a4, m.w.dec1, c.a5);
  relu_inplace(c.a5);
  affine(c.a5, m.w.dec2, c.out);
  return m.head == HeadKind::Flow ? c.out : pool_scopes(c.out, topo);
}

inline double surrogate_loss(const Mat& pred, const Mat& target, const Mat& lb, const Mat& ub,
                             double penalty_weight) {
  const double n = static_cast<double>(pred.a.size());
  double mse = 0.0, pen = 0.0;
  for (size_t k = 0; k < pred.a.size(); ++k) {
    const double e = pred.a[k] - target.a[k];
    mse += e * e;
    const double over = std::max(pred.a[k] - ub.a[k], 0.0);
    const double under = std::max(lb.a[k] - pred.a[k], 0.0);
    pen += over * over + under * under;
  }
  return (mse + penalty_weight * pen) / n;
}

inline Mat surrogate_loss_grad(const Mat& pred, const Mat& target, const Mat& lb, const Mat& ub,
                               double penalty_weight) {
  Mat d(pred.rows, pred.cols);
  const double n = static_cast<double>(pred.a.size());
  for (size_t k = 0; k < pred.a.size(); ++k) {
    const double over = std::max(pred.a[k] - ub.a[k], 0.0);
    const double under = std::max(lb.a[k] - pred.a[k], 0.0);
    d.a[k] = (2.0 * (pred.a[k] - target.a[k]) + penalty_weight * 2.0 * (over - under)) / n;
  }
  return d;
}

namespace detail {

inline void add_colsum(const Mat& d, std::vector<double>& b) {
  for (int i = 0; i < d.rows; ++i) {
    const double* r = d.row(i);
    for (int j = 0; j < d.cols; ++j) b[j] += r[j];
  }
}

inline void relu_mask(Mat& d, const Mat& a) {
  for (size_t k = 0; k < d.a.size(); ++k)
    if (a.a[k] <= 0.0) d.a[k] = 0.0;
}

}  // namespace detail

// Accumulates the gradient of the cached forward pass into g; dpred is the
// loss gradient w.r.t. the forward() return value.
inline void backward(const SurrogateModel& m, const GraphTopology& topo, const ForwardCache& c,
                     const Mat& dpred, ParamSet& g) {
  Mat dout;
  if (m.head == HeadKind::Flow) {
    dout = dpred;
  } else {
    dout = Mat(c.out.rows, c.out.cols);
    const int nz = static_cast<int>(topo.zone_nodes.size());
    for (int z = 0; z < nz; ++z) {
      const double inv = 1.0 / static_cast<double>(topo.zone_nodes[z].size());
      for (int v : topo.zone_nodes[z])
        for (int j = 0; j < dout.cols; ++j) dout(v, j) += inv * dpred(z, j);
    }
    const double inv = 1.0 / static_cast<double>(c.out.rows);
    for (int v = 0; v < dout.rows; ++v)
      for (int j = 0; j < dout.cols; ++j) dout(v, j) += inv * dpred(nz, j);
  }

  matmul_tn(dout, c.a5, g.dec2.w, true);
  detail::add_colsum(dout, g.dec2.b);
  Mat d5 = matmul(dout, m.w.dec2.w);
  detail::relu_mask(d5, c.a5);

  matmul_tn(d5, c.a4, g.dec1.w, true);
  detail::add_colsum(d5, g.dec1.b);
  Mat d4 = matmul(d5, m.w.dec1.w);
  detail::relu_mask(d4, c.a4);

  matmul_tn(d4, c.m2, g.sage2.w, true);
  detail::add_colsum(d4, g.sage2.b);
  const Mat dm2 = matmul(d4, m.w.sage2.w);
  Mat d3 = concat_adjoint(dm2, topo);
  detail::relu_mask(d3, c.a3);

  matmul_tn(d3, c.m1, g.sage1.w, true);
  detail::add_colsum(d3, g.sage1.b);
  const Mat dm1 = matmul(d3, m.w.sage1.w);
  Mat d2 = concat_adjoint(dm1, topo);
  detail::relu_mask(d2, c.a2);

  matmul_tn(d2, c.a1, g.enc2.w, true);
  detail::add_colsum(d2, g.enc2.b);
  Mat d1 = matmul(d2, m.w.enc2.w);
  detail::relu_mask(d1, c.a1);

  matmul_tn(d1, c.x, g.enc1.w, true);
  detail::add_colsum(d1, g.enc1.b);
}

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int batch = 32;
  int epochs = 500;
  int patience = 50;
  double penalty_weight = 1.0;
  double split_train = 0.7, split_val = 0.1;  // test split is the remainder
  double sigma_floor = 1e-3;
  uint64_t seed = 0;
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0, val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochStat> epochs;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<int> train_idx, val_idx, test_idx;  // indices into Dataset::samples
};

struct TrainResult {
  SurrogateModel model;
  TrainReport report;
};

namespace detail {

inline void shuffle_indices(std::vector<int>& v, CounterRng& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.next_u64() % i]);
}

inline void adam_layer(Linear& w, const Linear& g, Linear& mom, Linear& vel, double bc1,
                       double bc2, const TrainConfig& cfg) {
  auto upd = [&](double& wi, double gi, double& mi, double& vi) {
    mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
    vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi * gi;
    wi -= cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
  };
  for (size_t k = 0; k < w.w.a.size(); ++k) upd(w.w.a[k], g.w.a[k], mom.w.a[k], vel.w.a[k]);
  for (size_t k = 0; k < w.b.size(); ++k) upd(w.b[k], g.b[k], mom.b[k], vel.b[k]);
}

}  // namespace detail

inline void adam_step(ParamSet& w, const ParamSet& g, ParamSet& mom, ParamSet& vel, long step,
                      const TrainConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  auto ws = w.all();
  auto gs = g.all();
  auto ms = mom.all();
  auto vs = vel.all();
  for (int k = 0; k < 6; ++k) detail::adam_layer(*ws[k], *gs[k], *ms[k], *vs[k], bc1, bc2, cfg);
}

struct SplitIndices {
  std::vector<int> train, val, test;
};

// Deterministic split shared by the trainer and by anything that must agree
// with it on which samples were training data (e.g. significant-branch
// selection).
inline SplitIndices split_dataset(int n, const TrainConfig& cfg) {
  if (n < 2) throw std::invalid_argument("split: need at least two samples");
  if (!(cfg.split_train > 0.0 && cfg.split_val >= 0.0 && cfg.split_train + cfg.split_val <= 1.0))
    throw std::invalid_argument("split: invalid fractions");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(cfg.seed, kGnnSplitStream);
  detail::shuffle_indices(order, rng);
  int n_train = static_cast<int>(std::lround(n * cfg.split_train));
  int n_val = static_cast<int>(std::lround(n * cfg.split_val));
  n_train = std::max(1, std::min(n_train, n - 1));
  n_val = std::max(1, std::min(n_val, n - n_train));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

inline Mat normalize_features(const SurrogateModel& m, const Mat& x_raw) {
  Mat x = x_raw;
  for (int v = 0; v < x.rows; ++v)
    for (int j = 0; j < x.cols; ++j) x(v, j) = (x(v, j) - m.x_mu[j]) / m.x_sigma[j];
  return x;
}

namespace detail {

inline double y_mu_at(const SurrogateModel& m, int row, int step) {
  return m.y_mu.rows == 1 ? m.y_mu(0, step) : m.y_mu(row, step);
}

inline double y_sigma_at(const SurrogateModel& m, int row, int step) {
  return m.y_sigma.rows == 1 ? m.y_sigma(0, step) : m.y_sigma(row, step);
}

inline Mat normalize_targets(const SurrogateModel& m, const Mat& y_raw) {
  Mat y = y_raw;
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < y.cols; ++j)
      y(i, j) = (y(i, j) - y_mu_at(m, i, j)) / y_sigma_at(m, i, j);
  return y;
}

}  // namespace detail

// Trains on the dataset with a deterministic split/shuffle schedule and
// returns the best-validation-loss weights.
inline TrainResult train_surrogate(const Dataset& ds, const TrainConfig& cfg) {
  const int n = static_cast<int>(ds.samples.size());
  if (cfg.batch < 1 || cfg.epochs < 1) throw std::invalid_argument("train: bad batch or epochs");

  TrainResult res;
  res.model = make_surrogate(ds.head, ds.t, ds.topo, cfg.seed);
  SurrogateModel& m = res.model;
  TrainReport& rep = res.report;

  const SplitIndices split = split_dataset(n, cfg);
  rep.train_idx = split.train;
  rep.val_idx = split.val;
  rep.test_idx = split.test;

  // z-score statistics over the training split only
  {
    std::vector<double> sum(m.d_in, 0.0), sq(m.d_in, 0.0);
    double cnt = 0.0;
    for (int i : rep.train_idx) {
      const Mat& x = ds.samples[i].x;
      for (int v = 0; v < x.rows; ++v)
        for (int j = 0; j < x.cols; ++j) {
          sum[j] += x(v, j);
          sq[j] += x(v, j) * x(v, j);
        }
      cnt += x.rows;
    }
    for (int j = 0; j < m.d_in; ++j) {
      m.x_mu[j] = sum[j] / cnt;
      const double var = std::max(sq[j] / cnt - m.x_mu[j] * m.x_mu[j], 0.0);
      m.x_sigma[j] = std::max(std::sqrt(var), cfg.sigma_floor);
    }
    const Mat& shape = ds.samples[0].target;
    Mat ysum(m.y_mu.rows, m.y_mu.cols), ysq(m.y_mu.rows, m.y_mu.cols);
    double yc = 0.0;
    for (int i : rep.train_idx) {
      const Mat& y = ds.samples[i].target;
      for (int r = 0; r < y.rows; ++r)
        for (int j = 0; j < y.cols; ++j) {
          const int rr = m.y_mu.rows == 1 ? 0 : r;
          ysum(rr, j) += y(r, j);
          ysq(rr, j) += y(r, j) * y(r, j);
        }
    }
    yc = m.y_mu.rows == 1 ? static_cast<double>(rep.train_idx.size()) * shape.rows
                          : static_cast<double>(rep.train_idx.size());
    for (size_t k = 0; k < m.y_mu.a.size(); ++k) {
      m.y_mu.a[k] = ysum.a[k] / yc;
      const double var = std::max(ysq.a[k] / yc - m.y_mu.a[k] * m.y_mu.a[k], 0.0);
      m.y_sigma.a[k] = std::max(std::sqrt(var), cfg.sigma_floor);
    }
  }

  // normalized copies of every sample (bounds transform with the targets)
  std::vector<Mat> xn(n), yn(n), lbn(n), ubn(n);
  for (int i = 0; i < n; ++i) {
    xn[i] = normalize_features(m, ds.samples[i].x);
    yn[i] = detail::normalize_targets(m, ds.samples[i].target);
    lbn[i] = detail::normalize_targets(m, ds.samples[i].lb);
    ubn[i] = detail::normalize_targets(m, ds.samples[i].ub);
  }

  ParamSet grads = m.w, mom = m.w, vel = m.w;
  grads.zero();
  mom.zero();
  vel.zero();
  ParamSet best = m.w;
  int stall = 0;
  long step = 0;
  ForwardCache cache;

  auto eval_loss = [&](const std::vector<int>& idx) {
    double sum = 0.0;
    for (int i : idx) {
      const Mat pred = forward_cached(m, ds.topo, xn[i], cache);
      sum += surrogate_loss(pred, yn[i], lbn[i], ubn[i], cfg.penalty_weight);
    }
    return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
  };

  std::vector<int> sched = rep.train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(cfg.seed, kGnnShuffleStream + static_cast<uint64_t>(epoch));
    detail::shuffle_indices(sched, rng);
    double train_sum = 0.0;
    for (size_t at = 0; at < sched.size(); at += cfg.batch) {
      const size_t end = std::min(at + cfg.batch, sched.size());
      const double bs = static_cast<double>(end - at);
      grads.zero();
      double batch_loss = 0.0;
      for (size_t k = at; k < end; ++k) {
        const int i = sched[k];
        const Mat pred = forward_cached(m, ds.topo, xn[i], cache);
        batch_loss += surrogate_loss(pred, yn[i], lbn[i], ubn[i], cfg.penalty_weight);
        Mat dpred = surrogate_loss_grad(pred, yn[i], lbn[i], ubn[i], cfg.penalty_weight);
        for (double& v : dpred.a) v /= bs;
        backward(m, ds.topo, cache, dpred, grads);
      }
      batch_loss /= bs;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: diverged, non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(at / cfg.batch) +
                                 " (" + std::string(head_name(ds.head)) + " head)");
      train_sum += batch_loss * bs;
      ++step;
      adam_step(m.w, grads, mom, vel, step, cfg);
    }
    const double train_loss = train_sum / static_cast<double>(sched.size());
    const double val_loss = eval_loss(rep.val_idx);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train: diverged, non-finite validation loss at epoch " +
                               std::to_string(epoch));
    rep.epochs.push_back({epoch, train_loss, val_loss});
    if (val_loss < rep.best_val) {
      rep.best_val = val_loss;
      rep.best_epoch = epoch;
      best = m.w;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }
  m.w = best;
  return res;
}

// Raw-unit predictions: (zones+1) x t per-node means for the pooled heads,
// nodes x t injections for the flow head.
inline Mat predict_raw(const SurrogateModel& m, const GraphTopology& topo, const Mat& x_raw) {
  if (topo.n_nodes != m.n_nodes || static_cast<int>(topo.zone_ids.size()) != m.n_zones)
    throw std::invalid_argument("predict: topology does not match the model");
  ForwardCache c;
  Mat p = forward_cached(m, topo, normalize_features(m, x_raw), c);
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < p.cols; ++j)
      p(i, j) = p(i, j) * detail::y_sigma_at(m, i, j) + detail::y_mu_at(m, i, j);
  return p;
}

// Predicted injections re-balanced to zero sum (uniform residual split), then
// mapped through the PTDF. Rows are steps, columns branches.
inline Mat predict_branch_flows(const SurrogateModel& m, const GraphTopology& topo,
                                const Mat& x_raw, const DcModel& dc) {
  if (m.head != HeadKind::Flow)
    throw std::invalid_argument("predict_branch_flows: model head is not flow");
  Mat inj = predict_raw(m, topo, x_raw);  // nodes x t
  for (int step = 0; step < inj.cols; ++step) {
    double r = 0.0;
    for (int v = 0; v < inj.rows; ++v) r += inj(v, step);
    r /= static_cast<double>(inj.rows);
    for (int v = 0; v < inj.rows; ++v) inj(v, step) -= r;
  }
  Mat flows(inj.cols, dc.n_branch);
  for (int step = 0; step < inj.cols; ++step)
    for (int l = 0; l < dc.n_branch; ++l) {
      double s = 0.0;
      for (int v = 0; v < inj.rows; ++v) s += dc.ptdf(l, v) * inj(v, step);
      flows(step, l) = s;
    }
  return flows;
}

// Mean relative error (%) per target row and step over the given samples, with
// a 1 MW floor in the denominator. Pooled heads are rescaled to zone/system
// totals first; the flow head reports per-branch flow errors through the PTDF.
inline Mat evaluate_mre(const SurrogateModel& m, const Dataset& ds, const std::vector<int>& idx,
                        const DcModel* dc = nullptr) {
  if (idx.empty()) throw std::invalid_argument("evaluate_mre: no samples");
  const double floor_mw = 1.0;
  if (m.head == HeadKind::Flow) {
    if (dc == nullptr) throw std::invalid_argument("evaluate_mre: flow head needs the dc model");
    Mat mre(dc->n_branch, ds.t);
    for (int i : idx) {
      const GraphSample& smp = ds.samples[i];
      const Mat pf = predict_branch_flows(m, ds.topo, smp.x, *dc);  // t x q
      for (int step = 0; step < ds.t; ++step)
        for (int l = 0; l < dc->n_branch; ++l) {
          double tf = 0.0;
          for (int v = 0; v < smp.target.rows; ++v) tf += dc->ptdf(l, v) * smp.target(v, step);
          mre(l, step) += std::fabs(pf(step, l) - tf) / std::max(std::fabs(tf), floor_mw);
        }
    }
    for (double& v : mre.a) v *= 100.0 / static_cast<double>(idx.size());
    return mre;
  }
  const int nz = static_cast<int>(ds.topo.zone_nodes.size());
  std::vector<double> scale(nz + 1);
  for (int z = 0; z < nz; ++z) scale[z] = static_cast<double>(ds.topo.zone_nodes[z].size());
  scale[nz] = static_cast<double>(ds.topo.n_nodes);
  Mat mre(nz + 1, ds.t);
  for (int i : idx) {
    const GraphSample& smp = ds.samples[i];
    const Mat pred = predict_raw(m, ds.topo, smp.x);
    for (int r = 0; r <= nz; ++r)
      for (int step = 0; step < ds.t; ++step) {
        const double pv = pred(r, step) * scale[r];
        const double tv = smp.target(r, step) * scale[r];
        mre(r, step) += std::fabs(pv - tv) / std::max(std::fabs(tv), floor_mw);
      }
  }
  for (double& v : mre.a) v *= 100.0 / static_cast<double>(idx.size());
  return mre;
}

inline void write_train_report_csv(const TrainReport& rep, const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const EpochStat& e : rep.epochs)
    out << e.epoch << ',' << detail::fmt17(e.train_loss) << ',' << detail::fmt17(e.val_loss)
        << "\n";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("train report: cannot write " + tmp);
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline void put_u32(std::ostream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u64(std::ostream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_doubles(std::ostream& f, const double* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline void put_mat(std::ostream& f, const Mat& m) {
  put_u32(f, static_cast<uint32_t>(m.rows));
  put_u32(f, static_cast<uint32_t>(m.cols));
  put_doubles(f, m.a.data(), m.a.size());
}
inline uint32_t get_u32(std::istream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline uint64_t get_u64(std::istream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline void get_doubles(std::istream& f, double* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline Mat get_mat(std::istream& f) {
  const uint32_t r = get_u32(f), c = get_u32(f);
  if (r > 1u << 20 || c > 1u << 20) throw std::runtime_error("checkpoint: implausible tensor shape");
  Mat m(static_cast<int>(r), static_cast<int>(c));
  get_doubles(f, m.a.data(), m.a.size());
  return m;
}

constexpr char kCheckpointMagic[4] = {'G', 'R', 'N', 'N'};
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace detail

inline void save_checkpoint(const SurrogateModel& m, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp);
    f.write(detail::kCheckpointMagic, 4);
    detail::put_u32(f, detail::kCheckpointVersion);
    detail::put_u32(f, static_cast<uint32_t>(m.head));
    detail::put_u32(f, static_cast<uint32_t>(m.t));
    detail::put_u32(f, static_cast<uint32_t>(m.d_in));
    detail::put_u32(f, static_cast<uint32_t>(m.d_hidden));
    detail::put_u32(f, static_cast<uint32_t>(m.n_nodes));
    detail::put_u32(f, static_cast<uint32_t>(m.n_zones));
    detail::put_u64(f, m.seed);
    detail::put_u32(f, static_cast<uint32_t>(m.config_hash.size()));
    f.write(m.config_hash.data(), static_cast<std::streamsize>(m.config_hash.size()));
    detail::put_u64(f, m.x_mu.size());
    detail::put_doubles(f, m.x_mu.data(), m.x_mu.size());
    detail::put_doubles(f, m.x_sigma.data(), m.x_sigma.size());
    detail::put_mat(f, m.y_mu);
    detail::put_mat(f, m.y_sigma);
    for (const Linear* l : m.w.all()) {
      detail::put_mat(f, l->w);
      detail::put_u64(f, l->b.size());
      detail::put_doubles(f, l->b.data(), l->b.size());
    }
    if (!f) throw std::runtime_error("checkpoint: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline SurrogateModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4] = {};
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != std::string(detail::kCheckpointMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (detail::get_u32(f) != detail::kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  SurrogateModel m;
  m.head = static_cast<HeadKind>(detail::get_u32(f));
  m.t = static_cast<int>(detail::get_u32(f));
  m.d_in = static_cast<int>(detail::get_u32(f));
  m.d_hidden = static_cast<int>(detail::get_u32(f));
  m.n_nodes = static_cast<int>(detail::get_u32(f));
  m.n_zones = static_cast<int>(detail::get_u32(f));
  m.seed = detail::get_u64(f);
  const uint32_t hash_len = detail::get_u32(f);
  if (hash_len > 4096) throw std::runtime_error("checkpoint: implausible hash length");
  m.config_hash.resize(hash_len);
  f.read(m.config_hash.data(), hash_len);
  const uint64_t nx = detail::get_u64(f);
  if (nx != static_cast<uint64_t>(m.d_in))
    throw std::runtime_error("checkpoint: feature stat size mismatch");
  m.x_mu.resize(nx);
  m.x_sigma.resize(nx);
  detail::get_doubles(f, m.x_mu.data(), nx);
  detail::get_doubles(f, m.x_sigma.data(), nx);
  m.y_mu = detail::get_mat(f);
  m.y_sigma = detail::get_mat(f);
  for (Linear* l : m.w.all()) {
    l->w = detail::get_mat(f);
    const uint64_t nb = detail::get_u64(f);
    if (nb != static_cast<uint64_t>(l->w.rows))
      throw std::runtime_error("checkpoint: bias size mismatch");
    l->b.resize(nb);
    detail::get_doubles(f, l->b.data(), nb);
  }
  if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
  if (m.d_in != 8 + 2 * m.t || m.d_hidden != hidden_dim(m.head, m.d_in) ||
      m.w.enc1.w.rows != 2 * m.d_in || m.w.enc1.w.cols != m.d_in ||
      m.w.enc2.w.rows != m.d_hidden || m.w.sage1.w.cols != 2 * m.d_hidden ||
      m.w.dec1.w.rows != 2 * m.t || m.w.dec2.w.rows != m.t)
    throw std::runtime_error("checkpoint: inconsistent dimensions in " + path);
  return m;
}

}  // namespace gridrisk
