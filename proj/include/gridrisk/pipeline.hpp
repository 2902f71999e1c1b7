#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridrisk/config.hpp"
#include "gridrisk/gnn.hpp"
#include "gridrisk/grid.hpp"
#include "gridrisk/labels.hpp"
#include "gridrisk/ptdf.hpp"
#include "gridrisk/report_io.hpp"
#include "gridrisk/risk.hpp"
#include "gridrisk/scenario.hpp"
#include "gridrisk/scuc.hpp"

namespace gridrisk {

struct PipelineContext {
  PipelineConfig cfg;
  std::string hash;
  Grid grid;
  DcModel dc;
};

inline PipelineContext make_context(const PipelineConfig& cfg) {
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.hash = compute_config_hash(cfg);
  ctx.grid = load_grid(cfg.case_file);
  ctx.dc = DcModel::build(ctx.grid);
  return ctx;
}

inline std::string scenarios_path(const PipelineConfig& c) {
  return c.output_dir + "/scenarios.csv";
}
inline std::string labels_path(const PipelineConfig& c) { return c.output_dir + "/labels.csv"; }
inline std::string label_parts_dir(const PipelineConfig& c) {
  return c.output_dir + "/label_parts";
}
inline std::string labels_timing_path(const PipelineConfig& c) {
  return c.output_dir + "/labels_timing.csv";
}
inline std::string model_path(const PipelineConfig& c, HeadKind head) {
  return c.output_dir + "/model_" + head_name(head) + ".bin";
}
inline std::string train_report_path(const PipelineConfig& c, HeadKind head) {
  return c.output_dir + "/train_" + head_name(head) + ".csv";
}
inline std::string risk_json_path(const PipelineConfig& c, const std::string& source) {
  return c.output_dir + "/risk_" + source + ".json";
}
inline std::string risk_csv_dir(const PipelineConfig& c, const std::string& source) {
  return c.output_dir + "/risk_" + source;
}
inline std::string divergence_path(const PipelineConfig& c) {
  return c.output_dir + "/divergence.csv";
}

inline ScenarioSet pipeline_sample(const PipelineContext& ctx) {
  const PipelineConfig& c = ctx.cfg;
  CovarianceSpec cov =
      c.has_covariance
          ? CovarianceSpec{c.covariance}
          : CovarianceSpec::default_for_zones(static_cast<int>(ctx.grid.zones.size()),
                                              c.spatial_rho);
  ScenarioSet s =
      generate_scenarios(ctx.grid, c.n_scenarios, c.horizon, c.seed, &cov, c.lhs, c.wind_curve);
  s.config_hash = ctx.hash;
  std::filesystem::create_directories(c.output_dir);
  write_scenarios(s, scenarios_path(c));
  return s;
}

inline ScenarioSet pipeline_load_scenarios(const PipelineContext& ctx) {
  const std::string path = scenarios_path(ctx.cfg);
  ScenarioSet s = read_scenarios(path);
  if (s.config_hash != ctx.hash)
    throw std::runtime_error(path + ": config hash " + s.config_hash +
                             " does not match the current configuration " + ctx.hash +
                             "; re-run sample");
  return s;
}

inline ScucConfig scuc_config_of(const PipelineConfig& c) {
  ScucConfig sc;
  sc.gap = c.gap;
  sc.reserve_fraction = c.reserve_fraction;
  sc.shed_penalty = c.shed_penalty;
  sc.node_limit = c.node_limit;
  return sc;
}

inline LabelSet pipeline_label(const PipelineContext& ctx, const ScenarioSet& s,
                               LabelRunInfo* info = nullptr) {
  const PipelineConfig& c = ctx.cfg;
  LabelJob job;
  job.parts_dir = label_parts_dir(c);
  job.config_hash = ctx.hash;
  job.jobs = c.jobs;
  job.scuc = scuc_config_of(c);
  LabelRunInfo local;
  LabelRunInfo& ri = info ? *info : local;
  LabelSet set = label_scenarios(ctx.grid, ctx.dc, s, job, &ri);
  write_labels_csv(set, labels_path(c));
  // Wall-clock sidecar for operators; deliberately not part of the
  // reproducible artifact set.
  std::ostringstream out;
  out << "scenario,seconds\n";
  for (size_t i = 0; i < ri.seconds.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", ri.seconds[i]);
    out << i << ',' << buf << "\n";
  }
  std::ofstream f(labels_timing_path(c), std::ios::binary);
  if (f) f << out.str();
  return set;
}

inline LabelSet pipeline_load_labels(const PipelineContext& ctx) {
  const std::string path = labels_path(ctx.cfg);
  LabelSet set = read_labels_csv(path);
  if (set.config_hash != ctx.hash)
    throw std::runtime_error(path + ": config hash " + set.config_hash +
                             " does not match the current configuration " + ctx.hash +
                             "; re-run label");
  return set;
}

inline TrainResult pipeline_train(const PipelineContext& ctx, const ScenarioSet& s,
                                  const LabelSet& labels, HeadKind head) {
  const PipelineConfig& c = ctx.cfg;
  Dataset ds = encode_features(ctx.grid, s, labels, head,
                               head == HeadKind::Flow ? &ctx.dc : nullptr);
  TrainResult r = train_surrogate(ds, c.train);
  r.model.config_hash = ctx.hash;
  save_checkpoint(r.model, model_path(c, head));
  write_train_report_csv(r.report, train_report_path(c, head));
  return r;
}

inline SurrogateModel pipeline_load_model(const PipelineContext& ctx, HeadKind head) {
  const std::string path = model_path(ctx.cfg, head);
  SurrogateModel m = load_checkpoint(path);
  if (m.config_hash != ctx.hash)
    throw std::runtime_error(path + ": config hash " + m.config_hash +
                             " does not match the current configuration " + ctx.hash +
                             "; re-run train");
  if (m.head != head) throw std::runtime_error(path + ": checkpoint holds a different head");
  return m;
}

// Branch set for the risk sums and conditional matrices: the top-k branches by
// loading, scored on the rows the trainer used as training data so neither
// pathway peeks at evaluation scenarios. Returns indices into the label branch
// order.
inline std::vector<int> significant_branch_indices(const PipelineContext& ctx,
                                                   const RiskInputs& milp_in) {
  const int q = static_cast<int>(milp_in.flow_mw.size());
  std::vector<int> all(q);
  for (int l = 0; l < q; ++l) all[l] = l;
  if (ctx.cfg.all_branches || ctx.cfg.k_significant >= q) return all;
  const SplitIndices split = split_dataset(milp_in.n, ctx.cfg.train);
  std::vector<Mat> sub(q, Mat(static_cast<int>(split.train.size()), milp_in.t));
  for (int l = 0; l < q; ++l)
    for (size_t r = 0; r < split.train.size(); ++r)
      for (int step = 0; step < milp_in.t; ++step)
        sub[l](static_cast<int>(r), step) = milp_in.flow_mw[l](split.train[r], step);
  std::vector<int> idx =
      significant_branches(sub, milp_in.gamma_max, milp_in.branch_ids, ctx.cfg.k_significant);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Surrogate-side risk inputs over the same usable scenarios as the reference
// labels. Pooled shedding means are rescaled to MW totals and clamped at zero;
// flows come from the injection head through the network map.
inline RiskInputs risk_inputs_from_models(const PipelineContext& ctx, const ScenarioSet& s,
                                          const LabelSet& labels, const SurrogateModel& shed_m,
                                          const SurrogateModel& flow_m) {
  RiskInputs in;
  in.t = labels.t;
  in.zone_ids = labels.zone_ids;
  in.branch_ids = labels.branch_ids;
  for (int id : labels.branch_ids)
    for (const Branch& br : ctx.grid.branches)
      if (br.id == id) {
        in.gamma_max.push_back(br.flow_limit);
        break;
      }
  for (const LabelRecord& rec : labels.records)
    if (rec.usable()) in.scenarios.push_back(rec.scenario);
  in.n = static_cast<int>(in.scenarios.size());
  if (in.n == 0) throw std::runtime_error("surrogate risk inputs: no usable labels");
  in.source = "gnn";
  in.config_hash = ctx.hash;

  const GraphTopology topo = make_topology(ctx.grid);
  const int nz = static_cast<int>(topo.zone_ids.size());
  const int q = static_cast<int>(in.branch_ids.size());
  in.shed_mw.assign(nz + 1, Mat(in.n, in.t));
  in.flow_mw.assign(q, Mat(in.n, in.t));

  for (int row = 0; row < in.n; ++row) {
    const int scen = in.scenarios[row];
    const Mat x = scenario_features(ctx.grid, s, scen, topo);
    const Mat shed = predict_raw(shed_m, topo, x);  // (zones + 1) x t per-node means
    for (int z = 0; z <= nz; ++z) {
      const double size = z < nz ? static_cast<double>(topo.zone_nodes[z].size())
                                 : static_cast<double>(topo.n_nodes);
      for (int step = 0; step < in.t; ++step)
        in.shed_mw[z](row, step) = std::max(0.0, shed(z, step) * size);
    }
    const Mat flows = predict_branch_flows(flow_m, topo, x, ctx.dc);  // t x q
    for (int l = 0; l < q; ++l)
      for (int step = 0; step < in.t; ++step) in.flow_mw[l](row, step) = flows(step, l);
  }
  return in;
}

inline RiskConfig risk_config_of(const PipelineConfig& c, const std::string& source,
                                 std::vector<int> branch_set) {
  RiskConfig rc;
  rc.shed_tolerance = source == "gnn" ? c.gnn_shed_tolerance : c.shed_tolerance;
  rc.eps = c.eps;
  rc.delta_t = c.delta_t;
  rc.shed_curve = c.shed_curve;
  rc.overload_curve = c.overload_curve;
  rc.discount = c.discount;
  rc.branch_set = std::move(branch_set);
  return rc;
}

inline RiskReport pipeline_assess(const PipelineContext& ctx, const std::string& source,
                                  bool write_json = true) {
  if (source != "milp" && source != "gnn")
    throw std::invalid_argument("assess: source must be milp or gnn");
  const ScenarioSet s = pipeline_load_scenarios(ctx);
  const LabelSet labels = pipeline_load_labels(ctx);
  const RiskInputs milp_in = risk_inputs_from_labels(ctx.grid, labels);
  const std::vector<int> set = significant_branch_indices(ctx, milp_in);

  RiskReport rep;
  if (source == "milp") {
    rep = assess_risk(milp_in, risk_config_of(ctx.cfg, source, set));
  } else {
    const SurrogateModel shed_m = pipeline_load_model(ctx, HeadKind::Shedding);
    const SurrogateModel flow_m = pipeline_load_model(ctx, HeadKind::Flow);
    const RiskInputs gnn_in = risk_inputs_from_models(ctx, s, labels, shed_m, flow_m);
    rep = assess_risk(gnn_in, risk_config_of(ctx.cfg, source, set));
  }
  if (write_json) write_report_json(rep, risk_json_path(ctx.cfg, source));
  return rep;
}

struct CompareResult {
  Divergence divergence;
  bool pass = false;
};

// Both reports are recomputed from the on-disk artifacts so the comparison
// always reflects the current configuration, then diffed metric by metric.
inline CompareResult pipeline_compare(const PipelineContext& ctx) {
  const RiskReport ref = pipeline_assess(ctx, "milp");
  const RiskReport other = pipeline_assess(ctx, "gnn");
  CompareResult res;
  res.divergence = compare_pathways(ref, other);
  res.pass = res.divergence.max_prob_diff <= ctx.cfg.probability_tolerance &&
             res.divergence.max_risk_diff <= ctx.cfg.risk_tolerance &&
             res.divergence.incomparable == 0;
  write_divergence_csv(res.divergence, divergence_path(ctx.cfg));
  return res;
}

inline void pipeline_report(const PipelineContext& ctx, const std::string& source) {
  const RiskReport rep = pipeline_assess(ctx, source, /*write_json=*/false);
  write_report_csvs(rep, risk_csv_dir(ctx.cfg, source));
}

}  // namespace gridrisk
