#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridrisk/gnn.hpp"
#include "gridrisk/matrix.hpp"
#include "gridrisk/risk.hpp"
#include "gridrisk/scenario.hpp"

namespace gridrisk {

// One declarative file drives every stage; command-line flags may override
// individual fields before the config hash is taken, so artifacts are stamped
// with the hash of the configuration that actually ran.
struct PipelineConfig {
  std::string case_file;
  std::string output_dir = "out";
  int n_scenarios = 1000;
  int horizon = 12;
  int delta_t = 2;
  uint64_t seed = 1;

  // sampling
  double spatial_rho = 0.3;
  bool lhs = true;
  WindCurve wind_curve;
  bool has_covariance = false;
  Mat covariance;

  // solver
  double gap = 1e-4;
  double reserve_fraction = 0.05;
  double shed_penalty = -1.0;  // < 0 means take the case file's value
  int node_limit = 10000;
  int jobs = 1;

  // training (seed is filled from the top-level seed)
  TrainConfig train;

  // risk
  CostCurve shed_curve = CostCurve::constant(10.0);
  CostCurve overload_curve = CostCurve::constant(1.0);
  double eps = 0.85;
  int k_significant = 4;
  double shed_tolerance = 1e-3;
  double gnn_shed_tolerance = 0.5;
  bool discount = false;
  bool all_branches = false;

  // compare
  double probability_tolerance = 0.05;
  double risk_tolerance = 0.15;

  void validate() const {
    if (case_file.empty()) throw std::invalid_argument("config: case_file is required");
    if (n_scenarios < 1) throw std::invalid_argument("config: scenarios must be >= 1");
    if (horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
    if (delta_t < 0 || delta_t >= horizon)
      throw std::invalid_argument("config: delta_t must lie inside the horizon");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
    if (k_significant < 1) throw std::invalid_argument("config: significant_branches must be >= 1");
    if (!(probability_tolerance >= 0.0 && risk_tolerance >= 0.0))
      throw std::invalid_argument("config: tolerances must be nonnegative");
    if (!(shed_tolerance >= 0.0 && gnn_shed_tolerance >= 0.0))
      throw std::invalid_argument("config: shed tolerances must be nonnegative");
    shed_curve.validate();
    overload_curve.validate();
  }
};

namespace detail {

inline void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

inline CostCurve parse_curve(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) return CostCurve::constant(j.get<double>());
  if (!j.is_array()) throw std::invalid_argument("config: " + where + " must be a number or array");
  std::vector<CostCurve::Segment> segs;
  for (const nlohmann::json& je : j) {
    expect_keys(je, {"upto", "rate"}, where);
    CostCurve::Segment s;
    if (je.contains("upto") && !je["upto"].is_null()) s.upto = je["upto"].get<double>();
    s.rate = je.at("rate").get<double>();
    segs.push_back(s);
  }
  return CostCurve::table(std::move(segs));
}

inline nlohmann::json curve_to_json(const CostCurve& c) {
  if (c.segments.size() == 1) return c.segments[0].rate;
  nlohmann::json arr = nlohmann::json::array();
  for (const CostCurve::Segment& s : c.segments) {
    nlohmann::json seg;
    seg["upto"] = std::isfinite(s.upto) ? nlohmann::json(s.upto) : nlohmann::json(nullptr);
    seg["rate"] = s.rate;
    arr.push_back(seg);
  }
  return arr;
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  using nlohmann::json;
  detail::expect_keys(
      j, {"case_file", "output_dir", "scenarios", "horizon", "delta_t", "seed", "sampling",
          "solver", "train", "risk", "compare"},
      "top level");
  PipelineConfig c;
  c.case_file = j.at("case_file").get<std::string>();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("scenarios")) c.n_scenarios = j["scenarios"].get<int>();
  if (j.contains("horizon")) c.horizon = j["horizon"].get<int>();
  if (j.contains("delta_t")) c.delta_t = j["delta_t"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();

  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    detail::expect_keys(s, {"spatial_rho", "lhs", "wind_curve", "covariance"}, "sampling");
    if (s.contains("spatial_rho")) c.spatial_rho = s["spatial_rho"].get<double>();
    if (s.contains("lhs")) c.lhs = s["lhs"].get<bool>();
    if (s.contains("wind_curve")) {
      const json& w = s["wind_curve"];
      detail::expect_keys(w, {"v_min", "v_max", "p_r"}, "wind_curve");
      if (w.contains("v_min")) c.wind_curve.v_min = w["v_min"].get<double>();
      if (w.contains("v_max")) c.wind_curve.v_max = w["v_max"].get<double>();
      if (w.contains("p_r")) c.wind_curve.p_r = w["p_r"].get<double>();
    }
    if (s.contains("covariance") && !s["covariance"].is_null()) {
      const json& m = s["covariance"];
      if (!m.is_array() || m.empty())
        throw std::invalid_argument("config: covariance must be a nonempty matrix");
      const int rows = static_cast<int>(m.size());
      c.covariance = Mat(rows, rows);
      for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(m[i].size()) != rows)
          throw std::invalid_argument("config: covariance must be square");
        for (int k = 0; k < rows; ++k) c.covariance(i, k) = m[i][k].get<double>();
      }
      c.has_covariance = true;
    }
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    detail::expect_keys(s, {"gap", "reserve_fraction", "shed_penalty", "node_limit", "jobs"},
                        "solver");
    if (s.contains("gap")) c.gap = s["gap"].get<double>();
    if (s.contains("reserve_fraction")) c.reserve_fraction = s["reserve_fraction"].get<double>();
    if (s.contains("shed_penalty")) c.shed_penalty = s["shed_penalty"].get<double>();
    if (s.contains("node_limit")) c.node_limit = s["node_limit"].get<int>();
    if (s.contains("jobs")) c.jobs = s["jobs"].get<int>();
  }

  if (j.contains("train")) {
    const json& s = j["train"];
    detail::expect_keys(
        s, {"lr", "batch", "epochs", "patience", "penalty_weight", "split", "sigma_floor"},
        "train");
    if (s.contains("lr")) c.train.lr = s["lr"].get<double>();
    if (s.contains("batch")) c.train.batch = s["batch"].get<int>();
    if (s.contains("epochs")) c.train.epochs = s["epochs"].get<int>();
    if (s.contains("patience")) c.train.patience = s["patience"].get<int>();
    if (s.contains("penalty_weight")) c.train.penalty_weight = s["penalty_weight"].get<double>();
    if (s.contains("sigma_floor")) c.train.sigma_floor = s["sigma_floor"].get<double>();
    if (s.contains("split")) {
      const json& sp = s["split"];
      if (!sp.is_array() || sp.size() != 3)
        throw std::invalid_argument("config: train.split must be [train, val, test]");
      const double a = sp[0].get<double>(), b = sp[1].get<double>(), t = sp[2].get<double>();
      if (std::fabs(a + b + t - 1.0) > 1e-9)
        throw std::invalid_argument("config: train.split must sum to 1");
      c.train.split_train = a;
      c.train.split_val = b;
    }
  }

  if (j.contains("risk")) {
    const json& s = j["risk"];
    detail::expect_keys(s,
                        {"shed_cost", "overload_cost", "eps", "significant_branches",
                         "shed_tolerance", "gnn_shed_tolerance", "discount", "all_branches"},
                        "risk");
    if (s.contains("shed_cost")) c.shed_curve = detail::parse_curve(s["shed_cost"], "shed_cost");
    if (s.contains("overload_cost"))
      c.overload_curve = detail::parse_curve(s["overload_cost"], "overload_cost");
    if (s.contains("eps")) c.eps = s["eps"].get<double>();
    if (s.contains("significant_branches")) c.k_significant = s["significant_branches"].get<int>();
    if (s.contains("shed_tolerance")) c.shed_tolerance = s["shed_tolerance"].get<double>();
    if (s.contains("gnn_shed_tolerance"))
      c.gnn_shed_tolerance = s["gnn_shed_tolerance"].get<double>();
    if (s.contains("discount")) c.discount = s["discount"].get<bool>();
    if (s.contains("all_branches")) c.all_branches = s["all_branches"].get<bool>();
  }

  if (j.contains("compare")) {
    const json& s = j["compare"];
    detail::expect_keys(s, {"probability_tolerance", "risk_tolerance"}, "compare");
    if (s.contains("probability_tolerance"))
      c.probability_tolerance = s["probability_tolerance"].get<double>();
    if (s.contains("risk_tolerance")) c.risk_tolerance = s["risk_tolerance"].get<double>();
  }

  c.train.seed = c.seed;
  c.validate();
  return c;
}

// Relative case_file / output_dir entries resolve against the config file's
// own directory, so configs work no matter where the tool is launched from.
inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  PipelineConfig c = parse_pipeline_config(j);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  resolve(c.case_file);
  resolve(c.output_dir);
  return c;
}

// Canonical form with every effective value materialized; nlohmann orders the
// keys, so the dump is stable.
inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["case_file"] = c.case_file;
  j["output_dir"] = c.output_dir;
  j["scenarios"] = c.n_scenarios;
  j["horizon"] = c.horizon;
  j["delta_t"] = c.delta_t;
  j["seed"] = c.seed;
  j["sampling"]["spatial_rho"] = c.spatial_rho;
  j["sampling"]["lhs"] = c.lhs;
  j["sampling"]["wind_curve"] = {{"v_min", c.wind_curve.v_min},
                                 {"v_max", c.wind_curve.v_max},
                                 {"p_r", c.wind_curve.p_r}};
  if (c.has_covariance) {
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < c.covariance.rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < c.covariance.cols; ++k) row.push_back(c.covariance(i, k));
      m.push_back(row);
    }
    j["sampling"]["covariance"] = m;
  } else {
    j["sampling"]["covariance"] = nullptr;
  }
  j["solver"] = {{"gap", c.gap},
                 {"reserve_fraction", c.reserve_fraction},
                 {"shed_penalty", c.shed_penalty},
                 {"node_limit", c.node_limit},
                 {"jobs", c.jobs}};
  j["train"] = {{"lr", c.train.lr},
                {"batch", c.train.batch},
                {"epochs", c.train.epochs},
                {"patience", c.train.patience},
                {"penalty_weight", c.train.penalty_weight},
                {"sigma_floor", c.train.sigma_floor},
                {"split", {c.train.split_train, c.train.split_val,
                           1.0 - c.train.split_train - c.train.split_val}}};
  j["risk"] = {{"shed_cost", detail::curve_to_json(c.shed_curve)},
               {"overload_cost", detail::curve_to_json(c.overload_curve)},
               {"eps", c.eps},
               {"significant_branches", c.k_significant},
               {"shed_tolerance", c.shed_tolerance},
               {"gnn_shed_tolerance", c.gnn_shed_tolerance},
               {"discount", c.discount},
               {"all_branches", c.all_branches}};
  j["compare"] = {{"probability_tolerance", c.probability_tolerance},
                  {"risk_tolerance", c.risk_tolerance}};
  return j;
}

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Hash of the effective configuration plus the case file bytes, so editing the
// grid also invalidates downstream artifacts. The jobs knob is excluded:
// results must not depend on the parallelism degree.
inline std::string compute_config_hash(const PipelineConfig& c) {
  nlohmann::json j = config_to_json(c);
  j["solver"].erase("jobs");
  j.erase("output_dir");
  const std::string dump = j.dump();
  uint64_t h = fnv1a(dump.data(), dump.size());
  std::ifstream f(c.case_file, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot open case file " + c.case_file);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string body = ss.str();
  h = fnv1a(body.data(), body.size(), h);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gridrisk
