#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gridrisk/config.hpp"
#include "gridrisk/pipeline.hpp"

using namespace gridrisk;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kTinyGrid = R"(
[meta]
name tiny
base_mva 100
slack_bus 1
shed_penalty 900

[bus]
1 1 20
2 1 15 1.0
3 2 25

[zone]
1 35 6 15 60 2.0 8.0 2
2 25 5 10 45 2.0 8.0 0

[gen]
1 1 thermal 5 60 20 30 100 20 1 1 60 1 30 2
2 3 thermal 5 40 28 25 90 15 1 1 40 0 0 2

[branch]
1 1 2 0.10 40
2 2 3 0.20 35
3 1 3 0.15 45
)";

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << body;
  return p.string();
}

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

PipelineConfig tiny_config(const fs::path& dir) {
  PipelineConfig c;
  c.case_file = write_file(dir / "tiny.grid", kTinyGrid);
  c.output_dir = (dir / "out").string();
  c.n_scenarios = 10;
  c.horizon = 3;
  c.delta_t = 1;
  c.seed = 3;
  c.wind_curve = WindCurve{3.0, 13.0, 8.0};
  c.train.epochs = 2;
  c.train.patience = 3;
  c.train.batch = 4;
  c.k_significant = 2;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("a minimal config file parses to the documented defaults") {
  const PipelineConfig c = parse_pipeline_config(json{{"case_file", "x.grid"}});
  CHECK(c.case_file == "x.grid");
  CHECK(c.output_dir == "out");
  CHECK(c.n_scenarios == 1000);
  CHECK(c.horizon == 12);
  CHECK(c.delta_t == 2);
  CHECK(c.seed == 1);
  CHECK_THAT(c.spatial_rho, WithinAbs(0.3, 0.0));
  CHECK(c.lhs);
  CHECK_FALSE(c.has_covariance);
  CHECK_THAT(c.gap, WithinAbs(1e-4, 0.0));
  CHECK_THAT(c.reserve_fraction, WithinAbs(0.05, 0.0));
  CHECK(c.shed_penalty < 0.0);
  CHECK(c.jobs == 1);
  CHECK_THAT(c.train.lr, WithinAbs(1e-3, 0.0));
  CHECK(c.train.batch == 32);
  CHECK(c.train.epochs == 500);
  CHECK(c.train.patience == 50);
  CHECK(c.train.seed == 1);
  CHECK_THAT(c.train.split_train, WithinAbs(0.7, 0.0));
  CHECK_THAT(c.train.split_val, WithinAbs(0.1, 0.0));
  CHECK(c.shed_curve == CostCurve::constant(10.0));
  CHECK(c.overload_curve == CostCurve::constant(1.0));
  CHECK_THAT(c.eps, WithinAbs(0.85, 0.0));
  CHECK(c.k_significant == 4);
  CHECK_THAT(c.shed_tolerance, WithinAbs(1e-3, 0.0));
  CHECK_THAT(c.gnn_shed_tolerance, WithinAbs(0.5, 0.0));
  CHECK_FALSE(c.discount);
  CHECK_FALSE(c.all_branches);
  CHECK_THAT(c.probability_tolerance, WithinAbs(0.05, 0.0));
  CHECK_THAT(c.risk_tolerance, WithinAbs(0.15, 0.0));
}

TEST_CASE("every config section parses and the top seed reaches the trainer") {
  const json j = {
      {"case_file", "x.grid"},
      {"output_dir", "runs/a"},
      {"scenarios", 64},
      {"horizon", 6},
      {"delta_t", 3},
      {"seed", 99},
      {"sampling",
       {{"spatial_rho", 0.5},
        {"lhs", false},
        {"wind_curve", {{"v_min", 3.5}, {"v_max", 14.0}, {"p_r", 9.0}}},
        {"covariance", {{1.0, 0.2}, {0.2, 1.0}}}}},
      {"solver",
       {{"gap", 1e-3}, {"reserve_fraction", 0.08}, {"shed_penalty", 500.0}, {"node_limit", 99},
        {"jobs", 4}}},
      {"train",
       {{"lr", 0.01}, {"batch", 8}, {"epochs", 7}, {"patience", 2}, {"penalty_weight", 0.5},
        {"sigma_floor", 0.1}, {"split", {0.6, 0.2, 0.2}}}},
      {"risk",
       {{"shed_cost", json::array({{{"upto", 5.0}, {"rate", 10.0}}, {{"rate", 20.0}}})},
        {"overload_cost", 2.5},
        {"eps", 0.9},
        {"significant_branches", 3},
        {"shed_tolerance", 0.01},
        {"gnn_shed_tolerance", 0.7},
        {"discount", true},
        {"all_branches", true}}},
      {"compare", {{"probability_tolerance", 0.02}, {"risk_tolerance", 0.1}}}};
  const PipelineConfig c = parse_pipeline_config(j);
  CHECK(c.output_dir == "runs/a");
  CHECK(c.n_scenarios == 64);
  CHECK(c.horizon == 6);
  CHECK(c.delta_t == 3);
  CHECK(c.seed == 99);
  CHECK(c.train.seed == 99);
  CHECK_THAT(c.spatial_rho, WithinAbs(0.5, 0.0));
  CHECK_FALSE(c.lhs);
  CHECK_THAT(c.wind_curve.v_min, WithinAbs(3.5, 0.0));
  CHECK_THAT(c.wind_curve.p_r, WithinAbs(9.0, 0.0));
  REQUIRE(c.has_covariance);
  REQUIRE(c.covariance.rows == 2);
  CHECK_THAT(c.covariance(0, 1), WithinAbs(0.2, 0.0));
  CHECK_THAT(c.gap, WithinAbs(1e-3, 0.0));
  CHECK(c.node_limit == 99);
  CHECK(c.jobs == 4);
  CHECK(c.train.epochs == 7);
  CHECK_THAT(c.train.penalty_weight, WithinAbs(0.5, 0.0));
  CHECK_THAT(c.train.split_train, WithinAbs(0.6, 0.0));
  CHECK_THAT(c.train.split_val, WithinAbs(0.2, 0.0));
  REQUIRE(c.shed_curve.segments.size() == 2);
  CHECK_THAT(c.shed_curve.integral(8.0), WithinAbs(110.0, 1e-12));
  CHECK(c.overload_curve == CostCurve::constant(2.5));
  CHECK(c.k_significant == 3);
  CHECK(c.discount);
  CHECK(c.all_branches);
  CHECK_THAT(c.probability_tolerance, WithinAbs(0.02, 0.0));
}

TEST_CASE("unknown keys are rejected section by section") {
  auto with = [](const char* section, const json& body) {
    json j{{"case_file", "x.grid"}};
    j[section] = body;
    return j;
  };
  CHECK_THROWS_WITH(parse_pipeline_config(json{{"case_file", "x"}, {"scenario", 5}}),
                    ContainsSubstring("unknown key 'scenario'"));
  CHECK_THROWS_WITH(parse_pipeline_config(with("sampling", {{"rho", 0.5}})),
                    ContainsSubstring("'rho' in sampling"));
  CHECK_THROWS_WITH(
      parse_pipeline_config(with("sampling", {{"wind_curve", {{"vmin", 3.0}}}})),
      ContainsSubstring("'vmin' in wind_curve"));
  CHECK_THROWS_WITH(parse_pipeline_config(with("solver", {{"threads", 2}})),
                    ContainsSubstring("'threads' in solver"));
  CHECK_THROWS_WITH(parse_pipeline_config(with("train", {{"learning_rate", 0.1}})),
                    ContainsSubstring("'learning_rate' in train"));
  CHECK_THROWS_WITH(parse_pipeline_config(with("risk", {{"epsilon", 0.9}})),
                    ContainsSubstring("'epsilon' in risk"));
  CHECK_THROWS_WITH(parse_pipeline_config(with("compare", {{"tol", 0.1}})),
                    ContainsSubstring("'tol' in compare"));
}

TEST_CASE("malformed configs fail loudly") {
  CHECK_THROWS(parse_pipeline_config(json{{"horizon", 12}}));  // no case_file
  CHECK_THROWS_WITH(
      parse_pipeline_config(json{{"case_file", "x"}, {"train", {{"split", {0.5, 0.2, 0.2}}}}}),
      ContainsSubstring("sum to 1"));
  CHECK_THROWS_WITH(
      parse_pipeline_config(json{{"case_file", "x"}, {"train", {{"split", {0.5, 0.5}}}}}),
      ContainsSubstring("split"));
  CHECK_THROWS_WITH(parse_pipeline_config(
                        json{{"case_file", "x"}, {"sampling", {{"covariance", {{1.0, 0.2}}}}}}),
                    ContainsSubstring("square"));
  CHECK_THROWS_WITH(parse_pipeline_config(json{{"case_file", "x"}, {"delta_t", 12}}),
                    ContainsSubstring("horizon"));
  CHECK_THROWS_WITH(parse_pipeline_config(json{{"case_file", "x"}, {"scenarios", 0}}),
                    ContainsSubstring("scenarios"));
}

TEST_CASE("relative paths resolve against the config file directory") {
  const fs::path dir = fresh_dir("gridrisk_cfg_paths");
  write_file(dir / "sub" / "tiny.grid", kTinyGrid);
  write_file(dir / "cfg.json",
             json{{"case_file", "sub/tiny.grid"}, {"output_dir", "runs"}}.dump());
  const PipelineConfig c = load_pipeline_config((dir / "cfg.json").string());
  CHECK(c.case_file == (dir / "sub/tiny.grid").string());
  CHECK(c.output_dir == (dir / "runs").string());

  write_file(dir / "abs.json", json{{"case_file", (dir / "sub/tiny.grid").string()}}.dump());
  CHECK(load_pipeline_config((dir / "abs.json").string()).case_file ==
        (dir / "sub/tiny.grid").string());

  CHECK_THROWS_WITH(load_pipeline_config((dir / "missing.json").string()),
                    ContainsSubstring("cannot open"));
  write_file(dir / "broken.json", "{ not json");
  CHECK_THROWS_WITH(load_pipeline_config((dir / "broken.json").string()),
                    ContainsSubstring("broken.json"));
}

TEST_CASE("the config hash tracks results-relevant inputs only") {
  const fs::path dir = fresh_dir("gridrisk_cfg_hash");
  PipelineConfig c = tiny_config(dir);

  const std::string h = compute_config_hash(c);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);

  PipelineConfig parallel = c;
  parallel.jobs = 8;
  parallel.output_dir = (dir / "elsewhere").string();
  CHECK(compute_config_hash(parallel) == h);

  PipelineConfig reseeded = c;
  reseeded.seed = c.seed + 1;
  CHECK(compute_config_hash(reseeded) != h);

  std::ofstream(c.case_file, std::ios::binary | std::ios::app) << "# trailing note\n";
  CHECK(compute_config_hash(c) != h);
}

TEST_CASE("stages stamp artifacts and stale hashes are refused") {
  const fs::path dir = fresh_dir("gridrisk_stages");
  const PipelineConfig cfg = tiny_config(dir);
  const PipelineContext ctx = make_context(cfg);

  PipelineConfig re = cfg;
  re.seed = cfg.seed + 7;
  re.train.seed = re.seed;
  const PipelineContext stale = make_context(re);

  const ScenarioSet s = pipeline_sample(ctx);
  CHECK(s.config_hash == ctx.hash);
  const std::string scen_bytes = slurp(scenarios_path(cfg));
  CHECK(pipeline_load_scenarios(ctx).n == cfg.n_scenarios);
  CHECK_THROWS_WITH(pipeline_load_scenarios(stale), ContainsSubstring("re-run sample"));

  pipeline_sample(ctx);
  CHECK(slurp(scenarios_path(cfg)) == scen_bytes);  // sampling is reproducible

  const LabelSet labels = pipeline_label(ctx, s);
  CHECK(labels.n_usable() > 0);
  CHECK(pipeline_load_labels(ctx).config_hash == ctx.hash);
  CHECK_THROWS_WITH(pipeline_load_labels(stale), ContainsSubstring("re-run label"));
  CHECK(fs::exists(labels_timing_path(cfg)));

  pipeline_train(ctx, s, labels, HeadKind::Shedding);
  pipeline_train(ctx, s, labels, HeadKind::Flow);
  CHECK(pipeline_load_model(ctx, HeadKind::Shedding).head == HeadKind::Shedding);
  CHECK_THROWS_WITH(pipeline_load_model(stale, HeadKind::Shedding),
                    ContainsSubstring("re-run train"));
  fs::copy_file(model_path(cfg, HeadKind::Shedding), model_path(cfg, HeadKind::Generation));
  CHECK_THROWS_WITH(pipeline_load_model(ctx, HeadKind::Generation),
                    ContainsSubstring("different head"));

  const RiskReport milp = pipeline_assess(ctx, "milp");
  CHECK(milp.source == "milp");
  CHECK(milp.config_hash == ctx.hash);
  CHECK(fs::exists(risk_json_path(cfg, "milp")));
  CHECK(milp.set_branch_ids.size() == 2);  // k_significant of the three branches
  CHECK(std::is_sorted(milp.set_branch_ids.begin(), milp.set_branch_ids.end()));

  const RiskReport gnn = pipeline_assess(ctx, "gnn");
  CHECK(gnn.source == "gnn");
  CHECK(gnn.n == milp.n);
  CHECK(gnn.set_branch_ids == milp.set_branch_ids);
  CHECK_THROWS_WITH(pipeline_assess(ctx, "exact"), ContainsSubstring("milp or gnn"));

  const CompareResult cmp = pipeline_compare(ctx);
  CHECK_FALSE(cmp.divergence.rows.empty());
  CHECK(fs::exists(divergence_path(cfg)));

  pipeline_report(ctx, "milp");
  for (const char* leaf : {"shed_probability.csv", "shed_risk.csv", "overload_probability.csv",
                           "overload_risk.csv", "conditional_overload.csv"})
    CHECK(fs::exists(fs::path(risk_csv_dir(cfg, "milp")) / leaf));
}

TEST_CASE("the branch set respects the all_branches escape hatch") {
  const fs::path dir = fresh_dir("gridrisk_branch_set");
  PipelineConfig cfg = tiny_config(dir);
  const PipelineContext ctx = make_context(cfg);
  const ScenarioSet s = pipeline_sample(ctx);
  const LabelSet labels = pipeline_label(ctx, s);
  const RiskInputs in = risk_inputs_from_labels(ctx.grid, labels);

  const std::vector<int> top = significant_branch_indices(ctx, in);
  REQUIRE(top.size() == 2);
  CHECK(std::is_sorted(top.begin(), top.end()));

  PipelineConfig all_cfg = cfg;
  all_cfg.all_branches = true;
  PipelineContext all_ctx = ctx;
  all_ctx.cfg = all_cfg;
  CHECK(significant_branch_indices(all_ctx, in) == std::vector<int>{0, 1, 2});

  PipelineConfig wide = cfg;
  wide.k_significant = 50;
  PipelineContext wide_ctx = ctx;
  wide_ctx.cfg = wide;
  CHECK(significant_branch_indices(wide_ctx, in) == std::vector<int>{0, 1, 2});
}

#ifdef GRIDRISK_TOOL
namespace {

int run_tool(const std::string& args) {
  const std::string cmd = std::string(GRIDRISK_TOOL) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("the command line drives the same stages end to end") {
  const fs::path dir = fresh_dir("gridrisk_cli");
  const std::string case_path = write_file(dir / "tiny.grid", kTinyGrid);
  json j{{"case_file", case_path},
         {"output_dir", (dir / "out").string()},
         {"scenarios", 10},
         {"horizon", 3},
         {"delta_t", 1},
         {"seed", 3},
         {"train", {{"epochs", 2}, {"patience", 3}, {"batch", 4}}},
         {"risk", {{"significant_branches", 2}}}};
  const std::string cfg_path = write_file(dir / "cfg.json", j.dump(2));

  CHECK(run_tool("sample -c " + cfg_path) == 0);
  CHECK(fs::exists(dir / "out/scenarios.csv"));

  // assessing before labeling is an error, not a silent recompute
  CHECK(run_tool("assess --source milp -c " + cfg_path) == 1);

  CHECK(run_tool("label -c " + cfg_path) == 0);
  CHECK(fs::exists(dir / "out/labels.csv"));
  CHECK(run_tool("train -c " + cfg_path) == 0);
  for (const char* leaf : {"model_generation.bin", "model_shedding.bin", "model_flow.bin"})
    CHECK(fs::exists(dir / "out" / leaf));

  CHECK(run_tool("assess --source milp -c " + cfg_path) == 0);
  CHECK(fs::exists(dir / "out/risk_milp.json"));
  CHECK(run_tool("assess --source gnn -c " + cfg_path) == 0);

  const int cmp = run_tool("compare -c " + cfg_path);
  CHECK((cmp == 0 || cmp == 2));
  CHECK(fs::exists(dir / "out/divergence.csv"));

  CHECK(run_tool("report --source milp -c " + cfg_path) == 0);
  CHECK(fs::exists(dir / "out/risk_milp/shed_risk.csv"));

  // an override changes the effective config, so stale artifacts are refused
  CHECK(run_tool("label -c " + cfg_path + " --seed 11") == 1);
  CHECK(run_tool("sample -c " + cfg_path + " --seed 11") == 0);
  CHECK(run_tool("bogus -c " + cfg_path) != 0);
}
#endif
