#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gridrisk/labels.hpp"

using namespace gridrisk;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

const char* kTwoZone = R"(
[meta]
name twozone
slack_bus 1
shed_penalty 900

[zone]
1 40 8 15 70 2.0 8.0 1
2 35 7 12 60 2.2 7.5 0

[bus]
1 1 20
2 1 20 1.0
3 2 35

[gen]
1 1 thermal 8 45 12 25 120 60 2 2 40 1 20 2
2 3 thermal 6 38 20 20 100 50 1 1 38 1 10 1

[branch]
1 1 2 0.15 40
2 2 3 0.2 35
3 1 3 0.25 30
)";

// Minimum output of the forced-on unit exceeds any possible load, so the
// balance row cannot hold and the solver reports infeasibility.
const char* kStuck = R"(
[meta]
name stuck
slack_bus 1

[zone]
1 10 1 5 15 2.0 8.0 0

[bus]
1 1 10

[gen]
1 1 thermal 50 60 10 10 100 50 4 1 60 1 50 1
)";

Grid parse_str(const char* text) {
  std::istringstream in(text);
  return parse_grid(in);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Fixture {
  Grid g;
  DcModel dc;
  ScenarioSet s;

  explicit Fixture(int n = 6, int t = 4) : g(parse_str(kTwoZone)), dc(DcModel::build(g)) {
    WindCurve curve;
    curve.v_min = 3.0;
    curve.v_max = 13.0;
    curve.p_r = 12.0;
    s = generate_scenarios(g, n, t, 42, nullptr, true, curve);
    s.config_hash = "feedc0de00000001";
  }
};

std::string tmp_dir(const char* leaf) {
  const auto d = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

}  // namespace

TEST_CASE("labeled scenarios round-trip through the csv byte for byte") {
  Fixture fx;
  LabelJob job;
  job.config_hash = fx.s.config_hash;
  const LabelSet set = label_scenarios(fx.g, fx.dc, fx.s, job);
  REQUIRE(static_cast<int>(set.records.size()) == fx.s.n);
  REQUIRE(set.n_usable() == fx.s.n);

  const std::string dir = tmp_dir("gr_labels_rt");
  write_labels_csv(set, dir + "/labels.csv");
  const LabelSet back = read_labels_csv(dir + "/labels.csv");

  REQUIRE(back.t == set.t);
  REQUIRE(back.config_hash == set.config_hash);
  REQUIRE(back.zone_ids == set.zone_ids);
  REQUIRE(back.bus_ids == set.bus_ids);
  REQUIRE(back.branch_ids == set.branch_ids);
  for (int i = 0; i < fx.s.n; ++i) {
    const LabelRecord &a = set.records[i], &b = back.records[i];
    CHECK(a.status == b.status);
    CHECK(a.clamp_events == b.clamp_events);
    CHECK_THAT(b.objective, WithinAbs(a.objective, 0.0));
    for (int step = 0; step < set.t; ++step) {
      CHECK_THAT(b.gen_sys[step], WithinAbs(a.gen_sys[step], 0.0));
      CHECK_THAT(b.shed_sys[step], WithinAbs(a.shed_sys[step], 0.0));
      CHECK_THAT(b.shed_reserve[step], WithinAbs(a.shed_reserve[step], 0.0));
      CHECK_THAT(b.shed_nonreserve[step], WithinAbs(a.shed_nonreserve[step], 0.0));
      for (int z = 0; z < 2; ++z) {
        CHECK_THAT(b.gen_zonal(step, z), WithinAbs(a.gen_zonal(step, z), 0.0));
        CHECK_THAT(b.shed_zonal(step, z), WithinAbs(a.shed_zonal(step, z), 0.0));
      }
      for (int bix = 0; bix < 3; ++bix)
        CHECK_THAT(b.inj(step, bix), WithinAbs(a.inj(step, bix), 0.0));
      for (int l = 0; l < 3; ++l)
        CHECK_THAT(b.flows(step, l), WithinAbs(a.flows(step, l), 0.0));
    }
  }

  write_labels_csv(back, dir + "/labels2.csv");
  CHECK(slurp(dir + "/labels.csv") == slurp(dir + "/labels2.csv"));
}

TEST_CASE("label output does not depend on the worker count") {
  Fixture fx;
  LabelJob serial;
  serial.config_hash = fx.s.config_hash;
  LabelJob pooled = serial;
  pooled.jobs = 3;

  const LabelSet a = label_scenarios(fx.g, fx.dc, fx.s, serial);
  const LabelSet b = label_scenarios(fx.g, fx.dc, fx.s, pooled);

  const std::string dir = tmp_dir("gr_labels_jobs");
  write_labels_csv(a, dir + "/a.csv");
  write_labels_csv(b, dir + "/b.csv");
  CHECK(slurp(dir + "/a.csv") == slurp(dir + "/b.csv"));
}

TEST_CASE("interrupted labeling resumes from part files without changing the result") {
  Fixture fx;
  const std::string dir = tmp_dir("gr_labels_resume");
  LabelJob job;
  job.config_hash = fx.s.config_hash;
  job.parts_dir = dir + "/parts";

  LabelRunInfo full;
  const LabelSet once = label_scenarios(fx.g, fx.dc, fx.s, job, &full);
  REQUIRE(full.solved == fx.s.n);
  write_labels_csv(once, dir + "/labels.csv");
  const std::string uninterrupted = slurp(dir + "/labels.csv");

  // drop two parts to simulate a killed run
  std::filesystem::remove(label_part_path(job.parts_dir, 1));
  std::filesystem::remove(label_part_path(job.parts_dir, 4));

  LabelRunInfo resumed;
  const LabelSet again = label_scenarios(fx.g, fx.dc, fx.s, job, &resumed);
  CHECK(resumed.solved == 2);
  CHECK(resumed.reused == fx.s.n - 2);
  write_labels_csv(again, dir + "/labels.csv");
  CHECK(slurp(dir + "/labels.csv") == uninterrupted);
}

TEST_CASE("a part from a different configuration is re-solved, not trusted") {
  Fixture fx;
  const std::string dir = tmp_dir("gr_labels_stale");
  LabelJob job;
  job.config_hash = fx.s.config_hash;
  job.parts_dir = dir + "/parts";
  label_scenarios(fx.g, fx.dc, fx.s, job);

  const std::string part = label_part_path(job.parts_dir, 2);
  std::string text = slurp(part);
  const auto pos = text.find(fx.s.config_hash);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, fx.s.config_hash.size(), "00000000deadbeef");
  std::ofstream(part, std::ios::binary) << text;

  LabelRunInfo info;
  const LabelSet set = label_scenarios(fx.g, fx.dc, fx.s, job, &info);
  CHECK(info.solved == 1);
  CHECK(info.reused == fx.s.n - 1);
  CHECK(set.n_usable() == fx.s.n);
}

TEST_CASE("an unsolvable scenario becomes a failed record, not a crash") {
  const Grid g = parse_str(kStuck);
  const DcModel dc = DcModel::build(g);
  const ScenarioSet s = generate_scenarios(g, 3, 4, 7);

  LabelJob job;
  job.config_hash = "feedc0de00000002";
  const LabelSet set = label_scenarios(g, dc, s, job);
  REQUIRE(static_cast<int>(set.records.size()) == 3);
  CHECK(set.n_usable() == 0);
  for (const LabelRecord& rec : set.records) {
    CHECK(rec.status == LabelStatus::Failed);
    CHECK_FALSE(rec.usable());
    CHECK_FALSE(std::isfinite(rec.objective));
    CHECK(rec.flows.rows == 4);
  }

  const std::string dir = tmp_dir("gr_labels_failed");
  write_labels_csv(set, dir + "/labels.csv");
  const LabelSet back = read_labels_csv(dir + "/labels.csv");
  CHECK(back.n_usable() == 0);
  CHECK(back.records[0].status == LabelStatus::Failed);
}

TEST_CASE("the reader pins parse errors to a file and line") {
  Fixture fx(2, 2);
  LabelJob job;
  job.config_hash = fx.s.config_hash;
  const LabelSet set = label_scenarios(fx.g, fx.dc, fx.s, job);
  const std::string dir = tmp_dir("gr_labels_bad");
  write_labels_csv(set, dir + "/labels.csv");

  std::string text = slurp(dir + "/labels.csv");
  const auto last = text.find_last_of('\n', text.size() - 2);
  text = text.substr(0, last + 1) + "9,9,optimal,notanumber\n";
  std::ofstream(dir + "/bad.csv", std::ios::binary) << text;

  CHECK_THROWS_WITH(read_labels_csv(dir + "/bad.csv"), ContainsSubstring("bad.csv"));
}
