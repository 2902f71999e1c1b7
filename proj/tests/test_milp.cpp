#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gridrisk/milp.hpp"
#include "gridrisk/rng.hpp"

using namespace gridrisk;
using Catch::Matchers::WithinAbs;

namespace {

struct MixedInstance {
  int nb = 0, nc = 0;
  std::vector<double> c, lo, up;       // binaries first, then continuous
  std::vector<std::vector<double>> a;  // rows x vars
  std::vector<double> rlo, rup;

  int n() const { return nb + nc; }

  LpSolver solver() const {
    LpSolver lp;
    for (int j = 0; j < n(); ++j) lp.add_col(lo[j], up[j], c[j]);
    for (size_t r = 0; r < a.size(); ++r) {
      std::vector<std::pair<int, double>> e;
      for (int j = 0; j < n(); ++j)
        if (a[r][j] != 0.0) e.emplace_back(j, a[r][j]);
      lp.add_row(rlo[r], rup[r], e);
    }
    return lp;
  }

  std::vector<int> binaries() const {
    std::vector<int> b(nb);
    for (int j = 0; j < nb; ++j) b[j] = j;
    return b;
  }
};

MixedInstance random_mixed(uint64_t seed, int nb, int nc, int m) {
  CounterRng rng(seed, 0);
  MixedInstance d;
  d.nb = nb;
  d.nc = nc;
  for (int j = 0; j < nb; ++j) {
    d.c.push_back(10.0 * rng.next_uniform() - 5.0);
    d.lo.push_back(0.0);
    d.up.push_back(1.0);
  }
  for (int j = 0; j < nc; ++j) {
    d.c.push_back(10.0 * rng.next_uniform() - 5.0);
    d.lo.push_back(-2.0);
    d.up.push_back(3.0);
  }
  d.a.assign(m, std::vector<double>(d.n(), 0.0));
  for (int r = 0; r < m; ++r) {
    for (int j = 0; j < d.n(); ++j) {
      const int pick = static_cast<int>(rng.next_u64() % 4);
      d.a[r][j] = pick == 3 ? 0.0 : pick - 1.0;  // -1, 0 (twice as likely via 3), 1... keep simple
    }
    const double center = 6.0 * rng.next_uniform() - 3.0;
    const int shape = static_cast<int>(rng.next_u64() % 8);
    if (shape == 0) {
      d.rlo.push_back(center);
      d.rup.push_back(center);
    } else if (shape <= 3) {
      d.rlo.push_back(-kInf);
      d.rup.push_back(center);
    } else {
      d.rlo.push_back(center - 2.0);
      d.rup.push_back(center + 2.0);
    }
  }
  return d;
}

// Brute force: every binary pattern, LP over the continuous remainder.
bool brute_force(const MixedInstance& d, double* best) {
  *best = kInf;
  bool feasible = false;
  for (int mask = 0; mask < (1 << d.nb); ++mask) {
    LpSolver lp = d.solver();
    for (int j = 0; j < d.nb; ++j) {
      const double v = (mask >> j) & 1;
      lp.set_col_bounds(j, v, v);
    }
    const LpSolution sol = lp.solve();
    if (sol.status != LpStatus::Optimal) continue;
    feasible = true;
    *best = std::min(*best, sol.objective);
  }
  return feasible;
}

}  // namespace

TEST_CASE("branch and bound matches knapsack enumeration") {
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    CAPTURE(seed);
    CounterRng rng(seed, 5);
    const int n = 8 + static_cast<int>(rng.next_u64() % 5);  // 8..12 items
    std::vector<double> value(n), weight(n);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      value[i] = 1.0 + 9.0 * rng.next_uniform();
      weight[i] = 1.0 + 9.0 * rng.next_uniform();
      wsum += weight[i];
    }
    const double cap = 0.4 * wsum;

    double best = 0.0;  // empty knapsack always feasible
    for (int mask = 0; mask < (1 << n); ++mask) {
      double v = 0.0, w = 0.0;
      for (int i = 0; i < n; ++i)
        if ((mask >> i) & 1) {
          v += value[i];
          w += weight[i];
        }
      if (w <= cap) best = std::min(best, -v);
    }

    LpSolver lp;
    std::vector<int> bins;
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < n; ++i) {
      bins.push_back(lp.add_col(0.0, 1.0, -value[i]));
      row.emplace_back(i, weight[i]);
    }
    lp.add_row(-kInf, cap, row);
    MilpOptions opt;
    opt.gap = 1e-9;
    const MilpResult res = solve_milp(lp, bins, opt);
    REQUIRE(res.status == MilpResult::Status::Optimal);
    REQUIRE_THAT(res.objective, WithinAbs(best, 1e-9));
    double w = 0.0;
    for (int i = 0; i < n; ++i) {
      const double xi = res.x[i];
      REQUIRE((std::abs(xi) < 1e-6 || std::abs(xi - 1.0) < 1e-6));
      w += weight[i] * xi;
    }
    CHECK(w <= cap + 1e-6);
  }
}

TEST_CASE("branch and bound matches brute force on mixed binary-continuous instances") {
  int feas = 0, infeas = 0;
  for (uint64_t seed = 100; seed < 160; ++seed) {
    CAPTURE(seed);
    CounterRng rng(seed, 9);
    const int nb = 2 + static_cast<int>(rng.next_u64() % 5);  // 2..6
    const int nc = static_cast<int>(rng.next_u64() % 4);      // 0..3
    const int m = 2 + static_cast<int>(rng.next_u64() % 3);   // 2..4
    const MixedInstance d = random_mixed(seed, nb, nc, m);
    double oracle = kInf;
    const bool ok = brute_force(d, &oracle);
    LpSolver lp = d.solver();
    MilpOptions opt;
    opt.gap = 1e-9;
    const MilpResult res = solve_milp(lp, d.binaries(), opt);
    if (ok) {
      ++feas;
      REQUIRE(res.status == MilpResult::Status::Optimal);
      REQUIRE_THAT(res.objective, WithinAbs(oracle, 1e-6 + 1e-7 * std::abs(oracle)));
      CHECK(res.best_bound <= res.objective + 1e-6);
      for (int j = 0; j < nb; ++j)
        REQUIRE((std::abs(res.x[j]) < 1e-6 || std::abs(res.x[j] - 1.0) < 1e-6));
    } else {
      ++infeas;
      REQUIRE(res.status == MilpResult::Status::Infeasible);
    }
  }
  CHECK(feas >= 30);
  CHECK(infeas >= 10);
}

TEST_CASE("solve is deterministic across repeated runs") {
  const MixedInstance d = random_mixed(777, 6, 2, 3);
  LpSolver a = d.solver(), b = d.solver();
  const MilpResult ra = solve_milp(a, d.binaries(), {});
  const MilpResult rb = solve_milp(b, d.binaries(), {});
  REQUIRE(ra.status == rb.status);
  if (ra.status != MilpResult::Status::Infeasible) {
    CHECK(ra.objective == rb.objective);
    CHECK(ra.x == rb.x);
    CHECK(ra.nodes == rb.nodes);
  }
}

TEST_CASE("node limit yields a bound without an incumbent claim") {
  // a knapsack that needs branching
  LpSolver lp;
  std::vector<int> bins;
  std::vector<std::pair<int, double>> row;
  const double values[] = {6, 5, 4, 3, 2, 6, 5, 4};
  const double weights[] = {5, 4, 3, 3, 2, 5, 4, 3};
  for (int i = 0; i < 8; ++i) {
    bins.push_back(lp.add_col(0.0, 1.0, -values[i]));
    row.emplace_back(i, weights[i]);
  }
  lp.add_row(-kInf, 9.0, row);
  MilpOptions opt;
  opt.node_limit = 1;
  const MilpResult res = solve_milp(lp, bins, opt);
  CHECK(res.status == MilpResult::Status::GapLimited);
  CHECK(res.best_bound > -kInf);

  // same instance, full run: bound from the truncated run must be valid
  LpSolver lp2;
  std::vector<int> bins2;
  std::vector<std::pair<int, double>> row2;
  for (int i = 0; i < 8; ++i) {
    bins2.push_back(lp2.add_col(0.0, 1.0, -values[i]));
    row2.emplace_back(i, weights[i]);
  }
  lp2.add_row(-kInf, 9.0, row2);
  const MilpResult full = solve_milp(lp2, bins2, {});
  REQUIRE(full.status == MilpResult::Status::Optimal);
  CHECK(res.best_bound <= full.objective + 1e-9);
}

TEST_CASE("loose gap terminates early but keeps the bound invariant") {
  const MixedInstance d = random_mixed(4321, 6, 2, 4);
  double oracle = kInf;
  if (!brute_force(d, &oracle)) return;  // unlucky seed shape; instance checked elsewhere
  LpSolver lp = d.solver();
  MilpOptions opt;
  opt.gap = 0.5;
  const MilpResult res = solve_milp(lp, d.binaries(), opt);
  REQUIRE(res.status != MilpResult::Status::Infeasible);
  CHECK(res.best_bound <= res.objective + 1e-9);
  CHECK(res.objective + 1e-9 >= oracle);  // incumbent is a real feasible point
  CHECK(res.best_bound <= oracle + 1e-9);
}

TEST_CASE("lazy rows are separated and enforced") {
  LpSolver lp;
  const int x = lp.add_col(0.0, 1.0, -1.0);
  const int y = lp.add_col(0.0, 1.0, -1.0);
  int calls = 0;
  MilpOptions opt;
  opt.lazy = [&](const std::vector<double>& v) {
    ++calls;
    std::vector<LazyRow> cuts;
    if (v[0] + v[1] > 1.0 + 1e-9) {
      LazyRow r;
      r.lo = -kInf;
      r.up = 1.0;
      r.entries = {{0, 1.0}, {1, 1.0}};
      cuts.push_back(r);
    }
    return cuts;
  };
  const MilpResult res = solve_milp(lp, {x, y}, opt);
  REQUIRE(res.status == MilpResult::Status::Optimal);
  CHECK(calls >= 2);  // at least one violation round plus one clean pass
  CHECK_THAT(res.objective, WithinAbs(-1.0, 1e-9));
  CHECK(res.x[0] + res.x[1] <= 1.0 + 1e-9);
}

TEST_CASE("pure lp passthrough with no binaries") {
  LpSolver lp;
  const int x = lp.add_col(0.0, 2.0, -1.0);
  lp.add_row(-kInf, 1.5, {{x, 1.0}});
  const MilpResult res = solve_milp(lp, {}, {});
  REQUIRE(res.status == MilpResult::Status::Optimal);
  CHECK_THAT(res.objective, WithinAbs(-1.5, 1e-9));
  CHECK(res.nodes == 1);
}
