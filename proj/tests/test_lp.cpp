#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <vector>

#include "gridrisk/lp.hpp"
#include "gridrisk/rng.hpp"

using namespace gridrisk;
using Catch::Matchers::WithinAbs;

namespace {

struct DenseLp {
  int n = 0, m = 0;
  std::vector<double> c, lo, up;        // per variable
  std::vector<std::vector<double>> a;   // m x n
  std::vector<double> rlo, rup;         // per row
};

LpSolver to_solver(const DenseLp& d) {
  LpSolver lp;
  for (int j = 0; j < d.n; ++j) lp.add_col(d.lo[j], d.up[j], d.c[j]);
  for (int r = 0; r < d.m; ++r) {
    std::vector<std::pair<int, double>> entries;
    for (int j = 0; j < d.n; ++j)
      if (d.a[r][j] != 0.0) entries.emplace_back(j, d.a[r][j]);
    lp.add_row(d.rlo[r], d.rup[r], entries);
  }
  return lp;
}

// Exhaustive vertex enumeration for instances whose variable bounds are all
// finite (the feasible set is then a polytope, so optimality and feasibility
// are decided entirely by vertices). Returns true if feasible, with the best
// objective in *best.
bool enumerate_optimum(const DenseLp& d, double* best) {
  constexpr double tol = 1e-8;
  bool feasible = false;
  *best = kInf;

  const auto check_point = [&](const std::vector<double>& x) {
    for (int j = 0; j < d.n; ++j)
      if (x[j] < d.lo[j] - tol || x[j] > d.up[j] + tol) return;
    for (int r = 0; r < d.m; ++r) {
      double act = 0.0;
      for (int j = 0; j < d.n; ++j) act += d.a[r][j] * x[j];
      if (act < d.rlo[r] - tol || act > d.rup[r] + tol) return;
    }
    double obj = 0.0;
    for (int j = 0; j < d.n; ++j) obj += d.c[j] * x[j];
    feasible = true;
    *best = std::min(*best, obj);
  };

  for (int rmask = 0; rmask < (1 << d.m); ++rmask) {
    const int k = std::popcount(static_cast<unsigned>(rmask));
    if (k > d.n) continue;
    std::vector<int> rows;
    for (int r = 0; r < d.m; ++r)
      if (rmask & (1 << r)) rows.push_back(r);
    for (int vmask = 0; vmask < (1 << d.n); ++vmask) {
      if (std::popcount(static_cast<unsigned>(vmask)) != k) continue;
      std::vector<int> dep, fixed;
      for (int j = 0; j < d.n; ++j) (vmask & (1 << j) ? dep : fixed).push_back(j);
      for (int smask = 0; smask < (1 << k); ++smask) {
        std::vector<double> target(k);
        bool ok = true;
        for (int i = 0; i < k && ok; ++i) {
          target[i] = (smask & (1 << i)) ? d.rup[rows[i]] : d.rlo[rows[i]];
          ok = std::isfinite(target[i]);
        }
        if (!ok) continue;
        for (int bmask = 0; bmask < (1 << static_cast<int>(fixed.size())); ++bmask) {
          std::vector<double> x(d.n, 0.0);
          for (size_t f = 0; f < fixed.size(); ++f)
            x[fixed[f]] = (bmask & (1 << f)) ? d.up[fixed[f]] : d.lo[fixed[f]];
          if (k == 0) {
            check_point(x);
            continue;
          }
          Mat sys(k, k);
          std::vector<double> rhs(k);
          for (int i = 0; i < k; ++i) {
            double adj = target[i];
            for (int f : fixed) adj -= d.a[rows[i]][f] * x[f];
            rhs[i] = adj;
            for (int jj = 0; jj < k; ++jj) sys(i, jj) = d.a[rows[i]][dep[jj]];
          }
          std::vector<double> xv;
          try {
            xv = solve_linear(sys, rhs);
          } catch (const std::exception&) {
            continue;
          }
          for (int jj = 0; jj < k; ++jj) x[dep[jj]] = xv[jj];
          check_point(x);
        }
      }
    }
  }
  return feasible;
}

DenseLp random_instance(uint64_t seed) {
  CounterRng rng(seed, 0);
  DenseLp d;
  d.n = 2 + static_cast<int>(rng.next_u64() % 3);  // 2..4
  d.m = 1 + static_cast<int>(rng.next_u64() % 4);  // 1..4
  d.c.resize(d.n);
  d.lo.resize(d.n);
  d.up.resize(d.n);
  for (int j = 0; j < d.n; ++j) {
    d.c[j] = 10.0 * rng.next_uniform() - 5.0;
    d.lo[j] = -3.0 * rng.next_uniform();
    d.up[j] = d.lo[j] + 0.5 + 4.0 * rng.next_uniform();
  }
  d.a.assign(d.m, std::vector<double>(d.n, 0.0));
  d.rlo.resize(d.m);
  d.rup.resize(d.m);
  for (int r = 0; r < d.m; ++r) {
    for (int j = 0; j < d.n; ++j) {
      const int pick = static_cast<int>(rng.next_u64() % 5);
      d.a[r][j] = pick == 4 ? 0.0 : pick - 1.5;  // -1.5, -0.5, 0.5, 1.5 or absent
    }
    const double center = 8.0 * rng.next_uniform() - 4.0;
    const double width = 0.5 + 5.0 * rng.next_uniform();
    const int shape = static_cast<int>(rng.next_u64() % 10);
    if (shape < 2) {  // equality
      d.rlo[r] = d.rup[r] = center;
    } else if (shape < 4) {  // one-sided
      d.rlo[r] = -kInf;
      d.rup[r] = center;
    } else {
      d.rlo[r] = center - width;
      d.rup[r] = center + width;
    }
  }
  return d;
}

void check_primal_feasible(const DenseLp& d, const std::vector<double>& x, double tol) {
  for (int j = 0; j < d.n; ++j) {
    CHECK(x[j] >= d.lo[j] - tol);
    CHECK(x[j] <= d.up[j] + tol);
  }
  for (int r = 0; r < d.m; ++r) {
    double act = 0.0;
    for (int j = 0; j < d.n; ++j) act += d.a[r][j] * x[j];
    CHECK(act >= d.rlo[r] - tol);
    CHECK(act <= d.rup[r] + tol);
  }
}

}  // namespace

TEST_CASE("simplex agrees with vertex enumeration on random boxed instances") {
  int feasible_count = 0, infeasible_count = 0;
  for (uint64_t seed = 1; seed <= 250; ++seed) {
    CAPTURE(seed);
    DenseLp d = random_instance(seed);
    double oracle = kInf;
    const bool feas = enumerate_optimum(d, &oracle);
    LpSolver lp = to_solver(d);
    const LpSolution sol = lp.solve();
    if (feas) {
      ++feasible_count;
      REQUIRE(sol.status == LpStatus::Optimal);
      REQUIRE_THAT(sol.objective, WithinAbs(oracle, 2e-6 + 1e-7 * std::abs(oracle)));
      check_primal_feasible(d, sol.x, 1e-6);
      for (int r = 0; r < d.m; ++r) {
        double act = 0.0;
        for (int j = 0; j < d.n; ++j) act += d.a[r][j] * sol.x[j];
        CHECK_THAT(sol.activity[r], WithinAbs(act, 1e-8));
      }
    } else {
      ++infeasible_count;
      REQUIRE(sol.status == LpStatus::Infeasible);
    }
  }
  // the generator must actually exercise both outcomes
  CHECK(feasible_count > 120);
  CHECK(infeasible_count > 40);
}

TEST_CASE("hand-checked equality and range constraints") {
  LpSolver lp;
  const int x = lp.add_col(0.0, 1.0, 1.0);
  const int y = lp.add_col(0.0, 1.0, 2.0);
  lp.add_row(1.0, 1.0, {{x, 1.0}, {y, 1.0}});
  const LpSolution sol = lp.solve();
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK_THAT(sol.objective, WithinAbs(1.0, 1e-9));
  CHECK_THAT(sol.x[x], WithinAbs(1.0, 1e-9));
  CHECK_THAT(sol.x[y], WithinAbs(0.0, 1e-9));
}

TEST_CASE("unbounded detection") {
  LpSolver lp;
  const int x = lp.add_col(0.0, kInf, -1.0);
  const int y = lp.add_col(0.0, kInf, 0.0);
  lp.add_row(-kInf, 0.0, {{x, 1.0}, {y, -1.0}});
  CHECK(lp.solve().status == LpStatus::Unbounded);

  LpSolver rowless;
  rowless.add_col(0.0, kInf, -2.0);
  CHECK(rowless.solve().status == LpStatus::Unbounded);
}

TEST_CASE("infeasible bounds versus rows") {
  LpSolver lp;
  const int x = lp.add_col(2.0, kInf, 1.0);
  lp.add_row(-kInf, 1.0, {{x, 1.0}});
  CHECK(lp.solve().status == LpStatus::Infeasible);
}

TEST_CASE("fixed variables participate in constraints") {
  LpSolver lp;
  const int x = lp.add_col(3.0, 3.0, 0.0);
  const int y = lp.add_col(0.0, 10.0, 1.0);
  lp.add_row(5.0, kInf, {{x, 1.0}, {y, 1.0}});
  const LpSolution sol = lp.solve();
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK_THAT(sol.x[y], WithinAbs(2.0, 1e-9));
}

TEST_CASE("negative lower bounds and free-ish variables") {
  LpSolver lp;
  const int x = lp.add_col(-5.0, 5.0, 1.0);
  const int y = lp.add_col(-5.0, 5.0, 1.0);
  lp.add_row(-1.0, -1.0, {{x, 1.0}, {y, -1.0}});  // x - y = -1
  const LpSolution sol = lp.solve();
  REQUIRE(sol.status == LpStatus::Optimal);
  // min x + y with x = y - 1 gives 2y - 1, minimized at y = -4
  CHECK_THAT(sol.objective, WithinAbs(-9.0, 1e-9));
}

TEST_CASE("warm start from a previous basis reaches the same optimum") {
  DenseLp d;
  double oracle = kInf;
  uint64_t seed = 7001;
  while (!enumerate_optimum(d = random_instance(seed), &oracle)) ++seed;
  REQUIRE(seed < 7020);  // a feasible instance shows up quickly
  LpSolver lp = to_solver(d);
  const LpSolution first = lp.solve();
  REQUIRE(first.status == LpStatus::Optimal);

  // perturb costs, warm-solve, compare against a cold solver on the same data
  DenseLp d2 = d;
  for (int j = 0; j < d.n; ++j) d2.c[j] += (j % 2 ? 0.25 : -0.25);
  LpSolver warm = to_solver(d2);
  const LpSolution warmed = warm.solve(&first.basis);
  LpSolver cold = to_solver(d2);
  const LpSolution colded = cold.solve();
  REQUIRE(warmed.status == LpStatus::Optimal);
  REQUIRE(colded.status == LpStatus::Optimal);
  CHECK_THAT(warmed.objective, WithinAbs(colded.objective, 1e-8));
  CHECK(warmed.iterations <= colded.iterations + 5);
}

TEST_CASE("extend basis covers rows added after the fact") {
  LpSolver lp;
  const int x = lp.add_col(0.0, 4.0, -1.0);
  const int y = lp.add_col(0.0, 4.0, -1.0);
  lp.add_row(-kInf, 6.0, {{x, 1.0}, {y, 1.0}});
  const LpSolution first = lp.solve();
  REQUIRE(first.status == LpStatus::Optimal);
  CHECK_THAT(first.objective, WithinAbs(-6.0, 1e-9));

  Basis b = first.basis;
  lp.add_row(-kInf, 2.0, {{x, 1.0}});  // cut x down
  lp.extend_basis(b);
  const LpSolution second = lp.solve(&b);
  REQUIRE(second.status == LpStatus::Optimal);
  CHECK_THAT(second.objective, WithinAbs(-6.0, 1e-9));
  CHECK(second.x[x] <= 2.0 + 1e-9);

  // cut total down too
  Basis b2 = second.basis;
  lp.set_row_bounds(0, -kInf, 3.0);
  const LpSolution third = lp.solve(&b2);
  REQUIRE(third.status == LpStatus::Optimal);
  CHECK_THAT(third.objective, WithinAbs(-3.0, 1e-9));
}

TEST_CASE("iteration limit reports without crashing") {
  DenseLp d = random_instance(4242);
  LpSolver lp = to_solver(d);
  const LpSolution sol = lp.solve(nullptr, 0);
  CHECK(sol.status == LpStatus::IterLimit);
}

TEST_CASE("degenerate stacked constraints still terminate") {
  // many redundant rows through the same vertex
  LpSolver lp;
  const int x = lp.add_col(0.0, 10.0, -1.0);
  const int y = lp.add_col(0.0, 10.0, -2.0);
  for (int k = 1; k <= 6; ++k)
    lp.add_row(-kInf, 4.0 * k, {{x, static_cast<double>(k)}, {y, static_cast<double>(k)}});
  lp.add_row(-kInf, 4.0, {{x, 1.0}, {y, 2.0}});
  const LpSolution sol = lp.solve();
  REQUIRE(sol.status == LpStatus::Optimal);
  // optimum: maximize x + 2y on x+y<=4, x+2y<=4 intersected with box
  CHECK_THAT(sol.objective, WithinAbs(-4.0, 1e-8));
}
