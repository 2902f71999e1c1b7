#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gridrisk/lp.hpp"

namespace gridrisk {

struct LazyRow {
  double lo = -kInf;
  double up = kInf;
  std::vector<std::pair<int, double>> entries;
};

// Returns violated rows for a candidate point; empty means the point is
// acceptable. Rows returned must be globally valid cuts.
using LazyRowFn = std::function<std::vector<LazyRow>(const std::vector<double>& x)>;

struct MilpOptions {
  double gap = 1e-4;        // relative optimality gap
  double int_tol = 1e-6;    // integrality tolerance on binaries
  int node_limit = 10000;
  int lp_iter_limit = 200000;
  LazyRowFn lazy;           // optional
};

struct MilpResult {
  enum class Status { Optimal, GapLimited, Infeasible } status = Status::Infeasible;
  double objective = kInf;   // incumbent objective
  double best_bound = -kInf; // proven lower bound
  std::vector<double> x;
  std::vector<double> activity;
  long nodes = 0;
  long lp_iterations = 0;
};

// Branch and bound over the given binary columns: best-bound node selection,
// most-fractional branching, children warm-started from the parent basis.
// Lazy rows are appended globally and stored bases are extended with the new
// slacks, so they stay valid for every open node.
inline MilpResult solve_milp(LpSolver& lp, const std::vector<int>& binaries,
                             const MilpOptions& opt = {}) {
  struct Node {
    double bound;
    long id;
    std::vector<std::pair<int, uint8_t>> fix;  // cumulative (column, 0/1)
    Basis basis;
  };
  struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
      return a.bound != b.bound ? a.bound < b.bound : a.id < b.id;
    }
  };

  std::vector<std::pair<double, double>> base_bounds;
  base_bounds.reserve(binaries.size());
  for (int j : binaries) base_bounds.emplace_back(lp.col_lo(j), lp.col_up(j));

  MilpResult res;
  std::multiset<Node, NodeOrder> open;
  long next_id = 0;
  open.insert(Node{-kInf, next_id++, {}, Basis{}});

  std::vector<double> incumbent_x, incumbent_act;
  double incumbent = kInf;

  const auto gap_abs = [&](double inc) { return opt.gap * std::max(1.0, std::abs(inc)); };

  while (!open.empty()) {
    if (res.nodes >= opt.node_limit) break;
    Node node = std::move(open.extract(open.begin()).value());
    if (incumbent < kInf && node.bound >= incumbent - gap_abs(incumbent)) {
      // best-bound order: every remaining node is at least as bad
      open.insert(std::move(node));
      break;
    }
    ++res.nodes;

    // apply node bounds
    for (size_t k = 0; k < binaries.size(); ++k)
      lp.set_col_bounds(binaries[k], base_bounds[k].first, base_bounds[k].second);
    for (const auto& [col, val] : node.fix) lp.set_col_bounds(col, val, val);

    // solve with lazy-row rounds
    LpSolution sol;
    Basis warm = std::move(node.basis);
    bool lazy_ok = true;
    for (int round = 0;; ++round) {
      if (!warm.empty()) lp.extend_basis(warm);
      sol = lp.solve(warm.empty() ? nullptr : &warm, opt.lp_iter_limit);
      res.lp_iterations += sol.iterations;
      if (sol.status == LpStatus::IterLimit) throw std::runtime_error("milp: LP iteration limit hit");
      if (sol.status == LpStatus::Unbounded) throw std::runtime_error("milp: relaxation unbounded");
      if (sol.status != LpStatus::Optimal) break;
      if (!opt.lazy) break;
      if (round >= 200) { lazy_ok = false; break; }
      const std::vector<LazyRow> cuts = opt.lazy(sol.x);
      if (cuts.empty()) break;
      for (const LazyRow& c : cuts) lp.add_row(c.lo, c.up, c.entries);
      warm = std::move(sol.basis);
    }
    if (!lazy_ok) throw std::runtime_error("milp: lazy row separation did not converge");
    if (sol.status != LpStatus::Optimal) continue;  // infeasible node
    if (incumbent < kInf && sol.objective >= incumbent - gap_abs(incumbent)) continue;

    // branching variable: most fractional, lowest column index on ties
    int branch_col = -1;
    double best_frac = opt.int_tol;
    for (int j : binaries) {
      const double v = sol.x[j];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best_frac + 1e-12) {
        best_frac = frac;
        branch_col = j;
      }
    }

    if (branch_col < 0) {
      // integral: new incumbent
      if (sol.objective < incumbent - 1e-12) {
        incumbent = sol.objective;
        incumbent_x = sol.x;
        incumbent_act = sol.activity;
      }
      continue;
    }

    Node down{sol.objective, next_id++, node.fix, sol.basis};
    down.fix.emplace_back(branch_col, uint8_t{0});
    Node up{sol.objective, next_id++, node.fix, std::move(sol.basis)};
    up.fix.emplace_back(branch_col, uint8_t{1});
    open.insert(std::move(down));
    open.insert(std::move(up));
  }

  // restore base bounds
  for (size_t k = 0; k < binaries.size(); ++k)
    lp.set_col_bounds(binaries[k], base_bounds[k].first, base_bounds[k].second);

  double frontier = incumbent;
  if (!open.empty()) frontier = std::min(frontier, open.begin()->bound);

  if (incumbent == kInf) {
    res.status = open.empty() ? MilpResult::Status::Infeasible : MilpResult::Status::GapLimited;
    res.best_bound = open.empty() ? kInf : frontier;
    return res;
  }
  res.objective = incumbent;
  res.x = std::move(incumbent_x);
  res.activity = std::move(incumbent_act);
  const bool proven = open.empty() || frontier >= incumbent - gap_abs(incumbent);
  res.status = proven ? MilpResult::Status::Optimal : MilpResult::Status::GapLimited;
  res.best_bound = open.empty() ? incumbent : frontier;
  return res;
}

}  // namespace gridrisk
