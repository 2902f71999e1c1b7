#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gridrisk/matrix.hpp"

namespace gridrisk {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

enum class VarState : uint8_t { AtLower = 0, AtUpper = 1, Basic = 2, FreeNonbasic = 3 };

struct Basis {
  std::vector<VarState> state;  // one per variable (structural, then one slack per row)
  std::vector<int> basic;       // row -> variable index
  bool empty() const { return basic.empty(); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> x;         // structural variable values
  std::vector<double> activity;  // row activities a_i . x
  Basis basis;
  int iterations = 0;
};

// Bounded-variable revised simplex over rows a_i.x = s_i with ranged slacks
// s_i in [row_lo, row_hi]. Phase 1 is composite (no artificials): slack basis
// starts, out-of-bound basics carry +/-1 pricing costs and the ratio test
// blocks at the first feasibility crossing. Dense explicit inverse with
// product-form updates, refactorized periodically. All ties break on lowest
// index, so runs are deterministic.
class LpSolver {
 public:
  int add_col(double lo, double up, double cost) {
    col_lo_.push_back(lo);
    col_up_.push_back(up);
    cost_.push_back(cost);
    cols_.emplace_back();
    return static_cast<int>(cols_.size()) - 1;
  }

  int add_row(double lo, double up, const std::vector<std::pair<int, double>>& entries) {
    const int r = static_cast<int>(row_lo_.size());
    row_lo_.push_back(lo);
    row_up_.push_back(up);
    for (const auto& [j, coef] : entries) {
      if (j < 0 || j >= n_struct()) throw std::invalid_argument("add_row: bad column index");
      if (coef != 0.0) cols_[j].emplace_back(r, coef);
    }
    return r;
  }

  int n_struct() const { return static_cast<int>(cols_.size()); }
  int n_rows() const { return static_cast<int>(row_lo_.size()); }
  int n_total() const { return n_struct() + n_rows(); }

  void set_col_bounds(int j, double lo, double up) {
    col_lo_[j] = lo;
    col_up_[j] = up;
  }
  double col_lo(int j) const { return col_lo_[j]; }
  double col_up(int j) const { return col_up_[j]; }
  void set_cost(int j, double c) { cost_[j] = c; }
  double cost(int j) const { return cost_[j]; }
  double row_lo(int r) const { return row_lo_[r]; }
  double row_up(int r) const { return row_up_[r]; }
  void set_row_bounds(int r, double lo, double up) {
    row_lo_[r] = lo;
    row_up_[r] = up;
  }

  // Marks the slacks of rows appended after `b` was captured as basic, so an
  // old basis stays valid after new rows are added.
  void extend_basis(Basis& b) const {
    const int have_rows = static_cast<int>(b.basic.size());
    const int old_total = static_cast<int>(b.state.size());
    const int old_struct = old_total - have_rows;
    if (old_struct < 0 || old_struct > n_struct()) throw std::invalid_argument("extend_basis: shape mismatch");
    std::vector<VarState> st(n_total(), VarState::AtLower);
    for (int j = 0; j < old_struct; ++j) st[j] = b.state[j];
    for (int j = old_struct; j < n_struct(); ++j) st[j] = default_state(j);
    for (int r = 0; r < have_rows; ++r) {
      st[n_struct() + r] = b.state[old_struct + r];
      if (b.basic[r] >= old_struct) b.basic[r] += n_struct() - old_struct;
    }
    for (int r = have_rows; r < n_rows(); ++r) {
      st[n_struct() + r] = VarState::Basic;
      b.basic.push_back(n_struct() + r);
    }
    b.state = std::move(st);
  }

  LpSolution solve(const Basis* warm = nullptr, int iter_limit = 200000) {
    const int m = n_rows();
    const int n = n_total();
    if (m == 0) return solve_rowless();

    if (warm && static_cast<int>(warm->state.size()) == n &&
        static_cast<int>(warm->basic.size()) == m && set_basis(*warm)) {
      // warm basis accepted
    } else {
      cold_basis();
    }
    if (!refactor()) {
      cold_basis();
      if (!refactor()) throw std::runtime_error("lp: slack basis refactorization failed");
    }
    compute_xb();

    double cmax = 1.0;
    for (int j = 0; j < n_struct(); ++j) cmax = std::max(cmax, std::abs(cost_[j]));
    const double dual_tol = 1e-9 * cmax;

    int iters = 0;
    int degen_streak = 0;
    bool bland = false;
    int pivots_since_refactor = 0;
    std::vector<double> y(m), w(m);
    d_.assign(m, 0.0);

    while (true) {
      if (iters++ > iter_limit) return finish(LpStatus::IterLimit, iters);
      const bool phase1 = max_violation() > kFeasTol;

      // pricing vector
      if (phase1) {
        for (int i = 0; i < m; ++i) {
          const double v = xb_[i];
          d_[i] = v > up_of(basic_[i]) + kFeasTol ? 1.0 : (v < lo_of(basic_[i]) - kFeasTol ? -1.0 : 0.0);
        }
        for (int k = 0; k < m; ++k) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += d_[i] * binv_(i, k);
          y[k] = acc;
        }
      } else {
        for (int k = 0; k < m; ++k) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) {
            const int bj = basic_[i];
            if (bj < n_struct()) acc += cost_[bj] * binv_(i, k);
          }
          y[k] = acc;
        }
      }
      const double tol = phase1 ? kFeasTol * 0.01 : dual_tol;

      // entering choice
      int enter = -1, dir = 0;
      double best = tol;
      for (int j = 0; j < n; ++j) {
        if (state_[j] == VarState::Basic) continue;
        const double lo = lo_of(j), up = up_of(j);
        if (lo == up) continue;  // fixed
        double rc = phase1 ? 0.0 : (j < n_struct() ? cost_[j] : 0.0);
        rc -= dot_col(y, j);
        int d = 0;
        if (state_[j] == VarState::AtLower && rc < -tol) d = 1;
        else if (state_[j] == VarState::AtUpper && rc > tol) d = -1;
        else if (state_[j] == VarState::FreeNonbasic && std::abs(rc) > tol) d = rc > 0 ? -1 : 1;
        if (!d) continue;
        if (bland) { enter = j; dir = d; break; }
        if (std::abs(rc) > best) {
          best = std::abs(rc);
          enter = j;
          dir = d;
        }
      }
      if (enter < 0) {
        if (!phase1) return finish(LpStatus::Optimal, iters);
        // guard against drift before declaring infeasible
        if (!refactor()) throw std::runtime_error("lp: refactorization failed");
        compute_xb();
        if (max_violation() > kFeasTol) return finish(LpStatus::Infeasible, iters);
        continue;
      }

      // direction through the basis
      col_times_binv(enter, w);

      // ratio test; in phase 1 infeasible basics block at the bound they
      // violate (their feasibility crossing), feasible basics at their near
      // bound, plus the entering variable's own range.
      double delta = kInf;
      int leave = -1;        // index into basic_
      int leave_side = 0;    // 0 lower, 1 upper
      {
        const double own = up_of(enter) - lo_of(enter);
        if (std::isfinite(own)) delta = own;
        double best_pivot = 0.0;
        for (int i = 0; i < m; ++i) {
          const double rate = -dir * w[i];
          if (std::abs(rate) < kPivotTol) continue;
          const double lo = lo_of(basic_[i]), up = up_of(basic_[i]);
          double target;
          int side;
          if (rate > 0.0) {
            if (xb_[i] < lo - kFeasTol) { target = lo; side = 0; }
            else if (std::isfinite(up) && xb_[i] <= up + kFeasTol) { target = up; side = 1; }
            else continue;
          } else {
            if (xb_[i] > up + kFeasTol) { target = up; side = 1; }
            else if (std::isfinite(lo) && xb_[i] >= lo - kFeasTol) { target = lo; side = 0; }
            else continue;
          }
          if (!std::isfinite(target)) continue;
          double di = (target - xb_[i]) / rate;
          if (di < 0.0) di = 0.0;
          const bool better =
              di < delta - kRatioTol ||
              (di < delta + kRatioTol &&
               (leave < 0 ||
                (!bland && std::abs(rate) > best_pivot + 1e-12) ||
                (bland && basic_[i] < basic_[leave])));
          if (better) {
            delta = std::min(delta, di);
            leave = i;
            leave_side = side;
            best_pivot = std::abs(rate);
          }
        }
      }
      if (!std::isfinite(delta))
        return finish(phase1 ? LpStatus::Infeasible : LpStatus::Unbounded, iters);

      if (delta <= kDegenTol) ++degen_streak; else degen_streak = 0;
      bland = degen_streak >= 40;

      if (leave < 0) {
        // bound flip: entering runs to its opposite bound
        for (int i = 0; i < m; ++i) xb_[i] -= dir * delta * w[i];
        state_[enter] = state_[enter] == VarState::AtLower ? VarState::AtUpper : VarState::AtLower;
        continue;
      }

      // pivot
      const double enter_val = value_of(enter) + dir * delta;
      const int out_var = basic_[leave];
      for (int i = 0; i < m; ++i)
        if (i != leave) xb_[i] -= dir * delta * w[i];
      state_[out_var] = leave_side ? VarState::AtUpper : VarState::AtLower;
      state_[enter] = VarState::Basic;
      basic_[leave] = enter;
      xb_[leave] = enter_val;

      // product-form update of the explicit inverse
      const double piv = w[leave];
      if (std::abs(piv) < kPivotTol) throw std::runtime_error("lp: unstable pivot");
      for (int i = 0; i < m; ++i) {
        if (i == leave) continue;
        const double f = w[i] / piv;
        if (f == 0.0) continue;
        for (int k = 0; k < m; ++k) binv_(i, k) -= f * binv_(leave, k);
      }
      const double inv_piv = 1.0 / piv;
      for (int k = 0; k < m; ++k) binv_(leave, k) *= inv_piv;

      if (++pivots_since_refactor >= 100) {
        pivots_since_refactor = 0;
        if (!refactor()) throw std::runtime_error("lp: refactorization failed");
        compute_xb();
      }
    }
  }

 private:
  static constexpr double kFeasTol = 1e-7;
  static constexpr double kPivotTol = 1e-9;
  static constexpr double kRatioTol = 1e-9;
  static constexpr double kDegenTol = 1e-10;

  std::vector<double> col_lo_, col_up_, cost_;
  std::vector<std::vector<std::pair<int, double>>> cols_;  // structural columns: (row, coef)
  std::vector<double> row_lo_, row_up_;

  // solver state
  std::vector<VarState> state_;
  std::vector<int> basic_;
  std::vector<double> xb_;
  std::vector<double> d_;  // phase-1 pricing costs
  Mat binv_;

  double lo_of(int j) const { return j < n_struct() ? col_lo_[j] : row_lo_[j - n_struct()]; }
  double up_of(int j) const { return j < n_struct() ? col_up_[j] : row_up_[j - n_struct()]; }

  VarState default_state(int j) const {
    if (std::isfinite(lo_of(j))) return VarState::AtLower;
    if (std::isfinite(up_of(j))) return VarState::AtUpper;
    return VarState::FreeNonbasic;
  }

  double value_of(int j) const {
    switch (state_[j]) {
      case VarState::AtLower: return lo_of(j);
      case VarState::AtUpper: return up_of(j);
      case VarState::FreeNonbasic: return 0.0;
      case VarState::Basic: break;
    }
    for (size_t i = 0; i < basic_.size(); ++i)
      if (basic_[i] == j) return xb_[i];
    throw std::logic_error("lp: basic variable not in basis list");
  }

  double dot_col(const std::vector<double>& y, int j) const {
    if (j >= n_struct()) return -y[j - n_struct()];
    double acc = 0.0;
    for (const auto& [r, coef] : cols_[j]) acc += y[r] * coef;
    return acc;
  }

  // w = B^{-1} A_j
  void col_times_binv(int j, std::vector<double>& w) const {
    const int m = n_rows();
    if (j >= n_struct()) {
      const int r = j - n_struct();
      for (int i = 0; i < m; ++i) w[i] = -binv_(i, r);
      return;
    }
    for (int i = 0; i < m; ++i) w[i] = 0.0;
    for (const auto& [r, coef] : cols_[j])
      for (int i = 0; i < m; ++i) w[i] += binv_(i, r) * coef;
  }

  void cold_basis() {
    state_.assign(n_total(), VarState::AtLower);
    for (int j = 0; j < n_struct(); ++j) state_[j] = default_state(j);
    basic_.resize(n_rows());
    for (int r = 0; r < n_rows(); ++r) {
      basic_[r] = n_struct() + r;
      state_[n_struct() + r] = VarState::Basic;
    }
  }

  bool set_basis(const Basis& b) {
    int nb = 0;
    for (VarState s : b.state) nb += s == VarState::Basic;
    if (nb != n_rows()) return false;
    for (int v : b.basic)
      if (v < 0 || v >= n_total() || b.state[v] != VarState::Basic) return false;
    state_ = b.state;
    basic_ = b.basic;
    return true;
  }

  bool refactor() {
    const int m = n_rows();
    Mat b(m, m);
    for (int r = 0; r < m; ++r) {
      const int j = basic_[r];
      if (j >= n_struct()) b(j - n_struct(), r) = -1.0;
      else
        for (const auto& [row, coef] : cols_[j]) b(row, r) += coef;
    }
    try {
      binv_ = invert(b);
    } catch (const std::exception&) {
      return false;
    }
    return true;
  }

  void compute_xb() {
    const int m = n_rows();
    std::vector<double> r(m, 0.0);
    for (int j = 0; j < n_total(); ++j) {
      if (state_[j] == VarState::Basic) continue;
      double v = state_[j] == VarState::AtLower ? lo_of(j)
                 : state_[j] == VarState::AtUpper ? up_of(j) : 0.0;
      if (v == 0.0) continue;
      if (j >= n_struct()) r[j - n_struct()] -= v;
      else
        for (const auto& [row, coef] : cols_[j]) r[row] += coef * v;
    }
    xb_.assign(m, 0.0);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc -= binv_(i, k) * r[k];
      xb_[i] = acc;
    }
  }

  double max_violation() const {
    double v = 0.0;
    for (size_t i = 0; i < basic_.size(); ++i) {
      const double lo = lo_of(basic_[i]), up = up_of(basic_[i]);
      if (xb_[i] < lo) v = std::max(v, lo - xb_[i]);
      if (xb_[i] > up) v = std::max(v, xb_[i] - up);
    }
    return v;
  }

  LpSolution finish(LpStatus st, int iters) {
    LpSolution sol;
    sol.status = st;
    sol.iterations = iters;
    sol.x.assign(n_struct(), 0.0);
    sol.activity.assign(n_rows(), 0.0);
    for (int j = 0; j < n_struct(); ++j)
      if (state_[j] != VarState::Basic) sol.x[j] = value_of(j);
    for (int r = 0; r < n_rows(); ++r) {
      const int j = n_struct() + r;
      if (state_[j] != VarState::Basic) sol.activity[r] = value_of(j);
    }
    for (size_t i = 0; i < basic_.size(); ++i) {
      const int j = basic_[i];
      if (j < n_struct()) sol.x[j] = xb_[i];
      else sol.activity[j - n_struct()] = xb_[i];
    }
    double obj = 0.0;
    for (int j = 0; j < n_struct(); ++j) obj += cost_[j] * sol.x[j];
    sol.objective = obj;
    sol.basis.state = state_;
    sol.basis.basic = basic_;
    return sol;
  }

  LpSolution solve_rowless() {
    LpSolution sol;
    sol.iterations = 0;
    sol.x.assign(n_struct(), 0.0);
    double obj = 0.0;
    for (int j = 0; j < n_struct(); ++j) {
      const double lo = col_lo_[j], up = col_up_[j];
      double v;
      if (cost_[j] > 0.0) v = lo;
      else if (cost_[j] < 0.0) v = up;
      else v = std::isfinite(lo) ? lo : (std::isfinite(up) ? up : 0.0);
      if (!std::isfinite(v)) {
        sol.status = LpStatus::Unbounded;
        return sol;
      }
      if (lo > up) {
        sol.status = LpStatus::Infeasible;
        return sol;
      }
      sol.x[j] = v;
      obj += cost_[j] * v;
    }
    sol.objective = obj;
    sol.status = LpStatus::Optimal;
    sol.basis.state.assign(n_struct(), VarState::AtLower);
    return sol;
  }
};

}  // namespace gridrisk
