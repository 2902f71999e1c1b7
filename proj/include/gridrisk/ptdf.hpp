#pragma once

#include <stdexcept>
#include <vector>

#include "gridrisk/grid.hpp"
#include "gridrisk/matrix.hpp"

namespace gridrisk {

// DC network model: incidence, nodal susceptance and the power transfer
// distribution factors mapping bus injections (MW) to branch flows (MW).
// The slack column of the PTDF is identically zero.
struct DcModel {
  int n_bus = 0;
  int n_branch = 0;
  int slack = 0;       // bus index (not id)
  Mat incidence;       // n_branch x n_bus, +1 at from, -1 at to
  Mat ptdf;            // n_branch x n_bus
  std::vector<double> susceptance;  // 1/x per branch
  LuFactors b_red_lu;  // factorized reduced nodal matrix, for direct solves

  static DcModel build(const Grid& g) {
    DcModel m;
    m.n_bus = static_cast<int>(g.buses.size());
    m.n_branch = static_cast<int>(g.branches.size());
    m.slack = g.bus_index(g.slack_bus);
    m.incidence = Mat(m.n_branch, m.n_bus);
    m.susceptance.resize(m.n_branch);
    for (int l = 0; l < m.n_branch; ++l) {
      const Branch& br = g.branches[l];
      m.incidence(l, g.bus_index(br.from)) = 1.0;
      m.incidence(l, g.bus_index(br.to)) = -1.0;
      m.susceptance[l] = 1.0 / br.reactance;
    }

    // B_bus = A^T diag(b) A, then delete the slack row and column.
    Mat weighted(m.n_branch, m.n_bus);
    for (int l = 0; l < m.n_branch; ++l)
      for (int j = 0; j < m.n_bus; ++j) weighted(l, j) = m.susceptance[l] * m.incidence(l, j);
    Mat b_bus(m.n_bus, m.n_bus);
    matmul_tn(m.incidence, weighted, b_bus);

    const int nr = m.n_bus - 1;
    Mat b_red(nr, nr);
    for (int i = 0, ri = 0; i < m.n_bus; ++i) {
      if (i == m.slack) continue;
      for (int j = 0, rj = 0; j < m.n_bus; ++j) {
        if (j == m.slack) continue;
        b_red(ri, rj) = b_bus(i, j);
        ++rj;
      }
      ++ri;
    }
    try {
      m.b_red_lu = lu_factor(b_red);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("reduced nodal matrix is singular (") + e.what() +
                               "); check network connectivity");
    }

    // PTDF = diag(b) A_r B_red^{-1}, slack column zero.
    // Solve B_red^T X = weighted_r^T column-wise, i.e. row-wise on weighted_r.
    m.ptdf = Mat(m.n_branch, m.n_bus);
    std::vector<double> rhs(nr), sol(nr);
    for (int l = 0; l < m.n_branch; ++l) {
      for (int j = 0, rj = 0; j < m.n_bus; ++j) {
        if (j == m.slack) continue;
        rhs[rj++] = weighted(l, j);
      }
      sol = lu_solve(m.b_red_lu, rhs);  // B_red is symmetric
      for (int j = 0, rj = 0; j < m.n_bus; ++j) {
        if (j == m.slack) continue;
        m.ptdf(l, j) = sol[rj++];
      }
    }
    return m;
  }

  // Branch flows from net bus injections via the PTDF.
  std::vector<double> flows(const std::vector<double>& injection) const {
    if (static_cast<int>(injection.size()) != n_bus)
      throw std::invalid_argument("flows: injection size mismatch");
    std::vector<double> f(n_branch, 0.0);
    for (int l = 0; l < n_branch; ++l) {
      double s = 0.0;
      for (int j = 0; j < n_bus; ++j) s += ptdf(l, j) * injection[j];
      f[l] = s;
    }
    return f;
  }

  // Branch flows via the angle solve B_red theta = p; exact for balanced
  // injections and independent of the PTDF path.
  std::vector<double> flows_direct(const std::vector<double>& injection) const {
    if (static_cast<int>(injection.size()) != n_bus)
      throw std::invalid_argument("flows_direct: injection size mismatch");
    const int nr = n_bus - 1;
    std::vector<double> rhs(nr);
    for (int j = 0, rj = 0; j < n_bus; ++j) {
      if (j == slack) continue;
      rhs[rj++] = injection[j];
    }
    const std::vector<double> theta_r = lu_solve(b_red_lu, rhs);
    std::vector<double> theta(n_bus, 0.0);
    for (int j = 0, rj = 0; j < n_bus; ++j) {
      if (j == slack) continue;
      theta[j] = theta_r[rj++];
    }
    std::vector<double> f(n_branch, 0.0);
    for (int l = 0; l < n_branch; ++l) {
      double s = 0.0;
      for (int j = 0; j < n_bus; ++j) s += incidence(l, j) * theta[j];
      f[l] = susceptance[l] * s;
    }
    return f;
  }
};

}  // namespace gridrisk
