#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridrisk {

// Dense row-major matrix of doubles. Small-scale numerics only; sized for
// desk-scale grids, not production solvers.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  Mat transposed() const {
    Mat t(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  void fill(double v) { a.assign(a.size(), v); }
};

// C = A * B (or C += A * B with accumulate=true). ikj loop order so the inner
// loop streams over contiguous rows.
inline void matmul(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.cols != B.rows) throw std::invalid_argument("matmul: dimension mismatch");
  if (C.rows != A.rows || C.cols != B.cols) C = Mat(A.rows, B.cols);
  if (!accumulate) C.fill(0.0);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int k = 0; k < A.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

inline Mat matmul(const Mat& A, const Mat& B) {
  Mat C;
  matmul(A, B, C);
  return C;
}

// C = A^T * B without forming A^T.
inline void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: dimension mismatch");
  if (C.rows != A.cols || C.cols != B.cols) C = Mat(A.cols, B.cols);
  if (!accumulate) C.fill(0.0);
  for (int k = 0; k < A.rows; ++k) {
    const double* arow = A.row(k);
    const double* brow = B.row(k);
    for (int i = 0; i < A.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = C.row(i);
      for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

// C = A * B^T without forming B^T.
inline void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: dimension mismatch");
  if (C.rows != A.rows || C.cols != B.rows) C = Mat(A.rows, B.rows);
  if (!accumulate) C.fill(0.0);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = B.row(j);
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

// LU factorization with partial pivoting, in place. Returns the permutation
// sign; throws on singularity (message names the offending pivot row).
struct LuFactors {
  Mat lu;                // combined L (unit diag) and U
  std::vector<int> perm; // row permutation
};

inline LuFactors lu_factor(Mat A, double pivot_tol = 1e-12) {
  if (A.rows != A.cols) throw std::invalid_argument("lu_factor: matrix not square");
  const int n = A.rows;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::fabs(A(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::fabs(A(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best <= pivot_tol)
      throw std::runtime_error("lu_factor: singular matrix at pivot row " + std::to_string(k));
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(A(k, j), A(piv, j));
      std::swap(perm[k], perm[piv]);
    }
    const double diag = A(k, k);
    for (int i = k + 1; i < n; ++i) {
      const double f = A(i, k) / diag;
      A(i, k) = f;
      if (f == 0.0) continue;
      for (int j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
    }
  }
  return LuFactors{std::move(A), std::move(perm)};
}

inline std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b) {
  const int n = f.lu.rows;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = b[f.perm[i]];
  for (int i = 1; i < n; ++i) {
    double s = x[i];
    for (int j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int j = i + 1; j < n; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s / f.lu(i, i);
  }
  return x;
}

inline std::vector<double> solve_linear(const Mat& A, const std::vector<double>& b) {
  return lu_solve(lu_factor(A), b);
}

inline Mat invert(const Mat& A) {
  const LuFactors f = lu_factor(A);
  const int n = A.rows;
  Mat inv(n, n);
  std::vector<double> e(n, 0.0);
  for (int j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    const std::vector<double> col = lu_solve(f, e);
    for (int i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

// Cholesky factorization C = L L^T for symmetric positive definite C.
// Throws on a non-positive pivot, naming its index.
inline Mat cholesky(const Mat& C, double tol = 1e-12) {
  if (C.rows != C.cols) throw std::invalid_argument("cholesky: matrix not square");
  const int n = C.rows;
  Mat L(n, n);
  for (int j = 0; j < n; ++j) {
    double d = C(j, j);
    for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d <= tol)
      throw std::runtime_error("cholesky: matrix not positive definite at pivot " + std::to_string(j));
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = C(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

}  // namespace gridrisk
