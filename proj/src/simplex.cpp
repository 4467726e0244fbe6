#include "bcot/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bcot {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tableau {
 public:
  // Rows 0..m-1 are constraints, row m is the objective (reduced costs).
  // Column `rhs_` holds the right-hand side.
  Tableau(int m, int cols) : t_(RowMat::Zero(m + 1, cols + 1)), m_(m), rhs_(cols), basis_(m, -1) {}

  RowMat& t() { return t_; }
  std::vector<int>& basis() { return basis_; }
  int rows() const { return m_; }
  int rhs() const { return rhs_; }

  void pivot(int r, int c) {
    const double inv = 1.0 / t_(r, c);
    t_.row(r) *= inv;
    t_(r, c) = 1.0;
    for (int i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f == 0.0) continue;
      t_.row(i) -= f * t_.row(r);
      t_(i, c) = 0.0;
      // round-off must not leave a basic variable negative
      if (i < m_ && t_(i, rhs_) < 0.0) t_(i, rhs_) = 0.0;
    }
    basis_[r] = c;
  }

  // Runs simplex on the columns [0, active_cols). Returns false when unbounded.
  bool run(int active_cols, double tol, int& pivots, int limit) {
    int degenerate = 0;
    while (pivots < limit) {
      const bool bland = degenerate > 50;
      int enter = -1;
      double best = -tol;
      for (int j = 0; j < active_cols; ++j) {
        const double r = t_(m_, j);
        if (r < best) {
          enter = j;
          best = r;
          if (bland) break;
        }
      }
      if (enter < 0) return true;
      // Harris two-pass ratio test: bound the step with a small feasibility
      // slack, then take the largest pivot among the rows within that bound.
      const double piv_tol = 1e-7;
      const double slack = 1e-12;
      double bound = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        const double a = t_(i, enter);
        if (a > piv_tol) bound = std::min(bound, (std::max(0.0, t_(i, rhs_)) + slack) / a);
      }
      int leave = -1;
      double ratio = 0.0, best_a = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double a = t_(i, enter);
        if (a <= piv_tol) continue;
        const double q = std::max(0.0, t_(i, rhs_)) / a;
        if (q > bound) continue;
        const bool better = bland ? (leave < 0 || basis_[i] < basis_[leave]) : a > best_a;
        if (better) {
          leave = i;
          ratio = q;
          best_a = a;
        }
      }
      if (leave < 0) return false;
      degenerate = ratio <= tol ? degenerate + 1 : 0;
      pivot(leave, enter);
      ++pivots;
    }
    return true;
  }

  void drop_row(int r) {
    RowMat next(t_.rows() - 1, t_.cols());
    next.topRows(r) = t_.topRows(r);
    next.bottomRows(t_.rows() - 1 - r) = t_.bottomRows(t_.rows() - 1 - r);
    t_.swap(next);
    basis_.erase(basis_.begin() + r);
    --m_;
  }

 private:
  RowMat t_;
  int m_;
  int rhs_;
  std::vector<int> basis_;
};

}  // namespace

LpResult solve_standard_lp(const Mat& A, const Vec& b, const Vec& c, double tol) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m || c.size() != n) throw ShapeError("solve_standard_lp: shape mismatch");
  LpResult res;
  const int limit = 50 * (m + n) + 10000;

  // Columns: n structural, m artificial, then rhs.
  Tableau tab(m, n + m);
  auto& t = tab.t();
  for (int i = 0; i < m; ++i) {
    const double s = b(i) < 0.0 ? -1.0 : 1.0;
    t.row(i).head(n) = s * A.row(i);
    t(i, n + i) = 1.0;
    t(i, tab.rhs()) = s * b(i);
    tab.basis()[i] = n + i;
  }
  // Phase one objective: sum of artificials, expressed in nonbasic terms.
  for (int i = 0; i < m; ++i) {
    t.row(m).head(n) -= t.row(i).head(n);
    t(m, tab.rhs()) -= t(i, tab.rhs());
  }
  int pivots = 0;
  tab.run(n, tol, pivots, limit);
  if (pivots >= limit) {
    res.status = LpStatus::IterationLimit;
    res.pivots = pivots;
    return res;
  }
  const double scale = 1.0 + b.cwiseAbs().maxCoeff();
  if (-t(tab.rows(), tab.rhs()) > 1e-9 * scale) {
    res.status = LpStatus::Infeasible;
    res.pivots = pivots;
    return res;
  }
  // Drive artificials out of the basis; rows where that is impossible are redundant.
  for (int i = tab.rows() - 1; i >= 0; --i) {
    if (tab.basis()[i] < n) continue;
    int col = -1;
    double best = tol * 100.0;
    for (int j = 0; j < n; ++j) {
      if (std::abs(t(i, j)) > best) {
        best = std::abs(t(i, j));
        col = j;
      }
    }
    if (col >= 0) {
      tab.pivot(i, col);
      ++pivots;
    } else {
      tab.drop_row(i);
    }
  }
  // Phase two objective.
  auto& t2 = tab.t();
  const int mr = tab.rows();
  t2.row(mr).setZero();
  t2.row(mr).head(n) = c.transpose();
  for (int i = 0; i < mr; ++i) {
    const int j = tab.basis()[i];
    const double cj = c(j);
    if (cj != 0.0) {
      t2.row(mr).head(n) -= cj * t2.row(i).head(n);
      t2(mr, tab.rhs()) -= cj * t2(i, tab.rhs());
    }
  }
  const bool bounded = tab.run(n, tol, pivots, limit);
  res.pivots = pivots;
  if (!bounded) {
    res.status = LpStatus::Unbounded;
    return res;
  }
  if (pivots >= limit) {
    res.status = LpStatus::IterationLimit;
    return res;
  }
  res.status = LpStatus::Optimal;
  res.x = Vec::Zero(n);
  for (int i = 0; i < mr; ++i) res.x(tab.basis()[i]) = std::max(0.0, t2(i, tab.rhs()));
  res.value = c.dot(res.x);
  // Accumulated round-off shows up as a violated constraint.
  if ((A * res.x - b).cwiseAbs().maxCoeff() > 1e-8 * scale) res.status = LpStatus::NumericalFailure;
  return res;
}

}  // namespace bcot
