#pragma once

#include "bcot/types.hpp"

namespace bcot {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, NumericalFailure };

struct LpResult {
  LpStatus status = LpStatus::IterationLimit;
  double value = 0.0;
  Vec x;
  int pivots = 0;
};

// min c^T x  s.t.  A x = b, x >= 0, by the two-phase dense tableau simplex.
// Rows of A may be linearly dependent; redundant rows are detected at the end
// of phase one and removed.
LpResult solve_standard_lp(const Mat& A, const Vec& b, const Vec& c, double tol = 1e-11);

}  // namespace bcot
