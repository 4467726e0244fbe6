#pragma once

#include <vector>

#include "bcot/types.hpp"

namespace bcot {

// Sparse transport plan: the basic cells of the final simplex tableau.
struct PlanEntry {
  int row = 0;
  int col = 0;
  double mass = 0.0;
};

struct OtResult {
  double value = 0.0;
  std::vector<PlanEntry> plan;
  int pivots = 0;
};

// Exact balanced transportation problem min <C, P> subject to P 1 = p,
// P^T 1 = q, P >= 0, solved with the transportation simplex (northwest-corner
// start, u-v potentials, cycle pivots on the basis tree). p and q must be
// nonnegative with equal totals up to 1e-9 relative; q is rescaled to p's
// total before solving.
OtResult exact_discrete_ot(const Vec& p, const Vec& q, const Mat& cost);

// Dense plan from a sparse one.
Mat plan_to_dense(const std::vector<PlanEntry>& plan, int rows, int cols);

}  // namespace bcot
