#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcot/transport.hpp"
#include "bcot/types.hpp"

namespace bcot {

// Two finite-state Markov chains on per-step grids plus per-step stage costs.
// Index n of trans / trans_prime is the kernel from step n-1 to step n, so
// trans[0] is unused and stored empty.
struct DiscreteInstance {
  int horizon = 1;
  std::vector<Vec> grid;        // grid[n]: state values of the first chain at step n (S_n entries)
  std::vector<Vec> grid_prime;  // same for the second chain
  Vec init_mu;
  Vec init_mu_prime;
  std::vector<Mat> trans;        // trans[n]: S_{n-1} x S_n, row-stochastic
  std::vector<Mat> trans_prime;
  std::vector<Mat> cost;         // cost[n]: S_n x S'_n

  int size(int n) const { return static_cast<int>(grid.at(n).size()); }
  int size_prime(int n) const { return static_cast<int>(grid_prime.at(n).size()); }

  // Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  std::string to_json() const;
  static DiscreteInstance from_json(const std::string& text);
};

struct ValueTable {
  std::vector<Mat> value;  // value[n](x, x') = V_n
  // plans[n][x * S'_n + x'] is the optimal one-step plan from (x, x') at step n
  // to step n+1; empty unless plans were requested.
  std::vector<std::vector<std::vector<PlanEntry>>> plans;
  std::vector<PlanEntry> initial_plan;
};

struct DpResult {
  double value = 0.0;
  ValueTable table;
};

// Backward recursion V_N = c_N, V_n = c_n + OT(T_{n+1}(x, .), T'_{n+1}(x', .); V_{n+1}),
// value = OT(mu_0, mu'_0; V_0).
DpResult solve_dp(const DiscreteInstance& inst, bool keep_plans = false);

// Brute-force linear program over joint path probabilities with the
// bi-causal constraints written in multiplied-through form. Only for tiny
// instances: throws std::invalid_argument when the number of path pairs
// exceeds max_paths.
double solve_pathspace_lp(const DiscreteInstance& inst, long max_paths = 1000000);

// Closed-form value for pairs of Gaussian random walks with quadratic tracking
// cost and c_0 = 0: d_pairs * sum_{n=1}^N [(y0 - y0')^2 + n (sigma - sigma')^2].
double martingale_subhedge_value(int d_pairs, int horizon, double y0, double y0_prime, double sigma,
                                 double sigma_prime);

// Discretized random walks. Step 0 is the point mass at the starting value;
// step n >= 1 uses S evenly spaced points covering y0 +- width * sigma * sqrt(n).
// Transition rows are Gaussian cell probabilities (cells split at grid
// midpoints) with both tails folded into the boundary cells. Cost is the
// squared gap for n >= 1 and 0 at n = 0.
DiscreteInstance discretize_gaussian_martingale(int horizon, double y0, double y0_prime, double sigma,
                                                double sigma_prime, int grid_size, double width_in_sds);

// Random instance with S states per step on both sides: Dirichlet(1) initial
// laws and transition rows with some entries zeroed (so conditioning events
// of zero mass occur), and i.i.d. uniform [0, 1) stage costs.
DiscreteInstance random_instance(int states, int horizon, std::uint64_t seed);

}  // namespace bcot
