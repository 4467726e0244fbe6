#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "bcot/rng.hpp"
#include "bcot/types.hpp"

namespace bcot {

// Offsets of the named parameter groups inside one step's block. Steps n >= 1
// use the layout
//
//   [ W1 (d x 2d, row-major) | W2 (d x 2d, row-major) | b1 | b2 | log_std1 | log_std2 | corr_raw ]
//
// for 4d^2 + 5d scalars. Step 0 has no previous state, so it drops both
// weight matrices and keeps [ b1 | b2 | log_std1 | log_std2 | corr_raw ] (5d).
// W1 and W2 act on the joint previous state x = (y_{n-1}, y'_{n-1}).
struct BlockLayout {
  int w1 = -1;
  int w2 = -1;
  int b1 = 0;
  int b2 = 0;
  int log_std1 = 0;
  int log_std2 = 0;
  int corr_raw = 0;
  int size = 0;

  bool has_weights() const { return w1 >= 0; }
};

BlockLayout step_layout(int dim, int n);

inline constexpr int kLayoutVersion = 1;
inline constexpr double kDefaultRhoMax = 0.995;

// Per-step kernel evaluated at a given previous state pair.
struct StepKernel {
  Vec mean1, mean2;
  Vec std1, std2;
  Vec rho;
};

// Parameters theta = (theta_0, ..., theta_N) of the Gaussian Markov coupling.
// Each step's kernel is a product over coordinates of bivariate normals with
// affine means in the joint previous state, per-coordinate log-stds, and
// correlation rho = rho_max * tanh(corr_raw).
//
// With `pinned_start` the step-0 law is the point mass at (b1, b2) of step 0;
// its remaining step-0 parameters are inert and its scores are zero. This is
// the coupling class used against references that start from a fixed point.
class CouplingParams {
 public:
  CouplingParams(int dim, int horizon, double rho_max = kDefaultRhoMax, bool pinned_start = false);

  int dim() const { return dim_; }
  int horizon() const { return horizon_; }
  double rho_max() const { return rho_max_; }
  bool pinned_start() const { return pinned_start_; }

  int size() const { return static_cast<int>(theta_.size()); }
  int step_offset(int n) const { return offsets_.at(n); }
  int step_size(int n) const { return step_layout(dim_, n).size; }

  const Vec& flatten() const { return theta_; }
  Vec& mutable_theta() { return theta_; }
  // Throws ShapeError when the vector length does not match the layout.
  void unflatten(const Vec& theta);

  Eigen::Ref<Vec> block(int n) { return theta_.segment(step_offset(n), step_size(n)); }
  Eigen::Ref<const Vec> block(int n) const { return theta_.segment(step_offset(n), step_size(n)); }

  // Kernel at step n given the previous pair (ignored for n = 0).
  StepKernel kernel(int n, const Vec& prev_y, const Vec& prev_y_prime) const;

  // Weights copy each process's own previous state, biases 0,
  // log_std = log(init_std), corr_raw = 0.
  static CouplingParams identity_init(int dim, int horizon, double init_std = 1.0,
                                      double rho_max = kDefaultRhoMax);
  // Same, with a pinned start at (y0, y0_prime).
  static CouplingParams identity_init_pinned(const Vec& y0, const Vec& y0_prime, int horizon,
                                             double init_std = 1.0, double rho_max = kDefaultRhoMax);

  static int parameter_count(int dim, int horizon);

 private:
  int dim_;
  int horizon_;
  double rho_max_;
  bool pinned_start_;
  std::vector<int> offsets_;
  Vec theta_;
};

// Draws one path pair from the coupling.
TrajectoryPair sample_pair(const CouplingParams& params, Rng& rng);
TrajectoryPair sample_pair(const CouplingParams& params, std::uint64_t seed);
// count pairs; pair b uses stream (seed, label, b).
Batch sample_coupling(const CouplingParams& params, int count, std::uint64_t seed,
                      std::string_view label);

// Reparameterized draw: the standard normals are supplied, so the path is a
// smooth function of theta for a fixed noise array. `noise` is (N+1) x 2d,
// holding (z1_i, z2_i) per coordinate in columns (2i, 2i+1).
TrajectoryPair sample_pair_from_noise(const CouplingParams& params, const Mat& noise);

// log q_n(next | prev). For n = 0 the previous state is ignored (pass empty
// vectors). Throws DensityUnavailable at n = 0 under a pinned start.
double joint_logdensity(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                        const Vec& y, const Vec& y_prime);

// log q_n^(which)(value | prev), which in {1, 2}.
double marginal_logdensity(const CouplingParams& params, int n, const Vec& prev_y,
                           const Vec& prev_y_prime, const Vec& value, int which);

// Gradients of the log-densities above with respect to theta_n, in the step
// layout order. Zero at n = 0 under a pinned start.
Vec joint_score(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                const Vec& y, const Vec& y_prime);
Vec marginal_score(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                   const Vec& value, int which);

}  // namespace bcot
