#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One sampled path pair. Row n of `y` is the state of the first process at
// time n, so both matrices are (N+1) x d.
struct TrajectoryPair {
  Mat y;
  Mat y_prime;

  int horizon() const { return static_cast<int>(y.rows()) - 1; }
  int dim() const { return static_cast<int>(y.cols()); }
};

using Batch = std::vector<TrajectoryPair>;

// Throws ShapeError when the pair is not (N+1) x d on both sides or holds
// non-finite entries.
void validate_trajectory(const TrajectoryPair& traj, int dim, int horizon);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Sample mean and standard error of the mean, with a fixed pairwise
// summation tree so the result is independent of how values were produced.
MeanSe mean_and_se(const std::vector<double>& values);
double pairwise_sum(const double* values, std::size_t count);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DensityUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace bcot
