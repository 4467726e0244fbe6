#include "bcot/types.hpp"

#include <cmath>

namespace bcot {

void validate_trajectory(const TrajectoryPair& traj, int dim, int horizon) {
  if (traj.y.rows() != horizon + 1 || traj.y_prime.rows() != horizon + 1 || traj.y.cols() != dim ||
      traj.y_prime.cols() != dim) {
    throw ShapeError("trajectory: expected " + std::to_string(horizon + 1) + " x " + std::to_string(dim) +
                     " on both sides, got " + std::to_string(traj.y.rows()) + " x " + std::to_string(traj.y.cols()) +
                     " and " + std::to_string(traj.y_prime.rows()) + " x " + std::to_string(traj.y_prime.cols()));
  }
  if (!traj.y.allFinite() || !traj.y_prime.allFinite()) throw ShapeError("trajectory: non-finite entry");
}

double pairwise_sum(const double* values, std::size_t count) {
  if (count <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += values[i];
    return s;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, count - half);
}

MeanSe mean_and_se(const std::vector<double>& values) {
  MeanSe out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  out.mean = pairwise_sum(values.data(), n) / static_cast<double>(n);
  if (n < 2) return out;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - out.mean) * (values[i] - out.mean);
  const double var = pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
  out.se = std::sqrt(var / static_cast<double>(n));
  return out;
}

}  // namespace bcot
