#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bcot/types.hpp"

namespace bcot {

struct SampleSet {
  Batch trajectories;
  std::string source;

  SampleSet() = default;
  SampleSet(Batch t, std::string src = "");

  int count() const { return static_cast<int>(trajectories.size()); }
  int horizon() const { return trajectories.empty() ? -1 : trajectories.front().horizon(); }
  int dim() const { return trajectories.empty() ? 0 : trajectories.front().dim(); }

  // Throws ShapeError on inhomogeneous or non-finite trajectories.
  void validate() const;
};

// 1/(M (N+1) d) sum of squared per-coordinate gaps.
double cost_avg(const SampleSet& gen);

// Exact squared 2-Wasserstein distance between two 1-D empirical measures.
double w2_squared_1d(std::vector<double> a, std::vector<double> b);
// sup |F_a - F_b| of the empirical distribution functions.
double ks_1d(std::vector<double> a, std::vector<double> b);

// Per (n, i) cell, both sides: sum of the 1-D values divided by (N+1) d.
double w2_avg(const SampleSet& ref, const SampleSet& gen);
double ks_avg(const SampleSet& ref, const SampleSet& gen);

// Flattened (y_0..y_N, y'_0..y'_N) of one pair, length 2 (N+1) d.
Vec stack_pair(const TrajectoryPair& t);

// Mean over `projections` uniform unit directions of the squared 1-D W2 of the
// projected stacked trajectories. Direction l is drawn from stream
// (seed, "swd-direction", l).
double sliced_wasserstein(const SampleSet& ref, const SampleSet& gen, int projections, std::uint64_t seed);

// Median of pairwise Euclidean distances over the pooled stacked points.
double median_heuristic_bandwidth(const SampleSet& ref, const SampleSet& gen);

// V-statistic with k(z, w) = exp(-||z - w||^2 / (2 h^2)). Requires equal
// sample counts. A nonpositive bandwidth selects the median heuristic.
double mmd2(const SampleSet& ref, const SampleSet& gen, double bandwidth = 0.0);

// Empirical lag-1 correlation of the stacked states Z_n = (Y_n, Y'_n) for
// n = 1..N; entries are NaN at steps with zero variance.
std::vector<double> adjacent_correlations(const SampleSet& s);

struct AdjacentCorrStats {
  std::vector<double> delta;  // gen minus ref, NaN where excluded
  double t_max = 0.0;
  double t_2 = 0.0;
  int excluded = 0;
};

AdjacentCorrStats adjacent_corr_stats(const SampleSet& ref, const SampleSet& gen);

enum class CorrStatistic { TMax, T2 };

// Add-one p-value of the trajectory-level permutation test; permutation l uses
// stream (seed, "perm", l).
double permutation_test(const SampleSet& ref, const SampleSet& gen, CorrStatistic stat, int permutations,
                        std::uint64_t seed);

struct SubhedgeEstimate {
  double p_hat = 0.0;
  double p_hat_se = 0.0;
  double rel_err = 0.0;
};

// p_hat = mean over samples of sum_{n=1}^N ||Y_n - Y'_n||^2. RE uses 0/0 := 0
// and throws when the true value is 0 but p_hat is not.
SubhedgeEstimate subhedge_price_and_re(const SampleSet& gen, double true_value);

struct MetricSettings {
  int projections = 256;
  double bandwidth = 0.0;  // 0 selects the median heuristic
  int permutations = 199;
  std::uint64_t seed = 0;
  std::optional<double> true_value;
  bool distances = true;
  bool correlation_tests = true;
};

struct MetricReport {
  std::optional<double> cost_avg, w2_avg, ks_avg, swd, mmd2;
  std::optional<double> t_max, p_t_max, t_2, p_t_2;
  std::optional<double> p_hat, rel_err;
  int projections = 0;
  double bandwidth = 0.0;
  int permutations = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

MetricReport evaluate_metrics(const SampleSet& ref, const SampleSet& gen, const MetricSettings& settings);

}  // namespace bcot
