#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bcot/metrics.hpp"
#include "bcot/objective.hpp"
#include "bcot/pg_trainer.hpp"
#include "bcot/processes.hpp"
#include "json.hpp"

namespace bcot {

enum class ExperimentKind {
  SyntheticUnimodal,
  SyntheticBimodal,
  MartingaleBenchmark,
  BetaSweep,
  MultiAsset,
  OracleGridStudy,
  NullCalibration,
};

// Default constant step sizes, chosen by a short bracket search on the
// achieved J_beta of each experiment family.
inline constexpr double kMartingaleEta = 1e-3;
inline constexpr double kSyntheticEta = 1e-4;

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct ProcessSettings {
  int horizon = 5;
  // random walks
  int d_pairs = 1;
  double y0 = 1.0;
  double y0_prime = 2.0;
  double sigma = 1.0;
  double sigma_prime = 0.5;
  // AR(1)
  int dim = 3;
  double phi = 0.5;
  // "paper" keeps the preset innovations, "gaussian" makes both N(0, 0.5^2)
  std::string innovations = "paper";
};

struct CouplingSettings {
  double init_std = 1.0;
  double rho_max = kDefaultRhoMax;
};

struct EvalSettings {
  int samples = 10000;
  int projections = 256;
  int permutations = 199;
  double bandwidth = 0.0;
  bool distances = true;
};

struct SweepSettings {
  std::vector<double> betas{10.0, 50.0, 100.0, 500.0, 1000.0};
  int seeds = 5;
  std::vector<int> d_pairs{2, 3, 4, 5};
  // eta_beta = eta * eta_beta_ref / beta when > 0; otherwise eta is used as is.
  double eta_beta_ref = 50.0;
};

struct OracleSettings {
  std::vector<int> grid_sizes{8, 16, 32, 64};
  double width = 4.0;
};

struct NullSettings {
  int repetitions = 200;
  int samples = 200;
  double level = 0.05;
};

// Sectioned key = value configuration. Unknown sections or keys are errors.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::MartingaleBenchmark;
  std::uint64_t seed = 0;
  std::string out;
  ProcessSettings process;
  TrainConfig train;
  CostSpec cost;
  CouplingSettings coupling;
  EvalSettings eval;
  SweepSettings sweep;
  OracleSettings oracle;
  NullSettings null_test;

  // Fills defaults that depend on the experiment (cost kind, horizon, dim,
  // step size) for every "section.key" not present in `given`.
  void apply_experiment_defaults(const std::set<std::string>& given);
  void validate() const;

  MartingaleConfig martingale() const;
  Ar1Config ar1() const;
  MetricSettings metric_settings() const;

  nlohmann::json to_json() const;
  // Renders the resolved config back to the file format; parsing the result
  // gives the same config.
  std::string to_ini() const;
};

// Throws ConfigError with the offending section/key. A non-empty
// `experiment` replaces the [run] experiment of the text.
ExperimentConfig parse_config(const std::string& text, const std::string& experiment = "");
ExperimentConfig load_config(const std::string& path);

}  // namespace bcot
