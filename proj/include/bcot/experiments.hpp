#pragma once

#include <map>
#include <string>
#include <vector>

#include "bcot/config.hpp"
#include "bcot/coupling.hpp"
#include "bcot/processes.hpp"

namespace bcot {

inline constexpr const char* kVersion = "0.1.0";

// Named scalar results of a run, the vocabulary of --assert.
using Summary = std::map<std::string, double>;

struct ReferenceLaws {
  ProcessPtr law;
  ProcessPtr law_prime;
};

ReferenceLaws reference_laws(const ExperimentConfig& cfg);

// Martingale-family experiments start pinned at (y0, y0'); the AR(1)
// experiments use a free Gaussian step 0.
CouplingParams initial_coupling(const ExperimentConfig& cfg);

// The bi-causal coupling that is optimal for the martingale benchmark:
// each side keeps its own marginal law and the increments are correlated
// with rho = rho_max.
CouplingParams synchronous_martingale_coupling(const ExperimentConfig& cfg);

// count pairs from the independent product of the two reference laws.
Batch simulate_reference(const ExperimentConfig& cfg, int count, std::uint64_t seed);

// Full pipeline into out_dir: manifest.json, history.csv, checkpoints/,
// objective.json, metrics.json, metrics.csv, trajectories.csv plus the
// experiment-specific tables. With `resume`, training continues from
// checkpoints/latest.json and finished sub-runs are kept.
// Throws TrainingAborted (partial artifacts stay on disk) or std::exception.
Summary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool resume = false);

// Training only: writes manifest, history and checkpoints, returns the
// final parameters.
CouplingParams run_training(const ExperimentConfig& cfg, const std::string& out_dir, bool resume = false);

// Evaluates a coupling against the reference laws of cfg and writes
// objective.json, metrics.json, metrics.csv and trajectories.csv.
Summary evaluate_coupling(const ExperimentConfig& cfg, const CouplingParams& params, const std::string& out_dir);

Summary oracle_grid_study(const ExperimentConfig& cfg, const std::string& out_dir);
Summary null_calibration(const ExperimentConfig& cfg, const std::string& out_dir);

// "key<=value" clauses joined by ',' or '&&'. Operators <=, >=, <, >, ==.
struct AssertClause {
  std::string key;
  std::string op;
  double value = 0.0;
  std::string text;
};

// Throws ConfigError on malformed input.
std::vector<AssertClause> parse_assert(const std::string& expr);
// Returns one message per failing clause; a key missing from the summary fails.
std::vector<std::string> check_assert(const std::vector<AssertClause>& clauses, const Summary& summary);

nlohmann::json summary_json(const Summary& summary);

}  // namespace bcot
