#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bcot/coupling.hpp"
#include "bcot/objective.hpp"
#include "bcot/processes.hpp"

namespace bcot {

enum class ScheduleKind { Constant, PolyDecay, InverseK };

// eta_k = eta (Constant), lambda / k^alpha (PolyDecay), lambda / k (InverseK).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double eta = 1e-3;
  double lambda = 1.0;
  double alpha = 1.0;

  static StepSchedule constant(double eta);
  static StepSchedule poly_decay(double lambda, double alpha);
  static StepSchedule inverse_k(double lambda);

  void validate() const;
  std::string describe() const;
};

// Requires k >= 1.
double step_size(const StepSchedule& schedule, int k);

enum class BaselineFeatures {
  None,           // no control variates
  ConstantOnly,   // phi = (1)
  LinearInState,  // phi = (1, y_{n-1}, y'_{n-1})
};

std::string to_string(BaselineFeatures f);
BaselineFeatures baseline_features_from_string(const std::string& name);

struct TrainConfig {
  double beta = 50.0;
  int batch_size = 256;
  int rounds = 2000;
  StepSchedule schedule;
  BaselineFeatures features = BaselineFeatures::LinearInState;
  std::uint64_t seed = 0;
  // Every eval_every rounds the history row also carries a fresh-batch
  // ObjectiveReport and the checkpoint callback fires. 0 disables both.
  int eval_every = 0;
  int eval_batch = 4096;
  // Rescales g so that ||g|| <= grad_clip. Off by default.
  std::optional<double> grad_clip;

  void validate() const;
};

// V-hat, S-hat and K-hat for one trajectory. Scores are stored flattened in the
// parameter layout, so the step-n block lives at params.step_offset(n).
struct PerTrajectoryStats {
  Vec v_hat;  // (N+1) suffix sums of stage costs
  Vec s_hat;  // joint scores on a generated path
  Vec k_hat;  // summed marginal scores on a reference path
};

// Either trajectory may be absent; the matching fields are then left empty.
PerTrajectoryStats per_trajectory_stats(const CouplingParams& params, const CostSpec& cost,
                                        const TrajectoryPair* gen, const TrajectoryPair* ref);

// Fitted baselines: l_0 for n = 0 and coefficient vectors w_n for n >= 1.
struct Baselines {
  BaselineFeatures features = BaselineFeatures::None;
  double l0 = 0.0;
  std::vector<Vec> w;  // w[n] for n >= 1; w[0] unused

  double value(int n, const Vec& prev_y, const Vec& prev_y_prime) const;
};

Vec baseline_feature_vector(BaselineFeatures f, const Vec& prev_y, const Vec& prev_y_prime);

// Fits on the auxiliary batch. aux_paths[b] must be the trajectory that
// produced aux_stats[b].
Baselines fit_control_variates(const CouplingParams& params, const std::vector<PerTrajectoryStats>& aux_stats,
                               const Batch& aux_paths, BaselineFeatures features);

struct GradientEstimate {
  Vec g_val;
  Vec g_kl;
  Vec l_cv;
  Vec g;  // g_val + beta * g_kl - l_cv
  Baselines baselines;
  std::vector<double> step_norms;  // ||g|| restricted to each step block
  double j_val_batch = 0.0;        // mean path cost on the generated batch
  double grad_norm = 0.0;
};

// Aggregate estimator from three given batches.
GradientEstimate estimate_gradient(const CouplingParams& params, const CostSpec& cost, double beta,
                                   BaselineFeatures features, const Batch& gen, const Batch& aux, const Batch& ref);

struct RoundBatches {
  Batch gen, aux, ref;
};

// The three independent batches of round k.
RoundBatches draw_round_batches(const CouplingParams& params, const MarkovProcess& ref,
                                const MarkovProcess& ref_prime, int batch_size, std::uint64_t seed, int k);

// One update theta <- theta - eta_k g. Throws TrainingAborted on non-finite
// estimates.
GradientEstimate gradient_step(CouplingParams& params, const TrainConfig& cfg, const CostSpec& cost,
                               const MarkovProcess& ref, const MarkovProcess& ref_prime, int k);

struct HistoryRow {
  int round = 0;
  double eta = 0.0;
  double j_val = 0.0;
  std::optional<double> j_kl;
  std::optional<double> j_beta;
  double grad_norm = 0.0;
  double wallclock_ms = 0.0;
  std::optional<ObjectiveReport> report;
};

using History = std::vector<HistoryRow>;

std::string history_csv_header();
std::string history_csv_row(const HistoryRow& row);

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, int round, History partial)
      : std::runtime_error(what), round_(round), history_(std::move(partial)) {}
  int round() const { return round_; }
  const History& history() const { return history_; }

 private:
  int round_;
  History history_;
};

struct TrainResult {
  CouplingParams params;
  History history;
};

using CheckpointFn = std::function<void(int round, const CouplingParams&, const History&)>;

// Runs rounds first_round .. cfg.rounds. Rounds draw their batches from named
// streams, so resuming from a checkpoint taken after round r with
// first_round = r + 1 continues the same trajectory of iterates.
TrainResult train(const TrainConfig& cfg, const CouplingParams& init, const CostSpec& cost,
                  const MarkovProcess& ref, const MarkovProcess& ref_prime, int first_round = 1,
                  const CheckpointFn& checkpoint = {});

}  // namespace bcot
