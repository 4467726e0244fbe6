#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bcot/coupling.hpp"
#include "bcot/processes.hpp"
#include "bcot/types.hpp"

namespace bcot {

enum class CostKind {
  SquaredDistance,    // ||y - y'||^2
  NormalizedSquared,  // ||y - y'||^2 / d
  ZeroAtStart,        // 0 at n = 0, ||y - y'||^2 afterwards
};

struct CostSpec {
  CostKind kind = CostKind::SquaredDistance;
  // Per-step switch; empty means every step is enabled.
  std::vector<bool> enabled;
  // Optional upper clamp on each stage cost. Off by default.
  std::optional<double> clamp;

  bool step_enabled(int n) const;
};

std::string to_string(CostKind kind);
CostKind cost_kind_from_string(const std::string& name);

double stage_cost(const CostSpec& spec, int n, const Vec& y, const Vec& y_prime);
// sum_n c_n along one path pair
double path_cost(const CostSpec& spec, const TrajectoryPair& traj);

// Mean and standard error of the path cost over pairs drawn from the coupling.
MeanSe estimate_j_val(const CostSpec& spec, const Batch& batch);

double closed_form_gaussian_kl(const Vec& mean1, const Vec& std1, const Vec& mean2, const Vec& std2);

enum class KlMethod {
  Auto,        // closed form when both sides are Gaussian, otherwise log-ratio
  ClosedForm,  // E_{mu x mu'} of the conditional Gaussian KL
  LogRatio,    // E_{mu x mu'}[log T_n - log q_n^(i)]
};

// Sum over n and both sides of the conditional marginal KL terms, averaged
// over a batch drawn from the independent product of the two references.
//
// A reference that starts from a fixed point contributes 0 at n = 0 when the
// coupling is pinned to that same point and +infinity otherwise.
// Throws DensityUnavailable when the chosen method needs a density that the
// reference does not provide.
MeanSe estimate_j_kl(const CouplingParams& params, const MarkovProcess& ref, const MarkovProcess& ref_prime,
                     const Batch& ref_batch, KlMethod method = KlMethod::Auto);

// True when every reference kernel has a Gaussian form, so the closed-form
// path applies.
bool closed_form_kl_available(const MarkovProcess& ref, const MarkovProcess& ref_prime);

struct ObjectiveReport {
  double beta = 0.0;
  double j_val = 0.0;
  double j_val_se = 0.0;
  std::optional<double> j_kl;
  std::optional<double> j_kl_se;
  std::optional<double> j_beta;
  std::optional<double> j_beta_se;
  std::string kl_method;
  int batch_size = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// Fresh batches: `eval-gen` pairs from the coupling and `eval-ref` pairs from
// the references, both of size batch_size. The two estimates are independent,
// so the standard error of j_beta combines them in quadrature.
ObjectiveReport evaluate_objective(const CouplingParams& params, const CostSpec& cost, const MarkovProcess& ref,
                                   const MarkovProcess& ref_prime, double beta, int batch_size,
                                   std::uint64_t seed, KlMethod method = KlMethod::Auto);

}  // namespace bcot
