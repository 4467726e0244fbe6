#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "bcot/rng.hpp"
#include "bcot/types.hpp"

namespace bcot {

// Per-coordinate independent Gaussian law, used for the closed-form KL path.
struct DiagGaussian {
  Vec mean;
  Vec std;
};

// A path law on (R^d)^(N+1): an initial law and N transition kernels.
//
// Sampling is path-at-a-time because some built-in laws carry a latent
// per-path variable (the bimodal selector). Densities are optional; laws that
// cannot provide them throw DensityUnavailable from the density methods.
class MarkovProcess {
 public:
  virtual ~MarkovProcess() = default;

  virtual int dim() const = 0;
  virtual int horizon() const = 0;
  virtual Mat sample_path(Rng& rng) const = 0;

  virtual bool has_density() const { return false; }
  virtual double initial_logdensity(const Vec& y0) const;
  // log T_n(next | prev) for n in [1, N]; -infinity outside the support.
  virtual double transition_logdensity(int n, const Vec& prev, const Vec& next) const;

  // Deterministic starting point, when the initial law is a point mass.
  virtual std::optional<Vec> initial_point() const { return std::nullopt; }
  // Gaussian forms of the initial law / transition kernels, when they have one.
  virtual std::optional<DiagGaussian> gaussian_initial() const { return std::nullopt; }
  virtual std::optional<DiagGaussian> gaussian_transition(int n, const Vec& prev) const;

  virtual std::string describe() const = 0;
};

using ProcessPtr = std::shared_ptr<const MarkovProcess>;

// --- innovation laws -------------------------------------------------------

struct GaussianInnovation {
  double mean = 0.0;
  double std = 1.0;
};

// scale * Beta(a, b) + shift
struct ScaledBetaInnovation {
  double a = 2.0;
  double b = 5.0;
  double scale = 1.0;
  double shift = 0.0;
};

using BasicInnovation = std::variant<GaussianInnovation, ScaledBetaInnovation>;

// Two-component mixture with a per-path, per-asset selector drawn once
// (S ~ Bernoulli(p_second)) and held fixed across time.
struct BernoulliMixtureInnovation {
  double p_second = 0.5;
  BasicInnovation first;
  BasicInnovation second;
};

using InnovationLaw = std::variant<GaussianInnovation, ScaledBetaInnovation, BernoulliMixtureInnovation>;

double innovation_mean(const BasicInnovation& law);
double innovation_variance(const BasicInnovation& law);
double sample_innovation(const BasicInnovation& law, Rng& rng);
// Log-density of one scalar innovation value; -infinity outside the support.
double innovation_logdensity(const BasicInnovation& law, double e);

// Between-regime and within-regime innovation variances of a mixture:
// Var(E[eps | S]) and E[Var(eps | S)].
struct MixtureMoments {
  double var_between = 0.0;
  double var_within = 0.0;
};
MixtureMoments mixture_moments(const BernoulliMixtureInnovation& law);

// --- AR(1) ------------------------------------------------------------------

// Y_0 = m + eps_0,  Y_n = m + phi * Y_{n-1} + eps_n, coordinatewise.
class Ar1Process final : public MarkovProcess {
 public:
  Ar1Process(double phi, Vec means, InnovationLaw innovation, int horizon);

  int dim() const override { return static_cast<int>(means_.size()); }
  int horizon() const override { return horizon_; }
  Mat sample_path(Rng& rng) const override;

  bool has_density() const override;
  double initial_logdensity(const Vec& y0) const override;
  double transition_logdensity(int n, const Vec& prev, const Vec& next) const override;
  std::optional<DiagGaussian> gaussian_initial() const override;
  std::optional<DiagGaussian> gaussian_transition(int n, const Vec& prev) const override;
  std::string describe() const override;

  double phi() const { return phi_; }
  const Vec& means() const { return means_; }
  const InnovationLaw& innovation() const { return innovation_; }

 private:
  double logdensity_of_residual(const Vec& residual) const;

  double phi_;
  Vec means_;
  InnovationLaw innovation_;
  int horizon_;
};

// --- Gaussian martingale random walk ----------------------------------------

// Y_0 = y0 (deterministic),  Y_n = Y_{n-1} + N(0, sigma^2) coordinatewise.
class RandomWalkProcess final : public MarkovProcess {
 public:
  RandomWalkProcess(Vec y0, double sigma, int horizon);

  int dim() const override { return static_cast<int>(y0_.size()); }
  int horizon() const override { return horizon_; }
  Mat sample_path(Rng& rng) const override;

  bool has_density() const override { return true; }
  double initial_logdensity(const Vec& y0) const override;
  double transition_logdensity(int n, const Vec& prev, const Vec& next) const override;
  std::optional<Vec> initial_point() const override { return y0_; }
  std::optional<DiagGaussian> gaussian_transition(int n, const Vec& prev) const override;
  std::string describe() const override;

  double sigma() const { return sigma_; }

 private:
  Vec y0_;
  double sigma_;
  int horizon_;
};

// --- configs and simulation ---------------------------------------------------

struct Ar1Config {
  double phi = 0.5;
  Vec means;
  Vec means_prime;
  InnovationLaw innovation = GaussianInnovation{0.0, 0.5};
  InnovationLaw innovation_prime = GaussianInnovation{0.0, 0.5};
  int horizon = 3;
  int dim = 2;
  std::uint64_t seed = 0;

  // Throws ConfigError with a descriptive message.
  void validate() const;

  ProcessPtr process() const;
  ProcessPtr process_prime() const;

  // Asset-specific means lo + (hi - lo)(i-1)/(d-1); a single asset gets lo.
  static Vec spread_means(int dim, double lo, double hi);

  // N(0, 0.5^2) for Y, 4 Beta(2,5) - 1.5 for Y', phi = 0.5, means in [-2, 2].
  static Ar1Config unimodal(int dim, int horizon, std::uint64_t seed);
  // Both innovations N(0, 0.5^2).
  static Ar1Config gaussian_unimodal(int dim, int horizon, std::uint64_t seed);
  // Time-constant Bernoulli(0.5) regime selector per asset, means in [-0.5, 0].
  static Ar1Config bimodal(int dim, int horizon, std::uint64_t seed);
};

// count i.i.d. pairs from the independent product of two path laws.
// Trajectory b is drawn from stream (seed, label, b).
Batch simulate_pairs(const MarkovProcess& law, const MarkovProcess& law_prime, int count,
                     std::uint64_t seed, std::string_view label = "traj");

Batch simulate_ar1(const Ar1Config& cfg, int count);

struct MartingaleConfig {
  int d_pairs = 1;
  int horizon = 5;
  double y0 = 1.0;
  double y0_prime = 2.0;
  double sigma = 1.0;
  double sigma_prime = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  ProcessPtr process() const;
  ProcessPtr process_prime() const;
};

Batch simulate_martingale(const MartingaleConfig& cfg, int count);

// Population lag-1 correlation Corr(Y_n, Y_{n-1}) of a stationary-started AR(1)
// with i.i.d. innovations including the one at n = 0.
double adjacent_corr_unimodal(double phi, int n);
// Same with a time-constant regime: innovation variance split into the
// between-regime part (var_between) and the within-regime part (var_within).
double adjacent_corr_bimodal(double phi, int n, double var_between, double var_within);

// log T_n(next | prev) of a process; throws DensityUnavailable for sample-only
// laws.
double reference_transition_logdensity(const MarkovProcess& spec, int n, const Vec& prev,
                                       const Vec& next);

}  // namespace bcot
