#include "bcot/processes.hpp"

#include "bcot/parallel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>


namespace bcot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_logpdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return -kHalfLog2Pi - std::log(std) - 0.5 * z * z;
}

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

std::string describe_basic(const BasicInnovation& law) {
  std::ostringstream os;
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) {
    os << "N(" << g->mean << ", " << g->std << "^2)";
  } else {
    const auto& b = std::get<ScaledBetaInnovation>(law);
    os << b.scale << "*Beta(" << b.a << ", " << b.b << ")" << (b.shift < 0 ? "" : "+") << b.shift;
  }
  return os.str();
}

void validate_basic(const BasicInnovation& law, const char* who) {
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) {
    if (!(g->std > 0.0) || !std::isfinite(g->std) || !std::isfinite(g->mean)) {
      throw ConfigError(std::string(who) + ": Gaussian innovation needs a finite mean and std > 0");
    }
  } else {
    const auto& b = std::get<ScaledBetaInnovation>(law);
    if (!(b.a > 0.0) || !(b.b > 0.0)) {
      throw ConfigError(std::string(who) + ": Beta shape parameters must be strictly positive");
    }
    if (!(b.scale > 0.0) || !std::isfinite(b.scale) || !std::isfinite(b.shift)) {
      throw ConfigError(std::string(who) + ": Beta scale must be positive and finite");
    }
  }
}

void validate_law(const InnovationLaw& law, const char* who) {
  if (const auto* m = std::get_if<BernoulliMixtureInnovation>(&law)) {
    if (!(m->p_second >= 0.0 && m->p_second <= 1.0)) {
      throw ConfigError(std::string(who) + ": mixture probability must lie in [0, 1]");
    }
    validate_basic(m->first, who);
    validate_basic(m->second, who);
  } else if (const auto* g = std::get_if<GaussianInnovation>(&law)) {
    validate_basic(*g, who);
  } else {
    validate_basic(std::get<ScaledBetaInnovation>(law), who);
  }
}

}  // namespace

// --- MarkovProcess defaults --------------------------------------------------

double MarkovProcess::initial_logdensity(const Vec&) const {
  throw DensityUnavailable("density unavailable: " + describe() + " is sample-only at n = 0");
}

double MarkovProcess::transition_logdensity(int, const Vec&, const Vec&) const {
  throw DensityUnavailable("density unavailable: " + describe() + " is sample-only");
}

std::optional<DiagGaussian> MarkovProcess::gaussian_transition(int, const Vec&) const {
  return std::nullopt;
}

// --- innovations ---------------------------------------------------------------

double innovation_mean(const BasicInnovation& law) {
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) return g->mean;
  const auto& b = std::get<ScaledBetaInnovation>(law);
  return b.scale * b.a / (b.a + b.b) + b.shift;
}

double innovation_variance(const BasicInnovation& law) {
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) return g->std * g->std;
  const auto& b = std::get<ScaledBetaInnovation>(law);
  const double s = b.a + b.b;
  return b.scale * b.scale * b.a * b.b / (s * s * (s + 1.0));
}

double sample_innovation(const BasicInnovation& law, Rng& rng) {
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) {
    return g->mean + g->std * standard_normal(rng);
  }
  const auto& b = std::get<ScaledBetaInnovation>(law);
  return b.scale * sample_beta(b.a, b.b, rng) + b.shift;
}

double innovation_logdensity(const BasicInnovation& law, double e) {
  if (const auto* g = std::get_if<GaussianInnovation>(&law)) {
    return gaussian_logpdf(e, g->mean, g->std);
  }
  const auto& b = std::get<ScaledBetaInnovation>(law);
  const double x = (e - b.shift) / b.scale;
  if (!(x > 0.0 && x < 1.0)) return kNegInf;
  const double log_beta_fn = std::lgamma(b.a) + std::lgamma(b.b) - std::lgamma(b.a + b.b);
  return (b.a - 1.0) * std::log(x) + (b.b - 1.0) * std::log1p(-x) - log_beta_fn - std::log(b.scale);
}

MixtureMoments mixture_moments(const BernoulliMixtureInnovation& law) {
  const double p = law.p_second;
  const double m0 = innovation_mean(law.first);
  const double m1 = innovation_mean(law.second);
  MixtureMoments out;
  out.var_between = p * (1.0 - p) * (m1 - m0) * (m1 - m0);
  out.var_within = (1.0 - p) * innovation_variance(law.first) + p * innovation_variance(law.second);
  return out;
}

// --- AR(1) -----------------------------------------------------------------------

Ar1Process::Ar1Process(double phi, Vec means, InnovationLaw innovation, int horizon)
    : phi_(phi), means_(std::move(means)), innovation_(std::move(innovation)), horizon_(horizon) {
  if (!(std::abs(phi_) < 1.0)) throw ConfigError("AR(1): |phi| must be < 1");
  if (horizon_ < 1) throw ConfigError("AR(1): horizon must be >= 1");
  if (means_.size() < 1) throw ConfigError("AR(1): dimension must be >= 1");
  validate_law(innovation_, "AR(1)");
}

Mat Ar1Process::sample_path(Rng& rng) const {
  const int d = dim();
  Mat path(horizon_ + 1, d);
  if (const auto* mix = std::get_if<BernoulliMixtureInnovation>(&innovation_)) {
    std::bernoulli_distribution selector(mix->p_second);
    std::vector<const BasicInnovation*> regime(d);
    for (int i = 0; i < d; ++i) regime[i] = selector(rng) ? &mix->second : &mix->first;
    for (int n = 0; n <= horizon_; ++n) {
      for (int i = 0; i < d; ++i) {
        const double prev = n == 0 ? 0.0 : phi_ * path(n - 1, i);
        path(n, i) = means_(i) + prev + sample_innovation(*regime[i], rng);
      }
    }
    return path;
  }
  const BasicInnovation basic = std::holds_alternative<GaussianInnovation>(innovation_)
                                    ? BasicInnovation(std::get<GaussianInnovation>(innovation_))
                                    : BasicInnovation(std::get<ScaledBetaInnovation>(innovation_));
  for (int n = 0; n <= horizon_; ++n) {
    for (int i = 0; i < d; ++i) {
      const double prev = n == 0 ? 0.0 : phi_ * path(n - 1, i);
      path(n, i) = means_(i) + prev + sample_innovation(basic, rng);
    }
  }
  return path;
}

bool Ar1Process::has_density() const {
  return !std::holds_alternative<BernoulliMixtureInnovation>(innovation_);
}

double Ar1Process::logdensity_of_residual(const Vec& residual) const {
  if (!has_density()) {
    throw DensityUnavailable("density unavailable: " + describe() +
                             " has a latent regime selector (sample-only)");
  }
  const BasicInnovation basic = std::holds_alternative<GaussianInnovation>(innovation_)
                                    ? BasicInnovation(std::get<GaussianInnovation>(innovation_))
                                    : BasicInnovation(std::get<ScaledBetaInnovation>(innovation_));
  double total = 0.0;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    const double lp = innovation_logdensity(basic, residual(i));
    if (lp == kNegInf) return kNegInf;
    total += lp;
  }
  return total;
}

double Ar1Process::initial_logdensity(const Vec& y0) const {
  if (y0.size() != means_.size()) throw ShapeError("AR(1): state dimension mismatch");
  return logdensity_of_residual(y0 - means_);
}

double Ar1Process::transition_logdensity(int n, const Vec& prev, const Vec& next) const {
  if (n < 1 || n > horizon_) throw std::out_of_range("AR(1): transition index out of range");
  if (prev.size() != means_.size() || next.size() != means_.size()) {
    throw ShapeError("AR(1): state dimension mismatch");
  }
  return logdensity_of_residual(next - means_ - phi_ * prev);
}

std::optional<DiagGaussian> Ar1Process::gaussian_initial() const {
  const auto* g = std::get_if<GaussianInnovation>(&innovation_);
  if (g == nullptr) return std::nullopt;
  return DiagGaussian{(means_.array() + g->mean).matrix(), Vec::Constant(dim(), g->std)};
}

std::optional<DiagGaussian> Ar1Process::gaussian_transition(int, const Vec& prev) const {
  const auto* g = std::get_if<GaussianInnovation>(&innovation_);
  if (g == nullptr) return std::nullopt;
  return DiagGaussian{((means_ + phi_ * prev).array() + g->mean).matrix(), Vec::Constant(dim(), g->std)};
}

std::string Ar1Process::describe() const {
  std::ostringstream os;
  os << "AR(1)[phi=" << phi_ << ", d=" << dim() << ", N=" << horizon_ << ", eps=";
  if (const auto* m = std::get_if<BernoulliMixtureInnovation>(&innovation_)) {
    os << "mix(" << 1.0 - m->p_second << ":" << describe_basic(m->first) << ", " << m->p_second << ":"
       << describe_basic(m->second) << ")";
  } else if (const auto* g = std::get_if<GaussianInnovation>(&innovation_)) {
    os << describe_basic(*g);
  } else {
    os << describe_basic(std::get<ScaledBetaInnovation>(innovation_));
  }
  os << "]";
  return os.str();
}

// --- random walk -------------------------------------------------------------------

RandomWalkProcess::RandomWalkProcess(Vec y0, double sigma, int horizon)
    : y0_(std::move(y0)), sigma_(sigma), horizon_(horizon) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw ConfigError("random walk: sigma must be > 0");
  if (horizon_ < 1) throw ConfigError("random walk: horizon must be >= 1");
  if (y0_.size() < 1) throw ConfigError("random walk: dimension must be >= 1");
  if (!y0_.allFinite()) throw ConfigError("random walk: initial point must be finite");
}

Mat RandomWalkProcess::sample_path(Rng& rng) const {
  const int d = dim();
  Mat path(horizon_ + 1, d);
  path.row(0) = y0_.transpose();
  for (int n = 1; n <= horizon_; ++n) {
    for (int i = 0; i < d; ++i) path(n, i) = path(n - 1, i) + sigma_ * standard_normal(rng);
  }
  return path;
}

double RandomWalkProcess::initial_logdensity(const Vec&) const {
  throw DensityUnavailable("density unavailable: " + describe() + " starts from a point mass");
}

double RandomWalkProcess::transition_logdensity(int n, const Vec& prev, const Vec& next) const {
  if (n < 1 || n > horizon_) throw std::out_of_range("random walk: transition index out of range");
  if (prev.size() != y0_.size() || next.size() != y0_.size()) {
    throw ShapeError("random walk: state dimension mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < prev.size(); ++i) total += gaussian_logpdf(next(i), prev(i), sigma_);
  return total;
}

std::optional<DiagGaussian> RandomWalkProcess::gaussian_transition(int, const Vec& prev) const {
  return DiagGaussian{prev, Vec::Constant(dim(), sigma_)};
}

std::string RandomWalkProcess::describe() const {
  std::ostringstream os;
  os << "random-walk[y0=" << y0_(0) << ", sigma=" << sigma_ << ", d=" << dim() << ", N=" << horizon_
     << "]";
  return os.str();
}

// --- configs -------------------------------------------------------------------------

void Ar1Config::validate() const {
  if (!(std::abs(phi) < 1.0)) throw ConfigError("ar1: |phi| must be < 1, got " + std::to_string(phi));
  if (dim < 1) throw ConfigError("ar1: dim must be >= 1");
  if (horizon < 1) throw ConfigError("ar1: horizon must be >= 1");
  if (means.size() != dim || means_prime.size() != dim) {
    throw ConfigError("ar1: means and means_prime must have length dim = " + std::to_string(dim));
  }
  validate_law(innovation, "ar1 innovation");
  validate_law(innovation_prime, "ar1 innovation_prime");
}

ProcessPtr Ar1Config::process() const {
  validate();
  return std::make_shared<Ar1Process>(phi, means, innovation, horizon);
}

ProcessPtr Ar1Config::process_prime() const {
  validate();
  return std::make_shared<Ar1Process>(phi, means_prime, innovation_prime, horizon);
}

Vec Ar1Config::spread_means(int dim, double lo, double hi) {
  Vec m(dim);
  for (int i = 0; i < dim; ++i) m(i) = dim == 1 ? lo : lo + (hi - lo) * i / (dim - 1);
  return m;
}

Ar1Config Ar1Config::unimodal(int dim, int horizon, std::uint64_t seed) {
  Ar1Config cfg;
  cfg.phi = 0.5;
  cfg.dim = dim;
  cfg.horizon = horizon;
  cfg.seed = seed;
  cfg.means = spread_means(dim, -2.0, 2.0);
  cfg.means_prime = cfg.means;
  cfg.innovation = GaussianInnovation{0.0, 0.5};
  cfg.innovation_prime = ScaledBetaInnovation{2.0, 5.0, 4.0, -1.5};
  return cfg;
}

Ar1Config Ar1Config::gaussian_unimodal(int dim, int horizon, std::uint64_t seed) {
  Ar1Config cfg = unimodal(dim, horizon, seed);
  cfg.innovation_prime = GaussianInnovation{0.0, 0.5};
  return cfg;
}

Ar1Config Ar1Config::bimodal(int dim, int horizon, std::uint64_t seed) {
  Ar1Config cfg;
  cfg.phi = 0.5;
  cfg.dim = dim;
  cfg.horizon = horizon;
  cfg.seed = seed;
  cfg.means = spread_means(dim, -0.5, 0.0);
  cfg.means_prime = cfg.means;
  cfg.innovation = BernoulliMixtureInnovation{0.5, GaussianInnovation{1.5, 0.5},
                                              ScaledBetaInnovation{2.0, 5.0, 2.5, -2.5}};
  cfg.innovation_prime = BernoulliMixtureInnovation{0.5, GaussianInnovation{-1.5, 0.5},
                                                    ScaledBetaInnovation{5.0, 2.0, 2.5, 0.5}};
  return cfg;
}

Batch simulate_pairs(const MarkovProcess& law, const MarkovProcess& law_prime, int count,
                     std::uint64_t seed, std::string_view label) {
  if (count < 1) throw std::invalid_argument("simulate: count must be >= 1");
  if (law.dim() != law_prime.dim() || law.horizon() != law_prime.horizon()) {
    throw ShapeError("simulate: the two path laws must share dimension and horizon");
  }
  Batch out(count);
  parallel_for(count, [&](int b) {
    Rng rng = make_stream(seed, label, static_cast<std::uint64_t>(b));
    out[b].y = law.sample_path(rng);
    out[b].y_prime = law_prime.sample_path(rng);
  });
  return out;
}

Batch simulate_ar1(const Ar1Config& cfg, int count) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("simulate_ar1: count must be >= 1");
  return simulate_pairs(*cfg.process(), *cfg.process_prime(), count, cfg.seed);
}

void MartingaleConfig::validate() const {
  if (d_pairs < 1) throw ConfigError("martingale: d_pairs must be >= 1");
  if (horizon < 1) throw ConfigError("martingale: horizon must be >= 1");
  if (!(sigma > 0.0) || !(sigma_prime > 0.0)) throw ConfigError("martingale: sigmas must be > 0");
  if (!std::isfinite(y0) || !std::isfinite(y0_prime)) throw ConfigError("martingale: initial values must be finite");
}

ProcessPtr MartingaleConfig::process() const {
  validate();
  return std::make_shared<RandomWalkProcess>(Vec::Constant(d_pairs, y0), sigma, horizon);
}

ProcessPtr MartingaleConfig::process_prime() const {
  validate();
  return std::make_shared<RandomWalkProcess>(Vec::Constant(d_pairs, y0_prime), sigma_prime, horizon);
}

Batch simulate_martingale(const MartingaleConfig& cfg, int count) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("simulate_martingale: count must be >= 1");
  return simulate_pairs(*cfg.process(), *cfg.process_prime(), count, cfg.seed);
}

// --- correlations ---------------------------------------------------------------------

double adjacent_corr_unimodal(double phi, int n) {
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("adjacent_corr_unimodal: |phi| must be < 1");
  if (n < 1) throw std::invalid_argument("adjacent_corr_unimodal: n must be >= 1");
  const double num = 1.0 - std::pow(phi, 2 * n);
  const double den = 1.0 - std::pow(phi, 2 * (n + 1));
  if (den == 0.0) return 0.0;  // phi == 0
  return phi * std::sqrt(num / den);
}

double adjacent_corr_bimodal(double phi, int n, double var_between, double var_within) {
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("adjacent_corr_bimodal: |phi| must be < 1");
  if (n < 1) throw std::invalid_argument("adjacent_corr_bimodal: n must be >= 1");
  if (!(var_between >= 0.0) || !(var_within > 0.0)) {
    throw std::invalid_argument("adjacent_corr_bimodal: need var_between >= 0 and var_within > 0");
  }
  // Ratio of between-regime to within-regime variance of Y_k.
  auto kappa = [&](int k) {
    const double pk1 = std::pow(phi, k + 1);
    return ((1.0 + phi) / (1.0 + pk1) * var_between) / ((1.0 - phi) / (1.0 - pk1) * var_within);
  };
  const double kn = kappa(n);
  const double kp = kappa(n - 1);
  return (adjacent_corr_unimodal(phi, n) + std::sqrt(kn * kp)) / std::sqrt((1.0 + kn) * (1.0 + kp));
}

double reference_transition_logdensity(const MarkovProcess& spec, int n, const Vec& prev,
                                       const Vec& next) {
  return spec.transition_logdensity(n, prev, next);
}

}  // namespace bcot
