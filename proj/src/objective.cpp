#include "bcot/objective.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace bcot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Step-0 contribution for one side when the reference starts from a point.
double pinned_start_kl(const CouplingParams& params, const Vec& point, int which) {
  if (!params.pinned_start()) return kInf;
  const BlockLayout l = step_layout(params.dim(), 0);
  const Vec b = params.flatten().segment(params.step_offset(0) + (which == 1 ? l.b1 : l.b2), params.dim());
  return (b - point).cwiseAbs().maxCoeff() <= 1e-12 ? 0.0 : kInf;
}

double step0_kl(const CouplingParams& params, const MarkovProcess& ref, const Vec& y0, int which,
                bool closed_form) {
  if (auto point = ref.initial_point()) return pinned_start_kl(params, *point, which);
  if (params.pinned_start()) return kInf;
  const Vec empty;
  if (closed_form) {
    const auto g = ref.gaussian_initial();
    if (!g) throw DensityUnavailable("closed-form KL: reference initial law is not Gaussian");
    const StepKernel k = params.kernel(0, empty, empty);
    return closed_form_gaussian_kl(g->mean, g->std, which == 1 ? k.mean1 : k.mean2, which == 1 ? k.std1 : k.std2);
  }
  return ref.initial_logdensity(y0) - marginal_logdensity(params, 0, empty, empty, y0, which);
}

double path_kl(const CouplingParams& params, const MarkovProcess& ref, const MarkovProcess& ref_prime,
               const TrajectoryPair& t, bool closed_form) {
  double total = step0_kl(params, ref, t.y.row(0).transpose(), 1, closed_form) +
                 step0_kl(params, ref_prime, t.y_prime.row(0).transpose(), 2, closed_form);
  for (int n = 1; n <= params.horizon(); ++n) {
    const Vec py = t.y.row(n - 1).transpose();
    const Vec pyp = t.y_prime.row(n - 1).transpose();
    const Vec y = t.y.row(n).transpose();
    const Vec yp = t.y_prime.row(n).transpose();
    if (closed_form) {
      const auto g1 = ref.gaussian_transition(n, py);
      const auto g2 = ref_prime.gaussian_transition(n, pyp);
      if (!g1 || !g2) throw DensityUnavailable("closed-form KL: reference kernel is not Gaussian");
      const StepKernel k = params.kernel(n, py, pyp);
      total += closed_form_gaussian_kl(g1->mean, g1->std, k.mean1, k.std1) +
               closed_form_gaussian_kl(g2->mean, g2->std, k.mean2, k.std2);
    } else {
      total += reference_transition_logdensity(ref, n, py, y) - marginal_logdensity(params, n, py, pyp, y, 1);
      total += reference_transition_logdensity(ref_prime, n, pyp, yp) -
               marginal_logdensity(params, n, py, pyp, yp, 2);
    }
  }
  return total;
}

nlohmann::json number_or_null(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace

bool CostSpec::step_enabled(int n) const {
  if (enabled.empty()) return true;
  return n >= 0 && n < static_cast<int>(enabled.size()) && enabled[n];
}

std::string to_string(CostKind kind) {
  switch (kind) {
    case CostKind::SquaredDistance:
      return "squared";
    case CostKind::NormalizedSquared:
      return "normalized_squared";
    case CostKind::ZeroAtStart:
      return "zero_at_start";
  }
  return "squared";
}

CostKind cost_kind_from_string(const std::string& name) {
  if (name == "squared") return CostKind::SquaredDistance;
  if (name == "normalized_squared") return CostKind::NormalizedSquared;
  if (name == "zero_at_start") return CostKind::ZeroAtStart;
  throw ConfigError("unknown cost kind '" + name + "' (expected squared, normalized_squared or zero_at_start)");
}

double stage_cost(const CostSpec& spec, int n, const Vec& y, const Vec& y_prime) {
  if (y.size() != y_prime.size()) throw ShapeError("stage_cost: dimension mismatch");
  if (!spec.step_enabled(n)) return 0.0;
  if (spec.kind == CostKind::ZeroAtStart && n == 0) return 0.0;
  double c = (y - y_prime).squaredNorm();
  if (spec.kind == CostKind::NormalizedSquared) c /= static_cast<double>(y.size());
  if (spec.clamp) c = std::min(c, *spec.clamp);
  return c;
}

double path_cost(const CostSpec& spec, const TrajectoryPair& traj) {
  double total = 0.0;
  for (int n = 0; n <= traj.horizon(); ++n) {
    total += stage_cost(spec, n, traj.y.row(n).transpose(), traj.y_prime.row(n).transpose());
  }
  return total;
}

MeanSe estimate_j_val(const CostSpec& spec, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("estimate_j_val: empty batch");
  std::vector<double> values(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) values[b] = path_cost(spec, batch[b]);
  return mean_and_se(values);
}

double closed_form_gaussian_kl(const Vec& mean1, const Vec& std1, const Vec& mean2, const Vec& std2) {
  const auto d = mean1.size();
  if (std1.size() != d || mean2.size() != d || std2.size() != d) throw ShapeError("gaussian KL: dimension mismatch");
  if (!((std1.array() > 0.0).all() && (std2.array() > 0.0).all())) {
    throw std::invalid_argument("gaussian KL: standard deviations must be positive");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double diff = mean1(i) - mean2(i);
    total += std::log(std2(i) / std1(i)) + (std1(i) * std1(i) + diff * diff) / (2.0 * std2(i) * std2(i)) - 0.5;
  }
  return std::max(total, 0.0);
}

bool closed_form_kl_available(const MarkovProcess& ref, const MarkovProcess& ref_prime) {
  for (const MarkovProcess* p : {&ref, &ref_prime}) {
    if (!p->initial_point() && !p->gaussian_initial()) return false;
    if (!p->gaussian_transition(1, Vec::Zero(p->dim()))) return false;
  }
  return true;
}

MeanSe estimate_j_kl(const CouplingParams& params, const MarkovProcess& ref, const MarkovProcess& ref_prime,
                     const Batch& ref_batch, KlMethod method) {
  if (ref_batch.empty()) throw std::invalid_argument("estimate_j_kl: empty batch");
  bool closed_form = method == KlMethod::ClosedForm;
  if (method == KlMethod::Auto) {
    closed_form = closed_form_kl_available(ref, ref_prime);
    if (!closed_form && !(ref.has_density() && ref_prime.has_density())) {
      throw DensityUnavailable("estimate_j_kl: reference laws provide no densities");
    }
  }
  std::vector<double> values(ref_batch.size());
  for (std::size_t b = 0; b < ref_batch.size(); ++b) {
    validate_trajectory(ref_batch[b], params.dim(), params.horizon());
    values[b] = path_kl(params, ref, ref_prime, ref_batch[b], closed_form);
  }
  for (double v : values) {
    if (std::isinf(v)) return MeanSe{kInf, 0.0};
  }
  return mean_and_se(values);
}

std::string ObjectiveReport::to_json() const {
  nlohmann::json j;
  j["beta"] = beta;
  j["j_val"] = j_val;
  j["j_val_se"] = j_val_se;
  j["j_kl"] = number_or_null(j_kl);
  j["j_kl_se"] = number_or_null(j_kl_se);
  j["j_beta"] = number_or_null(j_beta);
  j["j_beta_se"] = number_or_null(j_beta_se);
  j["kl_method"] = kl_method;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  return j.dump();
}

ObjectiveReport evaluate_objective(const CouplingParams& params, const CostSpec& cost, const MarkovProcess& ref,
                                   const MarkovProcess& ref_prime, double beta, int batch_size,
                                   std::uint64_t seed, KlMethod method) {
  if (beta < 0.0) throw std::invalid_argument("evaluate_objective: beta must be >= 0");
  ObjectiveReport r;
  r.beta = beta;
  r.batch_size = batch_size;
  r.seed = seed;
  const Batch gen = sample_coupling(params, batch_size, seed, "eval-gen");
  const MeanSe jv = estimate_j_val(cost, gen);
  r.j_val = jv.mean;
  r.j_val_se = jv.se;
  const bool closed = method == KlMethod::ClosedForm ||
                      (method == KlMethod::Auto && closed_form_kl_available(ref, ref_prime));
  r.kl_method = closed ? "closed_form" : "log_ratio";
  try {
    const Batch refs = simulate_pairs(ref, ref_prime, batch_size, seed, "eval-ref");
    const MeanSe kl = estimate_j_kl(params, ref, ref_prime, refs, method);
    r.j_kl = kl.mean;
    r.j_kl_se = kl.se;
    r.j_beta = beta == 0.0 ? jv.mean : jv.mean + beta * kl.mean;
    r.j_beta_se = beta == 0.0 ? jv.se : std::sqrt(jv.se * jv.se + beta * beta * kl.se * kl.se);
  } catch (const DensityUnavailable&) {
    r.kl_method = "unavailable";
  }
  return r;
}

}  // namespace bcot
