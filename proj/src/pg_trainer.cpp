#include "bcot/pg_trainer.hpp"

#include "bcot/parallel.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace bcot {

namespace {

std::string round_label(const char* kind, int k) { return std::string(kind) + "/round-" + std::to_string(k); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

// --- schedules ---------------------------------------------------------------

StepSchedule StepSchedule::constant(double eta) {
  StepSchedule s;
  s.kind = ScheduleKind::Constant;
  s.eta = eta;
  return s;
}

StepSchedule StepSchedule::poly_decay(double lambda, double alpha) {
  StepSchedule s;
  s.kind = ScheduleKind::PolyDecay;
  s.lambda = lambda;
  s.alpha = alpha;
  return s;
}

StepSchedule StepSchedule::inverse_k(double lambda) {
  StepSchedule s;
  s.kind = ScheduleKind::InverseK;
  s.lambda = lambda;
  s.alpha = 1.0;
  return s;
}

void StepSchedule::validate() const {
  switch (kind) {
    case ScheduleKind::Constant:
      if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("schedule: eta must be positive");
      break;
    case ScheduleKind::PolyDecay:
      if (!(alpha >= 0.0)) throw ConfigError("schedule: alpha must be >= 0");
      [[fallthrough]];
    case ScheduleKind::InverseK:
      if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("schedule: lambda must be positive");
      break;
  }
}

std::string StepSchedule::describe() const {
  std::ostringstream os;
  switch (kind) {
    case ScheduleKind::Constant:
      os << "constant(" << eta << ")";
      break;
    case ScheduleKind::PolyDecay:
      os << "poly_decay(" << lambda << ", " << alpha << ")";
      break;
    case ScheduleKind::InverseK:
      os << "inverse_k(" << lambda << ")";
      break;
  }
  return os.str();
}

double step_size(const StepSchedule& schedule, int k) {
  if (k < 1) throw std::invalid_argument("step_size: round index must be >= 1");
  switch (schedule.kind) {
    case ScheduleKind::Constant:
      return schedule.eta;
    case ScheduleKind::PolyDecay:
      return schedule.lambda / std::pow(static_cast<double>(k), schedule.alpha);
    case ScheduleKind::InverseK:
      return schedule.lambda / static_cast<double>(k);
  }
  return schedule.eta;
}

std::string to_string(BaselineFeatures f) {
  switch (f) {
    case BaselineFeatures::None:
      return "none";
    case BaselineFeatures::ConstantOnly:
      return "constant";
    case BaselineFeatures::LinearInState:
      return "linear";
  }
  return "none";
}

BaselineFeatures baseline_features_from_string(const std::string& name) {
  if (name == "none") return BaselineFeatures::None;
  if (name == "constant") return BaselineFeatures::ConstantOnly;
  if (name == "linear") return BaselineFeatures::LinearInState;
  throw ConfigError("unknown baseline features '" + name + "' (expected none, constant or linear)");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("train: beta must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (features != BaselineFeatures::None && batch_size < 2) {
    throw ConfigError("train: control variates need batch_size >= 2");
  }
  if (rounds < 0) throw ConfigError("train: rounds must be >= 0");
  if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
  if (eval_every > 0 && eval_batch < 2) throw ConfigError("train: eval_batch must be >= 2");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train: grad_clip must be positive");
  schedule.validate();
}

// --- per-trajectory statistics -----------------------------------------------------

PerTrajectoryStats per_trajectory_stats(const CouplingParams& params, const CostSpec& cost,
                                        const TrajectoryPair* gen, const TrajectoryPair* ref) {
  const int N = params.horizon();
  const int d = params.dim();
  PerTrajectoryStats st;
  const Vec empty;
  if (gen != nullptr) {
    validate_trajectory(*gen, d, N);
    st.v_hat.resize(N + 1);
    double tail = 0.0;
    for (int n = N; n >= 0; --n) {
      tail += stage_cost(cost, n, gen->y.row(n).transpose(), gen->y_prime.row(n).transpose());
      st.v_hat(n) = tail;
    }
    st.s_hat = Vec::Zero(params.size());
    for (int n = 0; n <= N; ++n) {
      const Vec py = n > 0 ? Vec(gen->y.row(n - 1).transpose()) : empty;
      const Vec pyp = n > 0 ? Vec(gen->y_prime.row(n - 1).transpose()) : empty;
      st.s_hat.segment(params.step_offset(n), params.step_size(n)) =
          joint_score(params, n, py, pyp, gen->y.row(n).transpose(), gen->y_prime.row(n).transpose());
    }
  }
  if (ref != nullptr) {
    validate_trajectory(*ref, d, N);
    st.k_hat = Vec::Zero(params.size());
    for (int n = 0; n <= N; ++n) {
      const Vec py = n > 0 ? Vec(ref->y.row(n - 1).transpose()) : empty;
      const Vec pyp = n > 0 ? Vec(ref->y_prime.row(n - 1).transpose()) : empty;
      st.k_hat.segment(params.step_offset(n), params.step_size(n)) =
          marginal_score(params, n, py, pyp, ref->y.row(n).transpose(), 1) +
          marginal_score(params, n, py, pyp, ref->y_prime.row(n).transpose(), 2);
    }
  }
  return st;
}

// --- control variates ---------------------------------------------------------------

Vec baseline_feature_vector(BaselineFeatures f, const Vec& prev_y, const Vec& prev_y_prime) {
  if (f == BaselineFeatures::LinearInState) {
    Vec phi(1 + prev_y.size() + prev_y_prime.size());
    phi << 1.0, prev_y, prev_y_prime;
    return phi;
  }
  return Vec::Ones(1);
}

double Baselines::value(int n, const Vec& prev_y, const Vec& prev_y_prime) const {
  if (features == BaselineFeatures::None) return 0.0;
  if (n == 0) return l0;
  return w.at(n).dot(baseline_feature_vector(features, prev_y, prev_y_prime));
}

Baselines fit_control_variates(const CouplingParams& params, const std::vector<PerTrajectoryStats>& aux_stats,
                               const Batch& aux_paths, BaselineFeatures features) {
  Baselines out;
  out.features = features;
  if (features == BaselineFeatures::None) return out;
  if (aux_stats.size() != aux_paths.size() || aux_stats.empty()) {
    throw std::invalid_argument("fit_control_variates: statistics and paths must be nonempty and aligned");
  }
  const int N = params.horizon();
  const std::size_t B = aux_stats.size();

  // n = 0: weighted mean of V-tilde with weights ||S-tilde||^2, 0 when all weights vanish.
  {
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double w = aux_stats[b].s_hat.segment(params.step_offset(0), params.step_size(0)).squaredNorm();
      num += aux_stats[b].v_hat(0) * w;
      den += w;
    }
    out.l0 = den > 0.0 ? num / den : 0.0;
  }

  out.w.assign(N + 1, Vec());
  for (int n = 1; n <= N; ++n) {
    const int p = features == BaselineFeatures::LinearInState ? 1 + 2 * params.dim() : 1;
    Mat A = Mat::Zero(p, p);
    Vec rhs = Vec::Zero(p);
    for (std::size_t b = 0; b < B; ++b) {
      const double w = aux_stats[b].s_hat.segment(params.step_offset(n), params.step_size(n)).squaredNorm();
      const Vec phi = baseline_feature_vector(features, aux_paths[b].y.row(n - 1).transpose(),
                                              aux_paths[b].y_prime.row(n - 1).transpose());
      A.noalias() += w * phi * phi.transpose();
      rhs.noalias() += w * aux_stats[b].v_hat(n) * phi;
    }
    const double trace = A.trace();
    if (!(trace > 0.0)) {
      out.w[n] = Vec::Zero(p);
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(A, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi)) A.diagonal().array() += 1e-8 * trace / p;
    out.w[n] = A.ldlt().solve(rhs);
  }
  return out;
}

// --- aggregate estimator ------------------------------------------------------------

GradientEstimate estimate_gradient(const CouplingParams& params, const CostSpec& cost, double beta,
                                   BaselineFeatures features, const Batch& gen, const Batch& aux, const Batch& ref) {
  if (gen.empty() || ref.empty()) throw std::invalid_argument("estimate_gradient: empty batch");
  if (features != BaselineFeatures::None && aux.empty()) {
    throw std::invalid_argument("estimate_gradient: control variates need an auxiliary batch");
  }
  const int N = params.horizon();
  const int P = params.size();
  const int Bg = static_cast<int>(gen.size());
  const int Br = static_cast<int>(ref.size());
  const int Ba = features == BaselineFeatures::None ? 0 : static_cast<int>(aux.size());

  std::vector<PerTrajectoryStats> gs(Bg), as(Ba), rs(Br);
  parallel_for(Bg, [&](int b) { gs[b] = per_trajectory_stats(params, cost, &gen[b], nullptr); });
  parallel_for(Ba, [&](int b) { as[b] = per_trajectory_stats(params, cost, &aux[b], nullptr); });
  parallel_for(Br, [&](int b) { rs[b] = per_trajectory_stats(params, cost, nullptr, &ref[b]); });

  GradientEstimate est;
  est.baselines = fit_control_variates(params, as, aux, features);
  est.g_val = Vec::Zero(P);
  est.g_kl = Vec::Zero(P);
  est.l_cv = Vec::Zero(P);

  double jv = 0.0;
  for (int b = 0; b < Bg; ++b) {
    jv += gs[b].v_hat(0);
    for (int n = 0; n <= N; ++n) {
      const auto s = gs[b].s_hat.segment(params.step_offset(n), params.step_size(n));
      est.g_val.segment(params.step_offset(n), params.step_size(n)) += gs[b].v_hat(n) * s;
      if (features != BaselineFeatures::None) {
        const double l = n == 0 ? est.baselines.l0
                                : est.baselines.value(n, gen[b].y.row(n - 1).transpose(),
                                                      gen[b].y_prime.row(n - 1).transpose());
        est.l_cv.segment(params.step_offset(n), params.step_size(n)) += l * s;
      }
    }
  }
  est.g_val /= Bg;
  est.l_cv /= Bg;
  est.j_val_batch = jv / Bg;
  for (int b = 0; b < Br; ++b) est.g_kl -= rs[b].k_hat;
  est.g_kl /= Br;

  est.g = est.g_val - est.l_cv;
  if (beta != 0.0) est.g += beta * est.g_kl;
  est.grad_norm = est.g.norm();
  est.step_norms.resize(N + 1);
  for (int n = 0; n <= N; ++n) est.step_norms[n] = est.g.segment(params.step_offset(n), params.step_size(n)).norm();
  return est;
}

RoundBatches draw_round_batches(const CouplingParams& params, const MarkovProcess& ref,
                                const MarkovProcess& ref_prime, int batch_size, std::uint64_t seed, int k) {
  RoundBatches rb;
  rb.gen = sample_coupling(params, batch_size, seed, round_label("gen-batch", k));
  rb.aux = sample_coupling(params, batch_size, seed, round_label("aux-batch", k));
  rb.ref = simulate_pairs(ref, ref_prime, batch_size, seed, round_label("ref-batch", k));
  return rb;
}

GradientEstimate gradient_step(CouplingParams& params, const TrainConfig& cfg, const CostSpec& cost,
                               const MarkovProcess& ref, const MarkovProcess& ref_prime, int k) {
  const RoundBatches rb = draw_round_batches(params, ref, ref_prime, cfg.batch_size, cfg.seed, k);
  GradientEstimate est = estimate_gradient(params, cost, cfg.beta, cfg.features, rb.gen, rb.aux, rb.ref);
  if (!est.g.allFinite()) {
    std::ostringstream os;
    os << "non-finite gradient in round " << k << " (|g_val|=" << est.g_val.norm() << ", |g_kl|=" << est.g_kl.norm()
       << ", |l_cv|=" << est.l_cv.norm() << ")";
    throw TrainingAborted(os.str(), k, {});
  }
  if (cfg.grad_clip && est.grad_norm > *cfg.grad_clip) est.g *= *cfg.grad_clip / est.grad_norm;
  params.mutable_theta() -= step_size(cfg.schedule, k) * est.g;
  if (!params.flatten().allFinite()) throw TrainingAborted("non-finite parameters after round " + std::to_string(k), k, {});
  return est;
}

// --- training loop -------------------------------------------------------------------

std::string history_csv_header() { return "round,eta,j_val,j_kl,j_beta,grad_norm,wallclock_ms"; }

std::string history_csv_row(const HistoryRow& row) {
  std::ostringstream os;
  os << row.round << ',' << fmt(row.eta) << ',' << fmt(row.j_val) << ',' << fmt(row.j_kl) << ',' << fmt(row.j_beta)
     << ',' << fmt(row.grad_norm) << ',' << std::fixed << std::setprecision(3) << row.wallclock_ms;
  return os.str();
}

TrainResult train(const TrainConfig& cfg, const CouplingParams& init, const CostSpec& cost,
                  const MarkovProcess& ref, const MarkovProcess& ref_prime, int first_round,
                  const CheckpointFn& checkpoint) {
  cfg.validate();
  if (ref.dim() != init.dim() || ref_prime.dim() != init.dim() || ref.horizon() != init.horizon() ||
      ref_prime.horizon() != init.horizon()) {
    throw ShapeError("train: coupling and reference shapes differ");
  }
  if (first_round < 1) throw std::invalid_argument("train: first_round must be >= 1");
  TrainResult out{init, {}};
  const bool closed_kl = closed_form_kl_available(ref, ref_prime);
  const auto start = std::chrono::steady_clock::now();
  for (int k = first_round; k <= cfg.rounds; ++k) {
    const CouplingParams before = out.params;
    GradientEstimate est;
    RoundBatches rb;
    try {
      rb = draw_round_batches(out.params, ref, ref_prime, cfg.batch_size, cfg.seed, k);
      est = estimate_gradient(out.params, cost, cfg.beta, cfg.features, rb.gen, rb.aux, rb.ref);
    } catch (const std::exception& e) {
      throw TrainingAborted(std::string("round ") + std::to_string(k) + ": " + e.what(), k, out.history);
    }
    HistoryRow row;
    row.round = k;
    row.eta = step_size(cfg.schedule, k);
    row.j_val = est.j_val_batch;
    row.grad_norm = est.grad_norm;
    if (closed_kl) {
      const double kl = estimate_j_kl(before, ref, ref_prime, rb.ref, KlMethod::ClosedForm).mean;
      row.j_kl = kl;
      row.j_beta = cfg.beta == 0.0 ? row.j_val : row.j_val + cfg.beta * kl;
    }
    if (!est.g.allFinite()) {
      std::ostringstream os;
      os << "non-finite gradient in round " << k << " (|g_val|=" << est.g_val.norm()
         << ", |g_kl|=" << est.g_kl.norm() << ", |l_cv|=" << est.l_cv.norm() << ")";
      throw TrainingAborted(os.str(), k, out.history);
    }
    if (cfg.grad_clip && est.grad_norm > *cfg.grad_clip) est.g *= *cfg.grad_clip / est.grad_norm;
    out.params.mutable_theta() -= row.eta * est.g;
    if (!out.params.flatten().allFinite()) {
      out.params = before;
      throw TrainingAborted("non-finite parameters after round " + std::to_string(k), k, out.history);
    }
    const bool eval_now = cfg.eval_every > 0 && (k % cfg.eval_every == 0 || k == cfg.rounds);
    if (eval_now) {
      row.report = evaluate_objective(out.params, cost, ref, ref_prime, cfg.beta, cfg.eval_batch,
                                      derive_seed(cfg.seed, "eval-round", static_cast<std::uint64_t>(k)));
    }
    row.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.history.push_back(std::move(row));
    if (eval_now && checkpoint) checkpoint(k, out.params, out.history);
  }
  return out;
}

}  // namespace bcot
