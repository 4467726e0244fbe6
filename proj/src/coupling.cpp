#include "bcot/coupling.hpp"

#include "bcot/parallel.hpp"

#include <cmath>
#include <numbers>

namespace bcot {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw std::invalid_argument(std::string("coupling: non-finite ") + what);
}

void check_step(const CouplingParams& p, int n) {
  if (n < 0 || n > p.horizon()) throw std::out_of_range("coupling: step index out of range");
}

void check_states(const CouplingParams& p, int n, const Vec& prev_y, const Vec& prev_yp) {
  check_step(p, n);
  if (n == 0) return;
  if (prev_y.size() != p.dim() || prev_yp.size() != p.dim()) {
    throw ShapeError("coupling: previous state has wrong dimension");
  }
  check_finite(prev_y, "previous state");
  check_finite(prev_yp, "previous state");
}

}  // namespace

BlockLayout step_layout(int dim, int n) {
  BlockLayout l;
  const int d = dim;
  int at = 0;
  if (n > 0) {
    l.w1 = at;
    at += 2 * d * d;
    l.w2 = at;
    at += 2 * d * d;
  }
  l.b1 = at;
  at += d;
  l.b2 = at;
  at += d;
  l.log_std1 = at;
  at += d;
  l.log_std2 = at;
  at += d;
  l.corr_raw = at;
  at += d;
  l.size = at;
  return l;
}

int CouplingParams::parameter_count(int dim, int horizon) {
  return step_layout(dim, 0).size + horizon * step_layout(dim, 1).size;
}

CouplingParams::CouplingParams(int dim, int horizon, double rho_max, bool pinned_start)
    : dim_(dim), horizon_(horizon), rho_max_(rho_max), pinned_start_(pinned_start) {
  if (dim < 1) throw ShapeError("coupling: dim must be >= 1");
  if (horizon < 1) throw ShapeError("coupling: horizon must be >= 1");
  if (!(rho_max > 0.0 && rho_max < 1.0)) throw std::invalid_argument("coupling: rho_max must lie in (0, 1)");
  offsets_.resize(horizon + 2);
  offsets_[0] = 0;
  for (int n = 0; n <= horizon; ++n) offsets_[n + 1] = offsets_[n] + step_layout(dim, n).size;
  theta_ = Vec::Zero(offsets_.back());
}

void CouplingParams::unflatten(const Vec& theta) {
  if (theta.size() != theta_.size()) {
    throw ShapeError("coupling: parameter vector has " + std::to_string(theta.size()) + " entries, layout needs " +
                     std::to_string(theta_.size()));
  }
  theta_ = theta;
}

StepKernel CouplingParams::kernel(int n, const Vec& prev_y, const Vec& prev_y_prime) const {
  const int d = dim_;
  const BlockLayout l = step_layout(d, n);
  const auto blk = block(n);
  StepKernel k;
  k.mean1 = blk.segment(l.b1, d);
  k.mean2 = blk.segment(l.b2, d);
  if (n > 0) {
    Vec x(2 * d);
    x << prev_y, prev_y_prime;
    Eigen::Map<const RowMat> w1(blk.data() + l.w1, d, 2 * d);
    Eigen::Map<const RowMat> w2(blk.data() + l.w2, d, 2 * d);
    k.mean1 += w1 * x;
    k.mean2 += w2 * x;
  }
  k.std1 = blk.segment(l.log_std1, d).array().exp();
  k.std2 = blk.segment(l.log_std2, d).array().exp();
  k.rho = rho_max_ * blk.segment(l.corr_raw, d).array().tanh();
  return k;
}

CouplingParams CouplingParams::identity_init(int dim, int horizon, double init_std, double rho_max) {
  if (!(init_std > 0.0)) throw std::invalid_argument("coupling: init_std must be > 0");
  CouplingParams p(dim, horizon, rho_max, false);
  const int d = dim;
  for (int n = 0; n <= horizon; ++n) {
    const BlockLayout l = step_layout(d, n);
    auto blk = p.block(n);
    blk.segment(l.log_std1, d).setConstant(std::log(init_std));
    blk.segment(l.log_std2, d).setConstant(std::log(init_std));
    if (n > 0) {
      Eigen::Map<RowMat> w1(blk.data() + l.w1, d, 2 * d);
      Eigen::Map<RowMat> w2(blk.data() + l.w2, d, 2 * d);
      for (int i = 0; i < d; ++i) {
        w1(i, i) = 1.0;
        w2(i, d + i) = 1.0;
      }
    }
  }
  return p;
}

CouplingParams CouplingParams::identity_init_pinned(const Vec& y0, const Vec& y0_prime, int horizon,
                                                    double init_std, double rho_max) {
  if (y0.size() != y0_prime.size()) throw ShapeError("coupling: pinned start points differ in dimension");
  const int d = static_cast<int>(y0.size());
  CouplingParams base = identity_init(d, horizon, init_std, rho_max);
  CouplingParams p(d, horizon, rho_max, true);
  p.theta_ = base.theta_;
  const BlockLayout l = step_layout(d, 0);
  auto blk = p.block(0);
  blk.segment(l.b1, d) = y0;
  blk.segment(l.b2, d) = y0_prime;
  return p;
}

// --- sampling ---------------------------------------------------------------

TrajectoryPair sample_pair_from_noise(const CouplingParams& params, const Mat& noise) {
  const int d = params.dim();
  const int N = params.horizon();
  if (noise.rows() != N + 1 || noise.cols() != 2 * d) throw ShapeError("coupling: noise array has wrong shape");
  TrajectoryPair out{Mat(N + 1, d), Mat(N + 1, d)};
  Vec prev_y = Vec::Zero(d), prev_yp = Vec::Zero(d);
  for (int n = 0; n <= N; ++n) {
    const StepKernel k = params.kernel(n, prev_y, prev_yp);
    for (int i = 0; i < d; ++i) {
      if (n == 0 && params.pinned_start()) {
        out.y(n, i) = k.mean1(i);
        out.y_prime(n, i) = k.mean2(i);
        continue;
      }
      const double z1 = noise(n, 2 * i);
      const double z2 = noise(n, 2 * i + 1);
      const double r = k.rho(i);
      const double u = z1;
      const double v = r * z1 + std::sqrt(1.0 - r * r) * z2;
      out.y(n, i) = k.mean1(i) + k.std1(i) * u;
      out.y_prime(n, i) = k.mean2(i) + k.std2(i) * v;
    }
    prev_y = out.y.row(n).transpose();
    prev_yp = out.y_prime.row(n).transpose();
  }
  return out;
}

TrajectoryPair sample_pair(const CouplingParams& params, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat noise(params.horizon() + 1, 2 * params.dim());
  for (int n = 0; n <= params.horizon(); ++n) {
    for (int c = 0; c < noise.cols(); ++c) noise(n, c) = normal(rng);
  }
  return sample_pair_from_noise(params, noise);
}

TrajectoryPair sample_pair(const CouplingParams& params, std::uint64_t seed) {
  Rng rng = make_stream(seed, "pair", 0);
  return sample_pair(params, rng);
}

Batch sample_coupling(const CouplingParams& params, int count, std::uint64_t seed, std::string_view label) {
  if (count < 1) throw std::invalid_argument("sample_coupling: count must be >= 1");
  Batch out(count);
  parallel_for(count, [&](int b) {
    Rng rng = make_stream(seed, label, static_cast<std::uint64_t>(b));
    out[b] = sample_pair(params, rng);
  });
  return out;
}

// --- densities ----------------------------------------------------------------

double joint_logdensity(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                        const Vec& y, const Vec& y_prime) {
  check_states(params, n, prev_y, prev_y_prime);
  if (y.size() != params.dim() || y_prime.size() != params.dim()) throw ShapeError("coupling: state has wrong dimension");
  check_finite(y, "state");
  check_finite(y_prime, "state");
  if (n == 0 && params.pinned_start()) throw DensityUnavailable("coupling: pinned start has no density at n = 0");
  const StepKernel k = params.kernel(n, prev_y, prev_y_prime);
  double total = 0.0;
  for (int i = 0; i < params.dim(); ++i) {
    const double u = (y(i) - k.mean1(i)) / k.std1(i);
    const double v = (y_prime(i) - k.mean2(i)) / k.std2(i);
    const double r = k.rho(i);
    const double q = 1.0 - r * r;
    total += -kLog2Pi - std::log(k.std1(i)) - std::log(k.std2(i)) - 0.5 * std::log(q) -
             (u * u - 2.0 * r * u * v + v * v) / (2.0 * q);
  }
  return total;
}

double marginal_logdensity(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                           const Vec& value, int which) {
  check_states(params, n, prev_y, prev_y_prime);
  if (which != 1 && which != 2) throw std::invalid_argument("coupling: marginal index must be 1 or 2");
  if (value.size() != params.dim()) throw ShapeError("coupling: state has wrong dimension");
  check_finite(value, "state");
  if (n == 0 && params.pinned_start()) throw DensityUnavailable("coupling: pinned start has no density at n = 0");
  const StepKernel k = params.kernel(n, prev_y, prev_y_prime);
  const Vec& mean = which == 1 ? k.mean1 : k.mean2;
  const Vec& std = which == 1 ? k.std1 : k.std2;
  double total = 0.0;
  for (int i = 0; i < params.dim(); ++i) {
    const double z = (value(i) - mean(i)) / std(i);
    total += -0.5 * kLog2Pi - std::log(std(i)) - 0.5 * z * z;
  }
  return total;
}

// --- scores -----------------------------------------------------------------------

namespace {

// Scatters d(log q)/d(mean_which) into the bias and weight entries.
void scatter_mean_grad(Eigen::Ref<Vec> out, const BlockLayout& l, int d, int which, const Vec& dmean,
                       const Vec& x, bool has_prev) {
  const int b = which == 1 ? l.b1 : l.b2;
  out.segment(b, d) += dmean;
  if (!has_prev) return;
  const int w = which == 1 ? l.w1 : l.w2;
  Eigen::Map<RowMat> gw(out.data() + w, d, 2 * d);
  gw.noalias() += dmean * x.transpose();
}

}  // namespace

Vec joint_score(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime, const Vec& y,
                const Vec& y_prime) {
  check_states(params, n, prev_y, prev_y_prime);
  const int d = params.dim();
  if (y.size() != d || y_prime.size() != d) throw ShapeError("coupling: state has wrong dimension");
  check_finite(y, "state");
  check_finite(y_prime, "state");
  const BlockLayout l = step_layout(d, n);
  Vec g = Vec::Zero(l.size);
  if (n == 0 && params.pinned_start()) return g;
  const StepKernel k = params.kernel(n, prev_y, prev_y_prime);
  const Vec raw = params.flatten().segment(params.step_offset(n) + l.corr_raw, d);
  Vec dm1(d), dm2(d);
  for (int i = 0; i < d; ++i) {
    const double s1 = k.std1(i), s2 = k.std2(i), r = k.rho(i);
    const double u = (y(i) - k.mean1(i)) / s1;
    const double v = (y_prime(i) - k.mean2(i)) / s2;
    const double q = 1.0 - r * r;
    const double quad = u * u - 2.0 * r * u * v + v * v;
    dm1(i) = (u - r * v) / (q * s1);
    dm2(i) = (v - r * u) / (q * s2);
    g(l.log_std1 + i) = -1.0 + u * (u - r * v) / q;
    g(l.log_std2 + i) = -1.0 + v * (v - r * u) / q;
    const double dl_drho = r / q + u * v / q - r * quad / (q * q);
    const double t = std::tanh(raw(i));
    g(l.corr_raw + i) = dl_drho * params.rho_max() * (1.0 - t * t);
  }
  Vec x;
  if (n > 0) {
    x.resize(2 * d);
    x << prev_y, prev_y_prime;
  }
  scatter_mean_grad(g, l, d, 1, dm1, x, n > 0);
  scatter_mean_grad(g, l, d, 2, dm2, x, n > 0);
  return g;
}

Vec marginal_score(const CouplingParams& params, int n, const Vec& prev_y, const Vec& prev_y_prime,
                   const Vec& value, int which) {
  check_states(params, n, prev_y, prev_y_prime);
  if (which != 1 && which != 2) throw std::invalid_argument("coupling: marginal index must be 1 or 2");
  const int d = params.dim();
  if (value.size() != d) throw ShapeError("coupling: state has wrong dimension");
  check_finite(value, "state");
  const BlockLayout l = step_layout(d, n);
  Vec g = Vec::Zero(l.size);
  if (n == 0 && params.pinned_start()) return g;
  const StepKernel k = params.kernel(n, prev_y, prev_y_prime);
  const Vec& mean = which == 1 ? k.mean1 : k.mean2;
  const Vec& std = which == 1 ? k.std1 : k.std2;
  const int ls = which == 1 ? l.log_std1 : l.log_std2;
  Vec dm(d);
  for (int i = 0; i < d; ++i) {
    const double z = (value(i) - mean(i)) / std(i);
    dm(i) = z / std(i);
    g(ls + i) = z * z - 1.0;
  }
  Vec x;
  if (n > 0) {
    x.resize(2 * d);
    x << prev_y, prev_y_prime;
  }
  scatter_mean_grad(g, l, d, which, dm, x, n > 0);
  return g;
}

}  // namespace bcot
