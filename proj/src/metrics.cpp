#include "bcot/metrics.hpp"

#include "bcot/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "bcot/rng.hpp"
#include "json.hpp"

namespace bcot {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(const SampleSet& ref, const SampleSet& gen) {
  ref.validate();
  gen.validate();
  if (ref.count() == 0 || gen.count() == 0) throw std::invalid_argument("metrics: empty sample set");
  if (ref.horizon() != gen.horizon() || ref.dim() != gen.dim()) throw ShapeError("metrics: sample sets differ in shape");
}

std::vector<double> cell_values(const SampleSet& s, int n, int i, bool prime) {
  std::vector<double> out(s.trajectories.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    out[m] = prime ? s.trajectories[m].y_prime(n, i) : s.trajectories[m].y(n, i);
  }
  return out;
}

template <typename F>
double cell_average(const SampleSet& ref, const SampleSet& gen, F metric) {
  check_pair(ref, gen);
  const int N = ref.horizon(), d = ref.dim();
  std::vector<double> cells;
  cells.reserve(2 * (N + 1) * d);
  for (int n = 0; n <= N; ++n) {
    for (int i = 0; i < d; ++i) {
      cells.push_back(metric(cell_values(ref, n, i, false), cell_values(gen, n, i, false)));
      cells.push_back(metric(cell_values(ref, n, i, true), cell_values(gen, n, i, true)));
    }
  }
  return pairwise_sum(cells.data(), cells.size()) / static_cast<double>((N + 1) * d);
}

// Z_n = (Y_n, Y'_n) for every sample, as an M x 2d matrix.
Mat stacked_states(const Batch& b, const std::vector<int>& idx, int n) {
  const int d = b.front().dim();
  Mat z(idx.size(), 2 * d);
  for (std::size_t m = 0; m < idx.size(); ++m) {
    z.row(m).head(d) = b[idx[m]].y.row(n);
    z.row(m).tail(d) = b[idx[m]].y_prime.row(n);
  }
  return z;
}

std::vector<double> correlations_of(const Batch& b, const std::vector<int>& idx) {
  const int N = b.front().horizon();
  std::vector<double> rho(N, kNaN);
  Mat prev = stacked_states(b, idx, 0);
  prev.rowwise() -= prev.colwise().mean();
  for (int n = 1; n <= N; ++n) {
    Mat cur = stacked_states(b, idx, n);
    cur.rowwise() -= cur.colwise().mean();
    const double num = (cur.array() * prev.array()).sum();
    const double den = std::sqrt(cur.squaredNorm()) * std::sqrt(prev.squaredNorm());
    if (den > 0.0 && std::isfinite(den)) rho[n - 1] = num / den;
    prev = std::move(cur);
  }
  return rho;
}

AdjacentCorrStats corr_stats_from(const std::vector<double>& r_ref, const std::vector<double>& r_gen) {
  AdjacentCorrStats s;
  s.delta.resize(r_ref.size());
  for (std::size_t n = 0; n < r_ref.size(); ++n) {
    if (std::isnan(r_ref[n]) || std::isnan(r_gen[n])) {
      s.delta[n] = kNaN;
      ++s.excluded;
      continue;
    }
    s.delta[n] = r_gen[n] - r_ref[n];
    s.t_max = std::max(s.t_max, std::abs(s.delta[n]));
    s.t_2 += s.delta[n] * s.delta[n];
  }
  return s;
}

nlohmann::json opt(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::string csv_opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace

SampleSet::SampleSet(Batch t, std::string src) : trajectories(std::move(t)), source(std::move(src)) {}

void SampleSet::validate() const {
  if (trajectories.empty()) return;
  const int N = horizon(), d = dim();
  for (const auto& t : trajectories) validate_trajectory(t, d, N);
}

double cost_avg(const SampleSet& gen) {
  gen.validate();
  if (gen.count() == 0) throw std::invalid_argument("cost_avg: empty sample set");
  std::vector<double> per(gen.trajectories.size());
  for (std::size_t m = 0; m < per.size(); ++m) {
    per[m] = (gen.trajectories[m].y - gen.trajectories[m].y_prime).squaredNorm();
  }
  return pairwise_sum(per.data(), per.size()) /
         (static_cast<double>(gen.count()) * (gen.horizon() + 1) * gen.dim());
}

double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w2: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t m = a.size(), n = b.size();
  if (m == n) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s / static_cast<double>(m);
  }
  // Integrate (F_a^{-1}(t) - F_b^{-1}(t))^2 over the merged quantile breakpoints
  // k/m and l/n, compared as integers k*n vs l*m to stay exact.
  double total = 0.0;
  std::size_t k = 0, l = 0;
  std::uint64_t pos = 0;  // current breakpoint times m*n
  const std::uint64_t end = static_cast<std::uint64_t>(m) * n;
  while (pos < end) {
    const std::uint64_t next_a = static_cast<std::uint64_t>(k + 1) * n;
    const std::uint64_t next_b = static_cast<std::uint64_t>(l + 1) * m;
    const std::uint64_t next = std::min(next_a, next_b);
    const double gap = a[k] - b[l];
    total += gap * gap * static_cast<double>(next - pos);
    pos = next;
    if (next_a == next) ++k;
    if (next_b == next) ++l;
  }
  return total / static_cast<double>(end);
}

double ks_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      v = a[i];
    } else {
      v = b[j];
    }
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n));
  }
  return best;
}

double w2_avg(const SampleSet& ref, const SampleSet& gen) { return cell_average(ref, gen, w2_squared_1d); }

double ks_avg(const SampleSet& ref, const SampleSet& gen) { return cell_average(ref, gen, ks_1d); }

Vec stack_pair(const TrajectoryPair& t) {
  const int rows = static_cast<int>(t.y.rows()), d = t.dim();
  Vec z(2 * rows * d);
  for (int n = 0; n < rows; ++n) {
    z.segment(n * d, d) = t.y.row(n).transpose();
    z.segment((rows + n) * d, d) = t.y_prime.row(n).transpose();
  }
  return z;
}

double sliced_wasserstein(const SampleSet& ref, const SampleSet& gen, int projections, std::uint64_t seed) {
  check_pair(ref, gen);
  if (projections < 1) throw std::invalid_argument("sliced_wasserstein: need at least one projection");
  const int p = 2 * (ref.horizon() + 1) * ref.dim();
  Mat zr(ref.count(), p), zg(gen.count(), p);
  for (int m = 0; m < ref.count(); ++m) zr.row(m) = stack_pair(ref.trajectories[m]).transpose();
  for (int m = 0; m < gen.count(); ++m) zg.row(m) = stack_pair(gen.trajectories[m]).transpose();
  std::vector<double> per(projections);
  parallel_for(projections, [&](int l) {
    Rng rng = make_stream(seed, "swd-direction", static_cast<std::uint64_t>(l));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec alpha(p);
    for (int k = 0; k < p; ++k) alpha(k) = normal(rng);
    alpha /= alpha.norm();
    const Vec a = zr * alpha, b = zg * alpha;
    per[l] = w2_squared_1d(std::vector<double>(a.data(), a.data() + a.size()),
                           std::vector<double>(b.data(), b.data() + b.size()));
  });
  return pairwise_sum(per.data(), per.size()) / projections;
}

double median_heuristic_bandwidth(const SampleSet& ref, const SampleSet& gen) {
  check_pair(ref, gen);
  // Up to 2000 points per set, taken at even strides, keep the pair count manageable.
  auto take = [](const SampleSet& s) {
    const int cap = 2000;
    const int stride = std::max(1, (s.count() + cap - 1) / cap);
    std::vector<Vec> pts;
    for (int m = 0; m < s.count(); m += stride) pts.push_back(stack_pair(s.trajectories[m]));
    return pts;
  };
  std::vector<Vec> pts = take(ref);
  const std::vector<Vec> g = take(gen);
  pts.insert(pts.end(), g.begin(), g.end());
  std::vector<double> dist;
  dist.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) dist.push_back((pts[i] - pts[j]).norm());
  if (dist.empty()) return 1.0;
  const auto mid = dist.begin() + dist.size() / 2;
  std::nth_element(dist.begin(), mid, dist.end());
  const double h = *mid;
  return h > 0.0 ? h : 1.0;
}

double mmd2(const SampleSet& ref, const SampleSet& gen, double bandwidth) {
  check_pair(ref, gen);
  if (ref.count() != gen.count()) throw std::invalid_argument("mmd2: sample counts must be equal");
  const double h = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(ref, gen);
  const int M = ref.count();
  const int p = 2 * (ref.horizon() + 1) * ref.dim();
  Mat zr(M, p), zg(M, p);
  for (int m = 0; m < M; ++m) {
    zr.row(m) = stack_pair(ref.trajectories[m]).transpose();
    zg.row(m) = stack_pair(gen.trajectories[m]).transpose();
  }
  const double inv = 1.0 / (2.0 * h * h);
  std::vector<double> rows(M);
  parallel_for(M, [&](int a) {
    double s = 0.0;
    for (int b = 0; b < M; ++b) {
      s += std::exp(-(zr.row(a) - zr.row(b)).squaredNorm() * inv) +
           std::exp(-(zg.row(a) - zg.row(b)).squaredNorm() * inv) -
           2.0 * std::exp(-(zr.row(a) - zg.row(b)).squaredNorm() * inv);
    }
    rows[a] = s;
  });
  return pairwise_sum(rows.data(), rows.size()) / (static_cast<double>(M) * M);
}

std::vector<double> adjacent_correlations(const SampleSet& s) {
  s.validate();
  if (s.count() < 3) throw std::invalid_argument("adjacent_correlations: need at least 3 samples");
  std::vector<int> idx(s.count());
  std::iota(idx.begin(), idx.end(), 0);
  return correlations_of(s.trajectories, idx);
}

AdjacentCorrStats adjacent_corr_stats(const SampleSet& ref, const SampleSet& gen) {
  check_pair(ref, gen);
  return corr_stats_from(adjacent_correlations(ref), adjacent_correlations(gen));
}

double permutation_test(const SampleSet& ref, const SampleSet& gen, CorrStatistic stat, int permutations,
                        std::uint64_t seed) {
  check_pair(ref, gen);
  if (permutations < 19) throw std::invalid_argument("permutation_test: need at least 19 permutations");
  if (ref.count() < 3 || gen.count() < 3) throw std::invalid_argument("permutation_test: need at least 3 samples per group");
  const int Mr = ref.count(), Mg = gen.count();

  // Canonical order of the pooled multiset, so the result does not depend on
  // how either set happens to be ordered.
  Batch pool;
  pool.reserve(Mr + Mg);
  pool.insert(pool.end(), ref.trajectories.begin(), ref.trajectories.end());
  pool.insert(pool.end(), gen.trajectories.begin(), gen.trajectories.end());
  std::vector<Vec> keys(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) keys[k] = stack_pair(pool[k]);
  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::lexicographical_compare(keys[a].data(), keys[a].data() + keys[a].size(), keys[b].data(),
                                        keys[b].data() + keys[b].size());
  });
  Batch sorted(pool.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = pool[order[k]];

  auto statistic = [&](const std::vector<int>& r, const std::vector<int>& g) {
    const AdjacentCorrStats s = corr_stats_from(correlations_of(sorted, r), correlations_of(sorted, g));
    return stat == CorrStatistic::TMax ? s.t_max : s.t_2;
  };
  std::vector<int> obs_r, obs_g;
  for (std::size_t k = 0; k < order.size(); ++k) (order[k] < Mr ? obs_r : obs_g).push_back(static_cast<int>(k));
  const double t_obs = statistic(obs_r, obs_g);
  const double tie = 1e-12 * std::max(1.0, std::abs(t_obs));

  std::vector<char> hit(permutations, 0);
  parallel_for(permutations, [&](int l) {
    Rng rng = make_stream(seed, "perm", static_cast<std::uint64_t>(l));
    std::vector<int> idx(Mr + Mg);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::vector<int> r(idx.begin(), idx.begin() + Mr), g(idx.begin() + Mr, idx.end());
    hit[l] = statistic(r, g) >= t_obs - tie ? 1 : 0;
  });
  const int count = std::accumulate(hit.begin(), hit.end(), 0);
  return (1.0 + count) / (permutations + 1.0);
}

SubhedgeEstimate subhedge_price_and_re(const SampleSet& gen, double true_value) {
  gen.validate();
  if (gen.count() == 0) throw std::invalid_argument("subhedge_price_and_re: empty sample set");
  std::vector<double> per(gen.trajectories.size());
  for (std::size_t m = 0; m < per.size(); ++m) {
    const auto& t = gen.trajectories[m];
    const int N = t.horizon();
    per[m] = (t.y.bottomRows(N) - t.y_prime.bottomRows(N)).squaredNorm();
  }
  const MeanSe ms = mean_and_se(per);
  SubhedgeEstimate out{ms.mean, ms.se, 0.0};
  if (true_value == 0.0) {
    if (ms.mean != 0.0) throw std::domain_error("relative error undefined: true value is 0 but p_hat is not");
    out.rel_err = 0.0;
  } else {
    out.rel_err = std::abs(ms.mean - true_value) / std::abs(true_value);
  }
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["cost_avg"] = opt(cost_avg);
  j["w2_avg"] = opt(w2_avg);
  j["ks_avg"] = opt(ks_avg);
  j["swd"] = opt(swd);
  j["mmd2"] = opt(mmd2);
  j["t_max"] = opt(t_max);
  j["p_t_max"] = opt(p_t_max);
  j["t_2"] = opt(t_2);
  j["p_t_2"] = opt(p_t_2);
  j["p_hat"] = opt(p_hat);
  j["rel_err"] = opt(rel_err);
  j["settings"] = {{"projections", projections}, {"bandwidth", bandwidth}, {"permutations", permutations},
                   {"seed", seed}};
  return j.dump(2);
}

std::string MetricReport::csv_header() {
  return "cost_avg,w2_avg,ks_avg,swd,mmd2,t_max,p_t_max,t_2,p_t_2,p_hat,rel_err,projections,bandwidth,permutations,seed";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << csv_opt(cost_avg) << ',' << csv_opt(w2_avg) << ',' << csv_opt(ks_avg) << ',' << csv_opt(swd) << ','
     << csv_opt(mmd2) << ',' << csv_opt(t_max) << ',' << csv_opt(p_t_max) << ',' << csv_opt(t_2) << ','
     << csv_opt(p_t_2) << ',' << csv_opt(p_hat) << ',' << csv_opt(rel_err) << ',' << projections << ','
     << bandwidth << ',' << permutations << ',' << seed;
  return os.str();
}

MetricReport evaluate_metrics(const SampleSet& ref, const SampleSet& gen, const MetricSettings& settings) {
  check_pair(ref, gen);
  MetricReport r;
  r.projections = settings.projections;
  r.permutations = settings.permutations;
  r.seed = settings.seed;
  r.cost_avg = cost_avg(gen);
  if (settings.distances) {
    r.w2_avg = w2_avg(ref, gen);
    r.ks_avg = ks_avg(ref, gen);
    r.swd = sliced_wasserstein(ref, gen, settings.projections, settings.seed);
    if (ref.count() == gen.count()) {
      r.bandwidth = settings.bandwidth > 0.0 ? settings.bandwidth : median_heuristic_bandwidth(ref, gen);
      r.mmd2 = mmd2(ref, gen, r.bandwidth);
    }
  }
  if (settings.correlation_tests && ref.count() >= 3 && gen.count() >= 3) {
    const AdjacentCorrStats s = adjacent_corr_stats(ref, gen);
    r.t_max = s.t_max;
    r.t_2 = s.t_2;
    r.p_t_max = permutation_test(ref, gen, CorrStatistic::TMax, settings.permutations, settings.seed);
    r.p_t_2 = permutation_test(ref, gen, CorrStatistic::T2, settings.permutations, settings.seed);
  }
  if (settings.true_value) {
    const SubhedgeEstimate e = subhedge_price_and_re(gen, *settings.true_value);
    r.p_hat = e.p_hat;
    r.rel_err = e.rel_err;
  }
  return r;
}

}  // namespace bcot
