#include "bcot/oracle.hpp"

#include "bcot/parallel.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "bcot/rng.hpp"
#include "bcot/simplex.hpp"
#include "json.hpp"

namespace bcot {

namespace {

void check_prob(const Vec& p, const std::string& what) {
  if (p.size() == 0) throw std::invalid_argument(what + " is empty");
  if ((p.array() < 0.0).any() || !p.allFinite()) throw std::invalid_argument(what + " has negative or non-finite mass");
  if (std::abs(p.sum() - 1.0) > 1e-12) throw std::invalid_argument(what + " does not sum to 1");
}

void check_kernel(const Mat& t, int rows, int cols, const std::string& what) {
  if (t.rows() != rows || t.cols() != cols) throw std::invalid_argument(what + " has the wrong shape");
  for (int r = 0; r < rows; ++r) check_prob(t.row(r).transpose(), what + " row " + std::to_string(r));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Mat gaussian_cells(const Vec& from, const Vec& to, double sigma) {
  const int S = static_cast<int>(to.size());
  Mat t(from.size(), S);
  for (int a = 0; a < from.size(); ++a) {
    double prev = 0.0;
    for (int k = 0; k < S; ++k) {
      const double upper = k == S - 1 ? 1.0 : normal_cdf((0.5 * (to(k) + to(k + 1)) - from(a)) / sigma);
      t(a, k) = std::max(0.0, upper - prev);
      prev = std::max(prev, upper);
    }
    t.row(a) /= t.row(a).sum();
  }
  return t;
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    const Vec row = m.row(r).transpose();
    rows.push_back(vec_json(row));
  }
  return rows;
}

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat json_mat(const nlohmann::json& j) {
  if (j.empty()) return Mat();
  Mat m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != static_cast<std::size_t>(m.cols())) throw std::invalid_argument("instance JSON: ragged matrix");
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

void DiscreteInstance::validate() const {
  if (horizon < 1) throw std::invalid_argument("instance: horizon must be >= 1");
  const std::size_t steps = static_cast<std::size_t>(horizon) + 1;
  if (grid.size() != steps || grid_prime.size() != steps || trans.size() != steps || trans_prime.size() != steps ||
      cost.size() != steps) {
    throw std::invalid_argument("instance: per-step lists must have horizon + 1 entries");
  }
  if (init_mu.size() != size(0) || init_mu_prime.size() != size_prime(0)) {
    throw std::invalid_argument("instance: initial laws do not match the step-0 grids");
  }
  check_prob(init_mu, "instance: init_mu");
  check_prob(init_mu_prime, "instance: init_mu_prime");
  for (int n = 0; n <= horizon; ++n) {
    if (size(n) < 1 || size_prime(n) < 1) throw std::invalid_argument("instance: empty grid");
    if (cost[n].rows() != size(n) || cost[n].cols() != size_prime(n)) {
      throw std::invalid_argument("instance: cost " + std::to_string(n) + " has the wrong shape");
    }
    if ((cost[n].array() < 0.0).any() || !cost[n].allFinite()) {
      throw std::invalid_argument("instance: costs must be finite and nonnegative");
    }
    if (n >= 1) {
      check_kernel(trans[n], size(n - 1), size(n), "instance: trans " + std::to_string(n));
      check_kernel(trans_prime[n], size_prime(n - 1), size_prime(n), "instance: trans_prime " + std::to_string(n));
    }
  }
}

std::string DiscreteInstance::to_json() const {
  nlohmann::json j;
  j["horizon"] = horizon;
  j["init_mu"] = vec_json(init_mu);
  j["init_mu_prime"] = vec_json(init_mu_prime);
  for (int n = 0; n <= horizon; ++n) {
    j["grid"].push_back(vec_json(grid[n]));
    j["grid_prime"].push_back(vec_json(grid_prime[n]));
    j["trans"].push_back(mat_json(trans[n]));
    j["trans_prime"].push_back(mat_json(trans_prime[n]));
    j["cost"].push_back(mat_json(cost[n]));
  }
  return j.dump();
}

DiscreteInstance DiscreteInstance::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DiscreteInstance inst;
  inst.horizon = j.at("horizon").get<int>();
  inst.init_mu = json_vec(j.at("init_mu"));
  inst.init_mu_prime = json_vec(j.at("init_mu_prime"));
  for (const auto& g : j.at("grid")) inst.grid.push_back(json_vec(g));
  for (const auto& g : j.at("grid_prime")) inst.grid_prime.push_back(json_vec(g));
  for (const auto& m : j.at("trans")) inst.trans.push_back(json_mat(m));
  for (const auto& m : j.at("trans_prime")) inst.trans_prime.push_back(json_mat(m));
  for (const auto& m : j.at("cost")) inst.cost.push_back(json_mat(m));
  inst.validate();
  return inst;
}

DpResult solve_dp(const DiscreteInstance& inst, bool keep_plans) {
  inst.validate();
  const int N = inst.horizon;
  DpResult out;
  out.table.value.assign(N + 1, Mat());
  if (keep_plans) out.table.plans.assign(N, {});
  out.table.value[N] = inst.cost[N];
  for (int n = N - 1; n >= 0; --n) {
    const int S = inst.size(n), Sp = inst.size_prime(n);
    const Mat& next = out.table.value[n + 1];
    Mat v(S, Sp);
    std::vector<std::vector<PlanEntry>> plans(keep_plans ? S * Sp : 0);
    parallel_for(
        S * Sp,
        [&](int cell) {
          const int x = cell / Sp, xp = cell % Sp;
          OtResult ot = exact_discrete_ot(inst.trans[n + 1].row(x).transpose(),
                                          inst.trans_prime[n + 1].row(xp).transpose(), next);
          v(x, xp) = inst.cost[n](x, xp) + ot.value;
          if (keep_plans) plans[cell] = std::move(ot.plan);
        },
        true);
    out.table.value[n] = std::move(v);
    if (keep_plans) out.table.plans[n] = std::move(plans);
  }
  OtResult top = exact_discrete_ot(inst.init_mu, inst.init_mu_prime, out.table.value[0]);
  out.value = top.value;
  if (keep_plans) out.table.initial_plan = std::move(top.plan);
  return out;
}

double solve_pathspace_lp(const DiscreteInstance& inst, long max_paths) {
  inst.validate();
  const int N = inst.horizon;
  // Pair state z_n = x_n * S'_n + x'_n; path index is mixed radix with step 0 most significant.
  std::vector<long> pair_size(N + 1), stride(N + 1);
  long total = 1;
  for (int n = 0; n <= N; ++n) {
    pair_size[n] = static_cast<long>(inst.size(n)) * inst.size_prime(n);
    if (total > max_paths / pair_size[n]) throw std::invalid_argument("solve_pathspace_lp: instance too large");
    total *= pair_size[n];
  }
  stride[N] = 1;
  for (int n = N - 1; n >= 0; --n) stride[n] = stride[n + 1] * pair_size[n + 1];

  auto state_of = [&](long path, int n) { return (path / stride[n]) % pair_size[n]; };

  long rows = inst.size(0) + inst.size_prime(0);
  for (int n = 1; n <= N; ++n) {
    const long histories = total / (stride[n - 1]);  // number of prefixes z_0..z_{n-1}
    rows += histories * ((inst.size(n) - 1) + (inst.size_prime(n) - 1));
  }
  if (static_cast<double>(rows) * static_cast<double>(total) > 5e7) {
    throw std::invalid_argument("solve_pathspace_lp: dense constraint matrix too large");
  }

  Mat A = Mat::Zero(rows, total);
  Vec b = Vec::Zero(rows);
  Vec c(total);
  for (long p = 0; p < total; ++p) {
    double cost = 0.0;
    for (int n = 0; n <= N; ++n) {
      const long z = state_of(p, n);
      cost += inst.cost[n](z / inst.size_prime(n), z % inst.size_prime(n));
    }
    c(p) = cost;
  }

  long r = 0;
  const int Sp0 = inst.size_prime(0);
  for (int a = 0; a < inst.size(0); ++a, ++r) {
    for (long p = 0; p < total; ++p)
      if (state_of(p, 0) / Sp0 == a) A(r, p) = 1.0;
    b(r) = inst.init_mu(a);
  }
  for (int a = 0; a < Sp0; ++a, ++r) {
    for (long p = 0; p < total; ++p)
      if (state_of(p, 0) % Sp0 == a) A(r, p) = 1.0;
    b(r) = inst.init_mu_prime(a);
  }

  // For a prefix h = (z_0..z_{n-1}) and state a at step n:
  //   P(h, x_n = a) - T_n(x_{n-1}, a) P(h) = 0, and the same for the second chain.
  // The last state of each chain is implied by the others and skipped.
  for (int n = 1; n <= N; ++n) {
    const long histories = total / stride[n - 1];
    const int S = inst.size(n), Sp = inst.size_prime(n);
    const int Sprev = inst.size_prime(n - 1);
    const long base = r;
    const long per_history = (S - 1) + (Sp - 1);
    for (long p = 0; p < total; ++p) {
      const long h = p / stride[n - 1];
      const long zprev = state_of(p, n - 1);
      const int xprev = static_cast<int>(zprev / Sprev), xpprev = static_cast<int>(zprev % Sprev);
      const long z = state_of(p, n);
      const int x = static_cast<int>(z / Sp), xp = static_cast<int>(z % Sp);
      const long row0 = base + h * per_history;
      for (int a = 0; a < S - 1; ++a) A(row0 + a, p) += (x == a ? 1.0 : 0.0) - inst.trans[n](xprev, a);
      for (int a = 0; a < Sp - 1; ++a) {
        A(row0 + (S - 1) + a, p) += (xp == a ? 1.0 : 0.0) - inst.trans_prime[n](xpprev, a);
      }
    }
    r += histories * per_history;
  }

  const LpResult res = solve_standard_lp(A, b, c);
  if (res.status != LpStatus::Optimal) throw std::runtime_error("solve_pathspace_lp: LP did not reach an optimum");
  return res.value;
}

double martingale_subhedge_value(int d_pairs, int horizon, double y0, double y0_prime, double sigma,
                                 double sigma_prime) {
  if (d_pairs < 1 || horizon < 1) throw std::invalid_argument("martingale value: d_pairs and horizon must be >= 1");
  if (!(sigma > 0.0) || !(sigma_prime > 0.0)) throw std::invalid_argument("martingale value: scales must be positive");
  const double gap = (y0 - y0_prime) * (y0 - y0_prime);
  const double ds = (sigma - sigma_prime) * (sigma - sigma_prime);
  double total = 0.0;
  for (int n = 1; n <= horizon; ++n) total += gap + n * ds;
  return d_pairs * total;
}

DiscreteInstance discretize_gaussian_martingale(int horizon, double y0, double y0_prime, double sigma,
                                                double sigma_prime, int grid_size, double width_in_sds) {
  if (grid_size < 3) throw std::invalid_argument("discretization: grid size must be >= 3");
  if (horizon < 1) throw std::invalid_argument("discretization: horizon must be >= 1");
  if (!(sigma > 0.0) || !(sigma_prime > 0.0) || !(width_in_sds > 0.0)) {
    throw std::invalid_argument("discretization: scales and width must be positive");
  }
  DiscreteInstance inst;
  inst.horizon = horizon;
  auto make_grid = [&](double start, double s, int n) {
    if (n == 0) return Vec(Vec::Constant(1, start));
    const double half = width_in_sds * s * std::sqrt(static_cast<double>(n));
    return Vec(Vec::LinSpaced(grid_size, start - half, start + half));
  };
  for (int n = 0; n <= horizon; ++n) {
    inst.grid.push_back(make_grid(y0, sigma, n));
    inst.grid_prime.push_back(make_grid(y0_prime, sigma_prime, n));
  }
  inst.init_mu = Vec::Ones(1);
  inst.init_mu_prime = Vec::Ones(1);
  inst.trans.push_back(Mat());
  inst.trans_prime.push_back(Mat());
  for (int n = 1; n <= horizon; ++n) {
    inst.trans.push_back(gaussian_cells(inst.grid[n - 1], inst.grid[n], sigma));
    inst.trans_prime.push_back(gaussian_cells(inst.grid_prime[n - 1], inst.grid_prime[n], sigma_prime));
  }
  for (int n = 0; n <= horizon; ++n) {
    Mat c(inst.grid[n].size(), inst.grid_prime[n].size());
    for (int a = 0; a < c.rows(); ++a)
      for (int b = 0; b < c.cols(); ++b) {
        const double g = inst.grid[n](a) - inst.grid_prime[n](b);
        c(a, b) = n == 0 ? 0.0 : g * g;
      }
    inst.cost.push_back(c);
  }
  return inst;
}

DiscreteInstance random_instance(int states, int horizon, std::uint64_t seed) {
  if (states < 1 || horizon < 1) throw std::invalid_argument("random_instance: states and horizon must be >= 1");
  Rng rng = make_stream(seed, "random-instance");
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto simplex_point = [&]() {
    Vec p(states);
    for (int a = 0; a < states; ++a) p(a) = unif(rng) < 0.2 ? 0.0 : expo(rng);
    if (p.sum() <= 0.0) p(static_cast<int>(unif(rng) * states) % states) = 1.0;
    p /= p.sum();
    return p;
  };
  DiscreteInstance inst;
  inst.horizon = horizon;
  inst.init_mu = simplex_point();
  inst.init_mu_prime = simplex_point();
  for (int n = 0; n <= horizon; ++n) {
    inst.grid.push_back(Vec::LinSpaced(states, 0.0, states - 1.0));
    inst.grid_prime.push_back(Vec::LinSpaced(states, 0.0, states - 1.0));
    Mat t(states, states), tp(states, states), c(states, states);
    for (int a = 0; a < states; ++a) {
      t.row(a) = simplex_point().transpose();
      tp.row(a) = simplex_point().transpose();
      for (int b = 0; b < states; ++b) c(a, b) = unif(rng);
    }
    inst.trans.push_back(n == 0 ? Mat() : t);
    inst.trans_prime.push_back(n == 0 ? Mat() : tp);
    inst.cost.push_back(c);
  }
  return inst;
}

}  // namespace bcot
