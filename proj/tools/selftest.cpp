#include "selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "bcot/config.hpp"
#include "bcot/coupling.hpp"
#include "bcot/io.hpp"
#include "bcot/metrics.hpp"
#include "bcot/objective.hpp"
#include "bcot/oracle.hpp"
#include "bcot/pg_trainer.hpp"
#include "bcot/rng.hpp"
#include "bcot/transport.hpp"

namespace bcot {

namespace {

struct Check {
  std::string name;
  std::function<std::string()> body;  // empty string means pass
};

std::string fail_if(bool bad, const std::string& what) { return bad ? what : std::string(); }

CouplingParams random_params(int d, int N, std::uint64_t seed) {
  CouplingParams p(d, N);
  Rng rng = make_stream(seed, "selftest-theta");
  std::normal_distribution<double> z(0.0, 0.3);
  Vec t(p.size());
  for (int k = 0; k < p.size(); ++k) t[k] = z(rng);
  p.unflatten(t);
  return p;
}

std::string score_fd() {
  double worst = 0.0;
  for (int c = 0; c < 10; ++c) {
    const int d = 1 + c % 2, N = 2;
    CouplingParams p = random_params(d, N, 100 + c);
    const TrajectoryPair t = sample_pair(p, std::uint64_t(200 + c));
    const int n = 1 + c % N;
    const Vec py = t.y.row(n - 1).transpose(), pyp = t.y_prime.row(n - 1).transpose();
    const Vec y = t.y.row(n).transpose(), yp = t.y_prime.row(n).transpose();
    const Vec s = joint_score(p, n, py, pyp, y, yp);
    const int off = p.step_offset(n);
    for (int k = 0; k < s.size(); ++k) {
      const double h = 1e-6;
      CouplingParams a = p, b = p;
      a.mutable_theta()[off + k] += h;
      b.mutable_theta()[off + k] -= h;
      const double fd = (joint_logdensity(a, n, py, pyp, y, yp) - joint_logdensity(b, n, py, pyp, y, yp)) / (2 * h);
      worst = std::max(worst, std::abs(fd - s[k]) / std::max(1.0, std::abs(fd)));
    }
  }
  return fail_if(worst > 1e-5, "max relative error " + std::to_string(worst));
}

std::string kl_value() {
  const double kl = closed_form_gaussian_kl(Vec::Constant(1, 0.0), Vec::Constant(1, 1.0), Vec::Constant(1, 1.0),
                                            Vec::Constant(1, 1.0));
  return fail_if(std::abs(kl - 0.5) > 1e-14, "KL(N(0,1)||N(1,1)) = " + std::to_string(kl));
}

std::string dp_equals_lp() {
  double worst = 0.0;
  for (int k = 0; k < 12; ++k) {
    const DiscreteInstance inst = random_instance(1 + k % 3, 1 + (k / 3) % 2, 900 + k);
    worst = std::max(worst, std::abs(solve_dp(inst).value - solve_pathspace_lp(inst)));
  }
  return fail_if(worst > 1e-9, "max |DP - LP| = " + std::to_string(worst));
}

std::string ot_monotone() {
  Vec p(3), q(3);
  p << 0.2, 0.5, 0.3;
  q << 0.3, 0.3, 0.4;
  Mat c(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = (i - j) * (i - j);
  // monotone coupling: (0,0) .2, (1,0) .1, (1,1) .3, (1,2) .1, (2,2) .3
  const double want = 0.1 * 1 + 0.1 * 1;
  const double got = exact_discrete_ot(p, q, c).value;
  return fail_if(std::abs(got - want) > 1e-12, "OT value " + std::to_string(got));
}

std::string martingale_value() {
  const double v = martingale_subhedge_value(1, 5, 1.0, 2.0, 1.0, 0.5);
  return fail_if(std::abs(v - 8.75) > 1e-12, "value " + std::to_string(v));
}

std::string w2_ks_hand() {
  const double w = w2_squared_1d({0.0, 1.0}, {1.0, 2.0});
  const double ks = ks_1d({0.0, 1.0}, {0.5, 1.5});
  return fail_if(std::abs(w - 1.0) > 1e-14 || std::abs(ks - 0.5) > 1e-14,
                 "W2^2 " + std::to_string(w) + ", KS " + std::to_string(ks));
}

std::string csv_round_trip() {
  const Batch b = sample_coupling(random_params(2, 3, 7), 5, 11, "selftest");
  const std::string text = trajectories_to_csv(b);
  const Batch back = trajectories_from_csv(text);
  bool same = back.size() == b.size();
  for (std::size_t k = 0; same && k < b.size(); ++k) same = back[k].y == b[k].y && back[k].y_prime == b[k].y_prime;
  const bool sha_ok = git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391";
  return fail_if(!same || !sha_ok, same ? "empty blob hash mismatch" : "values differ after reading back");
}

std::string config_round_trip() {
  const ExperimentConfig a = parse_config("[run]\nexperiment = beta_sweep\nseed = 5\n[train]\nbeta = 10\n");
  const ExperimentConfig b = parse_config(a.to_ini());
  return fail_if(a.to_json() != b.to_json(), "to_ini does not parse back to the same config");
}

std::string permutation_floor() {
  Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 3, 3);
  SampleSet ref(simulate_pairs(*cfg.process(), *cfg.process_prime(), 40, 1, "a"));
  SampleSet gen(simulate_pairs(*cfg.process(), *cfg.process_prime(), 40, 2, "b"));
  const double p = permutation_test(ref, gen, CorrStatistic::TMax, 19, 4);
  const double same = permutation_test(ref, ref, CorrStatistic::T2, 19, 4);
  return fail_if(p < 1.0 / 20.0 || p > 1.0 || std::abs(same - 1.0) > 1e-15,
                 "p " + std::to_string(p) + ", identical sets " + std::to_string(same));
}

std::string unbiased_objective_at_exact() {
  ExperimentConfig cfg = parse_config("[run]\nexperiment = martingale_benchmark\n");
  const MartingaleConfig m = cfg.martingale();
  CouplingParams p = CouplingParams::identity_init_pinned(Vec::Constant(1, 1.0), Vec::Constant(1, 2.0), 5, 1.0);
  const ObjectiveReport r = evaluate_objective(p, cfg.cost, *m.process(), *m.process_prime(), 0.0, 20000, 3);
  // independent unit-variance increments: sum_n (1 + n * 2) = 35
  return fail_if(std::abs(r.j_val - 35.0) > 5 * r.j_val_se, "J_val " + std::to_string(r.j_val));
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<Check> checks = {
      {"score_matches_finite_differences", score_fd},
      {"closed_form_kl_value", kl_value},
      {"dp_equals_pathspace_lp", dp_equals_lp},
      {"transport_monotone_coupling", ot_monotone},
      {"martingale_closed_form", martingale_value},
      {"w2_ks_hand_cases", w2_ks_hand},
      {"trajectory_csv_round_trip", csv_round_trip},
      {"config_round_trip", config_round_trip},
      {"permutation_p_value_range", permutation_floor},
      {"objective_estimate_at_product_coupling", unbiased_objective_at_exact},
  };
  int failed = 0;
  char line[256];
  std::snprintf(line, sizeof(line), "%-42s %-6s %8s  %s\n", "check", "result", "ms", "detail");
  out << line;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    try {
      detail = c.body();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = detail.empty();
    failed += !ok;
    std::snprintf(line, sizeof(line), "%-42s %-6s %8.1f  %s\n", c.name.c_str(), ok ? "PASS" : "FAIL", ms,
                  detail.c_str());
    out << line;
  }
  out << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << "\n";
  return failed;
}

}  // namespace bcot
