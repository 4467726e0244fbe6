// Acceptance battery: one line per criterion, exit 1 when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bcot/config.hpp"
#include "bcot/experiments.hpp"
#include "bcot/oracle.hpp"
#include "bcot/pg_trainer.hpp"
#include "test_util.hpp"

using namespace bcot;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Summary run_config(const std::string& text, const std::string& out) {
  fs::remove_all(out);
  return run_experiment(parse_config(text), out);
}

Outcome a1(const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Summary s = run_config(
      "[run]\nexperiment = martingale_benchmark\nseed = 1\n[process]\nd_pairs = 1\nhorizon = 5\n"
      "[train]\nbeta = 50\nbatch_size = 256\nrounds = 2000\n[eval]\nsamples = 10000\ndistances = false\n",
      out);
  const double secs = seconds_since(t0);
  return {s.at("re") <= 0.01 && secs <= 300.0,
          fmt("p_hat=%.4f true=%.4f re=%.4f (need <= 0.01) runtime=%.0fs (need <= 300s) j_beta=%.4f "
              "j_beta_synchronous=%.4f",
              s.at("p_hat"), s.at("true_value"), s.at("re"), secs, s.at("j_beta"), s.at("j_beta_synchronous"))};
}

Outcome a2(const std::string& out) {
  const Summary s = run_config(
      "[run]\nexperiment = beta_sweep\nseed = 1\n[sweep]\nbetas = 10, 50, 100, 500, 1000\nseeds = 5\n"
      "[eval]\nsamples = 10000\n",
      out);
  bool pass = s.at("re_beta_10") > 0.01;
  std::string detail = fmt("median re: beta=10 %.4f (need > 0.01)", s.at("re_beta_10"));
  for (const char* b : {"50", "100", "500", "1000"}) {
    const double re = s.at(std::string("re_beta_") + b);
    pass = pass && re < 0.01;
    detail += fmt(", beta=%s %.4f", b, re);
  }
  return {pass, detail + " (need < 0.01)"};
}

Outcome a3(const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Summary s = run_config(
      "[run]\nexperiment = multi_asset\nseed = 1\n[sweep]\nd_pairs = 2, 3, 4, 5\n[eval]\nsamples = 10000\n", out);
  const double secs = seconds_since(t0);
  std::string detail;
  for (int d = 2; d <= 5; ++d) detail += fmt("re_d%d=%.4f ", d, s.at("re_d_" + std::to_string(d)));
  return {s.at("max_re") <= 0.05 && secs <= 1200.0,
          detail + fmt("(need <= 0.05) runtime=%.0fs (need <= 1200s)", secs)};
}

Outcome a4() {
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const DiscreteInstance inst = random_instance(2 + k % 2, 1 + (k / 2) % 2, 4000 + k);
    worst = std::max(worst, std::abs(solve_dp(inst).value - solve_pathspace_lp(inst)));
  }
  return {worst <= 1e-9, fmt("max |dp - lp| over 50 instances = %.2e (need <= 1e-9)", worst)};
}

Outcome a5(const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Summary s = run_config("[run]\nexperiment = oracle_grid_study\nseed = 1\n", out);
  const double secs = seconds_since(t0);
  return {s.at("re_S64") <= 0.02 && s.at("monotone") == 1.0 && secs <= 120.0,
          fmt("re S8=%.4f S16=%.4f S32=%.4f S64=%.4f (need <= 0.02, monotone=%g) runtime=%.1fs", s.at("re_S8"),
              s.at("re_S16"), s.at("re_S32"), s.at("re_S64"), s.at("monotone"), secs)};
}

// Worst relative error of central differences against the analytic scores.
double score_fd_error() {
  Rng rng = make_stream(11, "accept-fd");
  const double h = 1e-5;
  double worst = 0.0;
  const Vec none;
  for (int c = 0; c < 100; ++c) {
    const int d = 1 + c % 3, N = 1 + c % 3, n = c % (N + 1);
    const CouplingParams p = test_util::random_params(d, N, 500 + c, 0.4);
    const Vec py = n > 0 ? test_util::random_vec(d, rng) : none;
    const Vec pyp = n > 0 ? test_util::random_vec(d, rng) : none;
    const Vec y = test_util::random_vec(d, rng), yp = test_util::random_vec(d, rng);
    const Vec sj = joint_score(p, n, py, pyp, y, yp);
    const Vec s1 = marginal_score(p, n, py, pyp, y, 1);
    const Vec s2 = marginal_score(p, n, py, pyp, yp, 2);
    const int off = p.step_offset(n);
    for (int k = 0; k < p.step_size(n); ++k) {
      CouplingParams a = p, b = p;
      a.mutable_theta()[off + k] += h;
      b.mutable_theta()[off + k] -= h;
      const double fj = (joint_logdensity(a, n, py, pyp, y, yp) - joint_logdensity(b, n, py, pyp, y, yp)) / (2 * h);
      const double f1 = (marginal_logdensity(a, n, py, pyp, y, 1) - marginal_logdensity(b, n, py, pyp, y, 1)) / (2 * h);
      const double f2 =
          (marginal_logdensity(a, n, py, pyp, yp, 2) - marginal_logdensity(b, n, py, pyp, yp, 2)) / (2 * h);
      worst = std::max(worst, std::abs(fj - sj[k]) / std::max(1.0, std::abs(sj[k])));
      worst = std::max(worst, std::abs(f1 - s1[k]) / std::max(1.0, std::abs(s1[k])));
      worst = std::max(worst, std::abs(f2 - s2[k]) / std::max(1.0, std::abs(s2[k])));
    }
  }
  return worst;
}

Outcome a6() {
  const auto t0 = std::chrono::steady_clock::now();
  const double fd_err = score_fd_error();

  // Gaussian AR(1), d = 2, N = 2, fixed random theta, random unit direction u.
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(2, 2, 3);
  const auto ref = cfg.process();
  const auto refp = cfg.process_prime();
  const CouplingParams p = test_util::random_params(2, 2, 31, 0.2);
  const double beta = 50.0;
  const CostSpec cost;
  Rng rng = make_stream(12, "accept-direction");
  Vec u = test_util::random_vec(p.size(), rng);
  u.normalize();

  // Common-random-number central difference of J_val + beta J_KL along u,
  // one value per path so its own standard error is available.
  const double h = 1e-4;
  CouplingParams plus = p, minus = p;
  plus.mutable_theta() += h * u;
  minus.mutable_theta() -= h * u;
  const int M = 400000;
  const auto noise = test_util::noise_arrays(2, 2, M, 13);
  std::vector<double> dval(M);
  for (int m = 0; m < M; ++m) {
    dval[m] = (path_cost(cost, sample_pair_from_noise(plus, noise[m])) -
               path_cost(cost, sample_pair_from_noise(minus, noise[m]))) /
              (2 * h);
  }
  const Batch refs = simulate_pairs(*ref, *refp, M, 14, "accept-fd-ref");
  std::vector<double> dkl(M);
  for (int m = 0; m < M; ++m) {
    const Batch one{refs[m]};
    dkl[m] = beta *
             (estimate_j_kl(plus, *ref, *refp, one, KlMethod::ClosedForm).mean -
              estimate_j_kl(minus, *ref, *refp, one, KlMethod::ClosedForm).mean) /
             (2 * h);
  }
  const MeanSe fv = mean_and_se(dval), fk = mean_and_se(dkl);
  const double fd = fv.mean + fk.mean;
  const double fd_se = std::hypot(fv.se, fk.se);

  std::vector<double> proj(500);
  for (int r = 0; r < 500; ++r) {
    const RoundBatches rb = draw_round_batches(p, *ref, *refp, 256, 20000 + r, 1);
    proj[r] = u.dot(estimate_gradient(p, cost, beta, BaselineFeatures::LinearInState, rb.gen, rb.aux, rb.ref).g);
  }
  const MeanSe g = mean_and_se(proj);
  const double se = std::hypot(g.se, fd_se);
  const double z = std::abs(g.mean - fd) / se;
  return {fd_err <= 1e-5 && z <= 4.0,
          fmt("score fd max rel err=%.2e (need <= 1e-5); u.g mean=%.4f u.grad(fd)=%.4f combined se=%.4f |z|=%.2f "
              "(need <= 4) runtime=%.0fs",
              fd_err, g.mean, fd, se, z, seconds_since(t0))};
}

Outcome a7() {
  const ExperimentConfig cfg = parse_config("[run]\nexperiment = martingale_benchmark\nseed = 1\n");
  const ReferenceLaws laws = reference_laws(cfg);
  const CouplingParams p = initial_coupling(cfg);
  const int R = 500;
  std::vector<Vec> with(R), without(R);
  for (int r = 0; r < R; ++r) {
    const RoundBatches rb = draw_round_batches(p, *laws.law, *laws.law_prime, 256, 30000 + r, 1);
    with[r] = estimate_gradient(p, cfg.cost, 50.0, BaselineFeatures::LinearInState, rb.gen, rb.aux, rb.ref).g;
    without[r] = estimate_gradient(p, cfg.cost, 50.0, BaselineFeatures::None, rb.gen, {}, rb.ref).g;
  }
  Vec mw = Vec::Zero(p.size()), mo = Vec::Zero(p.size());
  for (int r = 0; r < R; ++r) mw += with[r] / R, mo += without[r] / R;
  // Paired per-replication squared deviations; their means are the two traces.
  std::vector<double> diff(R);
  double tw = 0, to = 0;
  for (int r = 0; r < R; ++r) {
    const double a = (with[r] - mw).squaredNorm() * R / (R - 1.0);
    const double b = (without[r] - mo).squaredNorm() * R / (R - 1.0);
    tw += a / R;
    to += b / R;
    diff[r] = b - a;
  }
  const MeanSe d = mean_and_se(diff);
  const double lower = d.mean - 1.6449 * d.se;
  return {lower > 0.0, fmt("trace cov with cv=%.4g without=%.4g; one-sided 95%% lower bound of difference=%.4g "
                           "(need > 0)",
                           tw, to, lower)};
}

Outcome a8(const std::string& out) {
  const Summary s = run_config(
      "[run]\nexperiment = synthetic_unimodal\nseed = 1\n[process]\ninnovations = gaussian\n"
      "[eval]\nsamples = 10000\npermutations = 199\n",
      out);
  const bool pass = s.at("ks_avg") <= 0.05 && s.at("p_t_max") > 0.05 && s.at("p_t_2") > 0.05;
  return {pass, fmt("ks_avg=%.4f (need <= 0.05) p_t_max=%.3f p_t_2=%.3f (need > 0.05) j_beta=%.3f", s.at("ks_avg"),
                    s.at("p_t_max"), s.at("p_t_2"), s.at("j_beta"))};
}

Outcome a9(const std::string& out) {
  const Summary s = run_config(
      "[run]\nexperiment = null_calibration\nseed = 1\n[null]\nrepetitions = 200\nlevel = 0.05\n", out);
  const double a = s.at("rejection_rate_t_max"), b = s.at("rejection_rate_t_2");
  const auto in = [](double x) { return x >= 0.02 && x <= 0.09; };
  return {in(a) && in(b), fmt("rejection rate t_max=%.3f t_2=%.3f (need in [0.02, 0.09])", a, b)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1-A9"};
  std::string out = "acceptance_runs";
  std::string only;
  app.add_option("--out", out, "Directory for run artifacts");
  app.add_option("--only", only, "Comma-separated subset, e.g. A4,A5");
  CLI11_PARSE(app, argc, argv);

  std::set<std::string> wanted;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) wanted.insert(item);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", [&] { return a1(out + "/A1"); }}, {"A2", [&] { return a2(out + "/A2"); }},
      {"A3", [&] { return a3(out + "/A3"); }}, {"A4", [] { return a4(); }},
      {"A5", [&] { return a5(out + "/A5"); }}, {"A6", [] { return a6(); }},
      {"A7", [] { return a7(); }},             {"A8", [&] { return a8(out + "/A8"); }},
      {"A9", [&] { return a9(out + "/A9"); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %s %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
