#include "bcot/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "bcot/io.hpp"
#include "bcot/metrics.hpp"
#include "bcot/objective.hpp"
#include "bcot/oracle.hpp"
#include "bcot/pg_trainer.hpp"

namespace fs = std::filesystem;

namespace bcot {

namespace {

using Clock = std::chrono::steady_clock;

bool martingale_family(ExperimentKind k) {
  return k == ExperimentKind::MartingaleBenchmark || k == ExperimentKind::BetaSweep ||
         k == ExperimentKind::MultiAsset || k == ExperimentKind::OracleGridStudy;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& dir, const std::string& status,
                    double wallclock_s, const Summary* summary = nullptr) {
  nlohmann::json m;
  m["version"] = kVersion;
  m["experiment"] = to_string(cfg.experiment);
  m["seed"] = cfg.seed;
  m["config"] = cfg.to_json();
  m["config_ini"] = cfg.to_ini();
  m["status"] = status;
  m["wallclock_s"] = wallclock_s;
  if (summary != nullptr) m["summary"] = summary_json(*summary);
  write_text_file(path_in(dir, "manifest.json"), m.dump(2) + "\n");
}

// History rows of an earlier run with round <= last_round, header excluded.
std::vector<std::string> read_history_prefix(const std::string& path, int last_round) {
  std::vector<std::string> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int round = std::stoi(line.substr(0, line.find(',')));
    if (round <= last_round) rows.push_back(line);
  }
  return rows;
}

void write_history(const std::string& path, const std::vector<std::string>& prefix, const History& history) {
  std::string out = history_csv_header() + "\n";
  for (const auto& r : prefix) out += r + "\n";
  for (const auto& h : history) out += history_csv_row(h) + "\n";
  write_text_file(path, out);
}

void put(Summary& s, const std::string& key, const std::optional<double>& v) {
  if (v) s[key] = *v;
}

ExperimentConfig sub_run_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig sub = cfg;
  sub.experiment = ExperimentKind::MartingaleBenchmark;
  sub.seed = seed;
  sub.train.seed = seed;
  sub.out.clear();
  return sub;
}

bool sub_run_done(const std::string& dir) {
  const std::string path = path_in(dir, "manifest.json");
  if (!fs::exists(path)) return false;
  const auto m = nlohmann::json::parse(read_text_file(path));
  return m.value("status", "") == "complete" && m.contains("summary");
}

Summary summary_from_manifest(const std::string& dir) {
  const auto m = nlohmann::json::parse(read_text_file(path_in(dir, "manifest.json")));
  Summary s;
  for (const auto& [k, v] : m.at("summary").items()) s[k] = v.is_null() ? std::nan("") : v.get<double>();
  return s;
}

Summary train_and_evaluate(const ExperimentConfig& cfg, const std::string& dir, bool resume) {
  const auto t0 = Clock::now();
  if (resume && sub_run_done(dir)) return summary_from_manifest(dir);
  const CouplingParams params = run_training(cfg, dir, resume);
  Summary s = evaluate_coupling(cfg, params, dir);
  s["train_seconds"] = seconds_since(t0);
  write_manifest(cfg, dir, "complete", seconds_since(t0), &s);
  return s;
}

Summary beta_sweep(const ExperimentConfig& cfg, const std::string& out_dir, bool resume) {
  std::string rows = "beta,seed_index,seed,eta,p_hat,p_hat_se,rel_err,j_val,j_kl,j_beta\n";
  std::string summary_rows = "beta,eta,median_p_hat,median_rel_err\n";
  Summary out;
  for (double beta : cfg.sweep.betas) {
    std::vector<double> res, prices;
    double eta = cfg.train.schedule.eta;
    for (int s = 0; s < cfg.sweep.seeds; ++s) {
      ExperimentConfig sub = sub_run_config(cfg, derive_seed(cfg.seed, "sweep-seed", s));
      sub.train.beta = beta;
      if (cfg.sweep.eta_beta_ref > 0.0 && beta > 0.0) {
        sub.train.schedule.eta *= cfg.sweep.eta_beta_ref / beta;
        sub.train.schedule.lambda *= cfg.sweep.eta_beta_ref / beta;
      }
      eta = sub.train.schedule.eta;
      char name[64];
      std::snprintf(name, sizeof(name), "runs/beta_%g_seed_%d", beta, s);
      const Summary r = train_and_evaluate(sub, path_in(out_dir, name), resume);
      res.push_back(r.at("re"));
      prices.push_back(r.at("p_hat"));
      rows += fmt(beta) + "," + std::to_string(s) + "," + std::to_string(sub.seed) + "," + fmt(eta) + "," +
              fmt(r.at("p_hat")) + "," + fmt(r.at("p_hat_se")) + "," + fmt(r.at("re")) + "," + fmt(r.at("j_val")) +
              "," + (r.count("j_kl") ? fmt(r.at("j_kl")) : "") + "," + (r.count("j_beta") ? fmt(r.at("j_beta")) : "") +
              "\n";
    }
    const double med_re = median(res), med_p = median(prices);
    summary_rows += fmt(beta) + "," + fmt(eta) + "," + fmt(med_p) + "," + fmt(med_re) + "\n";
    char key[64];
    std::snprintf(key, sizeof(key), "re_beta_%g", beta);
    out[key] = med_re;
    std::snprintf(key, sizeof(key), "p_hat_beta_%g", beta);
    out[key] = med_p;
  }
  write_text_file(path_in(out_dir, "beta_sweep.csv"), rows);
  write_text_file(path_in(out_dir, "beta_sweep_summary.csv"), summary_rows);
  return out;
}

Summary multi_asset(const ExperimentConfig& cfg, const std::string& out_dir, bool resume) {
  std::string rows = "d_pairs,true_value,p_hat,p_hat_se,rel_err,j_beta,train_seconds\n";
  Summary out;
  double max_re = 0.0;
  for (int d : cfg.sweep.d_pairs) {
    ExperimentConfig sub = sub_run_config(cfg, derive_seed(cfg.seed, "multi-asset", d));
    sub.process.d_pairs = d;
    // cost and KL both sum over pairs, so the gradient grows with d
    sub.train.schedule.eta /= d;
    sub.train.schedule.lambda /= d;
    const Summary r = train_and_evaluate(sub, path_in(out_dir, "runs/d_pairs_" + std::to_string(d)), resume);
    rows += std::to_string(d) + "," + fmt(r.at("true_value")) + "," + fmt(r.at("p_hat")) + "," +
            fmt(r.at("p_hat_se")) + "," + fmt(r.at("re")) + "," + (r.count("j_beta") ? fmt(r.at("j_beta")) : "") +
            "," + fmt(r.count("train_seconds") ? r.at("train_seconds") : std::nan("")) + "\n";
    out["re_d_" + std::to_string(d)] = r.at("re");
    out["p_hat_d_" + std::to_string(d)] = r.at("p_hat");
    max_re = std::max(max_re, r.at("re"));
  }
  out["max_re"] = max_re;
  write_text_file(path_in(out_dir, "multi_asset.csv"), rows);
  return out;
}

}  // namespace

ReferenceLaws reference_laws(const ExperimentConfig& cfg) {
  if (martingale_family(cfg.experiment)) {
    const MartingaleConfig m = cfg.martingale();
    return {m.process(), m.process_prime()};
  }
  const Ar1Config a = cfg.ar1();
  return {a.process(), a.process_prime()};
}

CouplingParams initial_coupling(const ExperimentConfig& cfg) {
  const int N = cfg.process.horizon;
  if (martingale_family(cfg.experiment)) {
    const int d = cfg.process.d_pairs;
    return CouplingParams::identity_init_pinned(Vec::Constant(d, cfg.process.y0), Vec::Constant(d, cfg.process.y0_prime),
                                                N, cfg.coupling.init_std, cfg.coupling.rho_max);
  }
  return CouplingParams::identity_init(cfg.process.dim, N, cfg.coupling.init_std, cfg.coupling.rho_max);
}

CouplingParams synchronous_martingale_coupling(const ExperimentConfig& cfg) {
  const int d = cfg.process.d_pairs;
  CouplingParams p = CouplingParams::identity_init_pinned(
      Vec::Constant(d, cfg.process.y0), Vec::Constant(d, cfg.process.y0_prime), cfg.process.horizon, 1.0,
      cfg.coupling.rho_max);
  for (int n = 1; n <= cfg.process.horizon; ++n) {
    const BlockLayout l = step_layout(d, n);
    auto blk = p.block(n);
    blk.segment(l.log_std1, d).setConstant(std::log(cfg.process.sigma));
    blk.segment(l.log_std2, d).setConstant(std::log(cfg.process.sigma_prime));
    // tanh saturates to 1 in double precision
    blk.segment(l.corr_raw, d).setConstant(20.0);
  }
  return p;
}

Batch simulate_reference(const ExperimentConfig& cfg, int count, std::uint64_t seed) {
  const ReferenceLaws laws = reference_laws(cfg);
  return simulate_pairs(*laws.law, *laws.law_prime, count, seed, "traj");
}

CouplingParams run_training(const ExperimentConfig& cfg, const std::string& out_dir, bool resume) {
  const auto t0 = Clock::now();
  const ReferenceLaws laws = reference_laws(cfg);
  CouplingParams params = initial_coupling(cfg);
  int first_round = 1;
  std::vector<std::string> prefix;
  const std::string latest = path_in(out_dir, "checkpoints/latest.json");
  const std::string history_path = path_in(out_dir, "history.csv");
  if (resume && fs::exists(latest)) {
    int round = 0;
    CouplingParams loaded = load_checkpoint(latest, &round);
    if (loaded.size() != params.size() || loaded.pinned_start() != params.pinned_start()) {
      throw ShapeError("resume: checkpoint does not match the configured coupling");
    }
    params = loaded;
    first_round = round + 1;
    prefix = read_history_prefix(history_path, round);
  }
  write_manifest(cfg, out_dir, "running", 0.0);

  auto checkpoint = [&](int round, const CouplingParams& p, const History& h) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoints/round_%06d.json", round);
    save_checkpoint(path_in(out_dir, name), p, round);
    save_checkpoint(latest, p, round);
    write_history(history_path, prefix, h);
  };

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  if (first_round > tc.rounds) {
    write_history(history_path, prefix, {});
    return params;
  }
  try {
    TrainResult result = train(tc, params, cfg.cost, *laws.law, *laws.law_prime, first_round, checkpoint);
    write_history(history_path, prefix, result.history);
    save_checkpoint(latest, result.params, tc.rounds);
    save_checkpoint(path_in(out_dir, "checkpoints/final.json"), result.params, tc.rounds);
    write_manifest(cfg, out_dir, "trained", seconds_since(t0));
    return result.params;
  } catch (const TrainingAborted& e) {
    write_history(history_path, prefix, e.history());
    write_manifest(cfg, out_dir, std::string("aborted at round ") + std::to_string(e.round()) + ": " + e.what(),
                   seconds_since(t0));
    throw;
  }
}

Summary evaluate_coupling(const ExperimentConfig& cfg, const CouplingParams& params, const std::string& out_dir) {
  const ReferenceLaws laws = reference_laws(cfg);
  Summary s;

  const ObjectiveReport obj = evaluate_objective(params, cfg.cost, *laws.law, *laws.law_prime, cfg.train.beta,
                                                 cfg.eval.samples, derive_seed(cfg.seed, "eval-objective", 0));
  write_text_file(path_in(out_dir, "objective.json"), obj.to_json() + "\n");
  s["j_val"] = obj.j_val;
  s["j_val_se"] = obj.j_val_se;
  put(s, "j_kl", obj.j_kl);
  put(s, "j_beta", obj.j_beta);

  const SampleSet gen(sample_coupling(params, cfg.eval.samples, derive_seed(cfg.seed, "eval-sample", 0), "eval"),
                      "coupling");
  const SampleSet ref(simulate_reference(cfg, cfg.eval.samples, derive_seed(cfg.seed, "eval-reference", 0)),
                      "reference");
  MetricSettings ms = cfg.metric_settings();
  if (martingale_family(cfg.experiment)) {
    const double truth = martingale_subhedge_value(cfg.process.d_pairs, cfg.process.horizon, cfg.process.y0,
                                                   cfg.process.y0_prime, cfg.process.sigma, cfg.process.sigma_prime);
    ms.true_value = truth;
    s["true_value"] = truth;
    const SubhedgeEstimate est = subhedge_price_and_re(gen, truth);
    s["p_hat"] = est.p_hat;
    s["p_hat_se"] = est.p_hat_se;
    s["re"] = est.rel_err;
    // J_beta of the exact bi-causal optimizer, for comparison with the trained value.
    const ObjectiveReport exact =
        evaluate_objective(synchronous_martingale_coupling(cfg), cfg.cost, *laws.law, *laws.law_prime, cfg.train.beta,
                           cfg.eval.samples, derive_seed(cfg.seed, "eval-objective", 0));
    put(s, "j_beta_synchronous", exact.j_beta);
  }

  const MetricReport rep = evaluate_metrics(ref, gen, ms);
  write_text_file(path_in(out_dir, "metrics.json"), rep.to_json() + "\n");
  write_text_file(path_in(out_dir, "metrics.csv"), MetricReport::csv_header() + "\n" + rep.csv_row() + "\n");
  put(s, "cost_avg", rep.cost_avg);
  put(s, "w2_avg", rep.w2_avg);
  put(s, "ks_avg", rep.ks_avg);
  put(s, "swd", rep.swd);
  put(s, "mmd2", rep.mmd2);
  put(s, "t_max", rep.t_max);
  put(s, "p_t_max", rep.p_t_max);
  put(s, "t_2", rep.t_2);
  put(s, "p_t_2", rep.p_t_2);

  write_trajectory_dump(path_in(out_dir, "trajectories.csv"), gen.trajectories, cfg.to_json(),
                        derive_seed(cfg.seed, "eval-sample", 0));
  return s;
}

Summary oracle_grid_study(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto& p = cfg.process;
  const double truth = martingale_subhedge_value(1, p.horizon, p.y0, p.y0_prime, p.sigma, p.sigma_prime);
  std::string rows = "grid_size,value,true_value,rel_err,seconds\n";
  Summary s;
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  double last_re = std::nan("");
  for (int S : cfg.oracle.grid_sizes) {
    const auto t0 = Clock::now();
    const DiscreteInstance inst =
        discretize_gaussian_martingale(p.horizon, p.y0, p.y0_prime, p.sigma, p.sigma_prime, S, cfg.oracle.width);
    const double v = solve_dp(inst).value;
    const double re = std::abs(v - truth) / truth;
    if (re > prev) monotone = false;
    prev = re;
    last_re = re;
    rows += std::to_string(S) + "," + fmt(v) + "," + fmt(truth) + "," + fmt(re) + "," + fmt(seconds_since(t0)) + "\n";
    s["value_S" + std::to_string(S)] = v;
    s["re_S" + std::to_string(S)] = re;
  }
  s["true_value"] = truth;
  s["re_last"] = last_re;
  s["monotone"] = monotone ? 1.0 : 0.0;
  write_text_file(path_in(out_dir, "oracle_grid.csv"), rows);
  return s;
}

Summary null_calibration(const ExperimentConfig& cfg, const std::string& out_dir) {
  const ReferenceLaws laws = reference_laws(cfg);
  const int M = cfg.null_test.samples;
  std::string rows = "repetition,p_t_max,p_t_2\n";
  int rej_max = 0, rej_2 = 0;
  for (int r = 0; r < cfg.null_test.repetitions; ++r) {
    Batch pool = simulate_pairs(*laws.law, *laws.law_prime, 2 * M, derive_seed(cfg.seed, "null-pool", r), "traj");
    const SampleSet ref(Batch(pool.begin(), pool.begin() + M), "pool-a");
    const SampleSet gen(Batch(pool.begin() + M, pool.end()), "pool-b");
    const std::uint64_t ps = derive_seed(cfg.seed, "null-perm", r);
    const double p_max = permutation_test(ref, gen, CorrStatistic::TMax, cfg.eval.permutations, ps);
    const double p_2 = permutation_test(ref, gen, CorrStatistic::T2, cfg.eval.permutations, ps);
    rej_max += p_max <= cfg.null_test.level;
    rej_2 += p_2 <= cfg.null_test.level;
    rows += std::to_string(r) + "," + fmt(p_max) + "," + fmt(p_2) + "\n";
  }
  write_text_file(path_in(out_dir, "null_calibration.csv"), rows);
  const double reps = cfg.null_test.repetitions;
  return {{"rejection_rate_t_max", rej_max / reps}, {"rejection_rate_t_2", rej_2 / reps}};
}

Summary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, bool resume) {
  const auto t0 = Clock::now();
  Summary s;
  switch (cfg.experiment) {
    case ExperimentKind::MartingaleBenchmark:
    case ExperimentKind::SyntheticUnimodal:
    case ExperimentKind::SyntheticBimodal: {
      const CouplingParams params = run_training(cfg, out_dir, resume);
      s = evaluate_coupling(cfg, params, out_dir);
      break;
    }
    case ExperimentKind::BetaSweep:
      write_manifest(cfg, out_dir, "running", 0.0);
      s = beta_sweep(cfg, out_dir, resume);
      break;
    case ExperimentKind::MultiAsset:
      write_manifest(cfg, out_dir, "running", 0.0);
      s = multi_asset(cfg, out_dir, resume);
      break;
    case ExperimentKind::OracleGridStudy:
      s = oracle_grid_study(cfg, out_dir);
      break;
    case ExperimentKind::NullCalibration:
      s = null_calibration(cfg, out_dir);
      break;
  }
  s["wallclock_s"] = seconds_since(t0);
  write_manifest(cfg, out_dir, "complete", seconds_since(t0), &s);
  return s;
}

std::vector<AssertClause> parse_assert(const std::string& expr) {
  static const std::regex clause(R"(^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*(<=|>=|==|<|>)\s*([-+0-9.eEinfINF]+)\s*$)");
  std::string text = std::regex_replace(expr, std::regex("&&"), ",");
  std::vector<AssertClause> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::smatch m;
    if (!std::regex_match(item, m, clause)) throw ConfigError("--assert: cannot parse '" + item + "'");
    AssertClause c;
    c.key = m[1];
    c.op = m[2];
    try {
      std::size_t used = 0;
      c.value = std::stod(m[3], &used);
      if (used != static_cast<std::size_t>(m[3].length())) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("--assert: bad number in '" + item + "'");
    }
    c.text = item;
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("--assert: empty expression");
  return out;
}

std::vector<std::string> check_assert(const std::vector<AssertClause>& clauses, const Summary& summary) {
  std::vector<std::string> failures;
  for (const auto& c : clauses) {
    const auto it = summary.find(c.key);
    if (it == summary.end()) {
      failures.push_back(c.key + ": not produced by this run");
      continue;
    }
    const double v = it->second;
    bool ok = false;
    if (c.op == "<=") ok = v <= c.value;
    if (c.op == ">=") ok = v >= c.value;
    if (c.op == "<") ok = v < c.value;
    if (c.op == ">") ok = v > c.value;
    if (c.op == "==") ok = v == c.value;
    if (!ok) failures.push_back(c.key + " = " + fmt(v) + " violates " + c.key + c.op + fmt(c.value));
  }
  return failures;
}

nlohmann::json summary_json(const Summary& summary) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : summary) j[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  return j;
}

}  // namespace bcot
