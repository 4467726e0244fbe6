#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bcot/config.hpp"
#include "bcot/experiments.hpp"
#include "bcot/io.hpp"
#include "bcot/metrics.hpp"
#include "bcot/oracle.hpp"
#include "bcot/pg_trainer.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace bcot;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kRuntime = 2, kAssert = 3 };

struct Common {
  std::string config;
  std::string out;
  std::string experiment;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  std::string assert_expr;
  std::string resume;
};

void add_common(CLI::App* cmd, Common& c, bool with_resume) {
  cmd->add_option("--config", c.config, "Config file (sectioned key = value)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Root seed, overrides [run] seed")->each([&c](const std::string&) {
    c.seed_given = true;
  });
  cmd->add_option("--threads", c.threads, "Worker cap; results do not depend on it")->check(CLI::NonNegativeNumber);
  cmd->add_option("--assert", c.assert_expr, "Threshold checks such as 're<=0.01'; exit 3 when violated");
  if (with_resume) cmd->add_option("--resume", c.resume, "Continue the run stored in DIR");
}

ExperimentConfig resolve_config(const Common& c, const std::string& forced_experiment = "") {
  ExperimentConfig cfg;
  if (!c.resume.empty()) {
    const std::string manifest = (fs::path(c.resume) / "manifest.json").string();
    if (!fs::exists(manifest)) throw ConfigError("--resume: no manifest.json in '" + c.resume + "'");
    cfg = parse_config(nlohmann::json::parse(read_text_file(manifest)).at("config_ini").get<std::string>());
    cfg.out = c.resume;
    return cfg;
  }
  std::string text;
  if (!c.config.empty()) {
    try {
      text = read_text_file(c.config);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  const std::string exp = !forced_experiment.empty() ? forced_experiment : c.experiment;
  cfg = parse_config(text, exp);
  if (c.seed_given) {
    cfg.seed = c.seed;
    cfg.train.seed = c.seed;
  }
  if (!c.out.empty()) cfg.out = c.out;
  if (cfg.out.empty()) cfg.out = "runs/" + to_string(cfg.experiment) + "-" + std::to_string(cfg.seed);
  return cfg;
}

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void print_summary(const Summary& s) {
  for (const auto& [k, v] : s) std::printf("%-28s %.10g\n", k.c_str(), v);
}

int finish(const Summary& s, const std::vector<AssertClause>& clauses) {
  print_summary(s);
  if (clauses.empty()) return kOk;
  const auto failures = check_assert(clauses, s);
  for (const auto& f : failures) std::fprintf(stderr, "assert failed: %s\n", f.c_str());
  return failures.empty() ? kOk : kAssert;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-causal optimal transport between Markov path laws: training, pricing and oracles"};
  app.require_subcommand(1);
  Common common;

  auto* run = app.add_subcommand("run", "Simulate, train, evaluate and report as the config describes");
  add_common(run, common, true);

  auto* simulate = app.add_subcommand("simulate", "Write trajectories from the product of the two reference laws");
  add_common(simulate, common, false);
  int count = 2000;
  simulate->add_option("--experiment", common.experiment, "Experiment whose reference laws are used");
  simulate->add_option("--count", count, "Number of trajectory pairs")->check(CLI::PositiveNumber);

  auto* trainc = app.add_subcommand("train", "Train the coupling and write history and checkpoints");
  add_common(trainc, common, true);

  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a checkpoint or for two trajectory dumps");
  add_common(evaluate, common, false);
  std::string checkpoint, ref_dump, gen_dump;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint JSON to evaluate against the config's references");
  evaluate->add_option("--ref", ref_dump, "Reference trajectory dump");
  evaluate->add_option("--gen", gen_dump, "Generated trajectory dump");

  auto* price = app.add_subcommand("price", "Estimate the subhedging price of a trained coupling");
  add_common(price, common, false);
  price->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();

  auto* oracle = app.add_subcommand("oracle", "Exact values for finite-state instances");
  add_common(oracle, common, false);
  bool grid_study = false, with_lp = false;
  std::string instance;
  oracle->add_flag("--grid-study", grid_study, "Discretized martingale benchmark over the configured grid sizes");
  oracle->add_option("--instance", instance, "Instance JSON to solve by dynamic programming");
  oracle->add_flag("--lp", with_lp, "Also solve the instance as a path-space linear program");

  auto* sweep = app.add_subcommand("beta-sweep", "Train over the configured penalty weights and seeds");
  add_common(sweep, common, true);

  auto* selftest = app.add_subcommand("selftest", "Run the property battery and print a pass/fail table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  if (selftest->parsed()) return run_selftest(std::cout) == 0 ? kOk : kAssert;

  ExperimentConfig cfg;
  std::vector<AssertClause> clauses;
  try {
    std::string forced;
    if (sweep->parsed()) forced = "beta_sweep";
    if (oracle->parsed() && grid_study) forced = "oracle_grid_study";
    cfg = resolve_config(common, forced);
    if (!common.assert_expr.empty()) clauses = parse_assert(common.assert_expr);
    if (evaluate->parsed() && checkpoint.empty() && (ref_dump.empty() || gen_dump.empty())) {
      throw ConfigError("evaluate: pass --checkpoint, or both --ref and --gen");
    }
    if (oracle->parsed() && !grid_study && instance.empty()) {
      throw ConfigError("oracle: pass --grid-study or --instance");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kInvalid;
  }
  set_threads(common.threads);

  try {
    const bool resume = !common.resume.empty();
    if (run->parsed() || sweep->parsed()) {
      return finish(run_experiment(cfg, cfg.out, resume), clauses);
    }
    if (trainc->parsed()) {
      const CouplingParams p = run_training(cfg, cfg.out, resume);
      std::printf("trained %d parameters, checkpoint %s\n", p.size(),
                  (fs::path(cfg.out) / "checkpoints" / "final.json").string().c_str());
      return kOk;
    }
    if (simulate->parsed()) {
      const Batch b = simulate_reference(cfg, count, derive_seed(cfg.seed, "simulate", 0));
      const std::string path = (fs::path(cfg.out) / "trajectories.csv").string();
      write_trajectory_dump(path, b, cfg.to_json(), cfg.seed);
      std::printf("wrote %d trajectory pairs to %s\n", count, path.c_str());
      return kOk;
    }
    if (evaluate->parsed()) {
      if (!checkpoint.empty()) return finish(evaluate_coupling(cfg, load_checkpoint(checkpoint), cfg.out), clauses);
      const SampleSet ref(read_trajectory_dump(ref_dump), ref_dump);
      const SampleSet gen(read_trajectory_dump(gen_dump), gen_dump);
      const MetricReport rep = evaluate_metrics(ref, gen, cfg.metric_settings());
      write_text_file((fs::path(cfg.out) / "metrics.json").string(), rep.to_json() + "\n");
      write_text_file((fs::path(cfg.out) / "metrics.csv").string(),
                      MetricReport::csv_header() + "\n" + rep.csv_row() + "\n");
      std::cout << rep.to_json() << "\n";
      Summary s;
      for (const auto& [k, v] : nlohmann::json::parse(rep.to_json()).items()) {
        if (v.is_number()) s[k] = v.get<double>();
      }
      if (clauses.empty()) return kOk;
      return finish(s, clauses);
    }
    if (price->parsed()) {
      const CouplingParams p = load_checkpoint(checkpoint);
      const SampleSet gen(sample_coupling(p, cfg.eval.samples, derive_seed(cfg.seed, "eval-sample", 0), "eval"));
      const double truth = martingale_subhedge_value(p.dim(), p.horizon(), cfg.process.y0, cfg.process.y0_prime,
                                                     cfg.process.sigma, cfg.process.sigma_prime);
      const SubhedgeEstimate est = subhedge_price_and_re(gen, truth);
      return finish({{"p_hat", est.p_hat}, {"p_hat_se", est.p_hat_se}, {"re", est.rel_err}, {"true_value", truth}},
                    clauses);
    }
    if (oracle->parsed()) {
      if (grid_study) return finish(run_experiment(cfg, cfg.out), clauses);
      const DiscreteInstance inst = DiscreteInstance::from_json(read_text_file(instance));
      Summary s{{"dp_value", solve_dp(inst).value}};
      if (with_lp) s["lp_value"] = solve_pathspace_lp(inst);
      return finish(s, clauses);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
