#include "bcot/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "bcot/io.hpp"

namespace bcot {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  double out = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long long out = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::uint64_t out = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected an unsigned 64-bit integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? "," : "") << v[k];
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Constant:
      return "constant";
    case ScheduleKind::PolyDecay:
      return "poly_decay";
    case ScheduleKind::InverseK:
      return "inverse_k";
  }
  return "constant";
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.experiment",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.experiment = experiment_kind_from_string(trim(v));
       }},
      {"run.seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      {"run.out", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = trim(v); }},

      {"process.horizon",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.horizon = parse_int(k, v); }},
      {"process.d_pairs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.d_pairs = parse_int(k, v); }},
      {"process.y0",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.y0 = parse_double(k, v); }},
      {"process.y0_prime",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.y0_prime = parse_double(k, v); }},
      {"process.sigma",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.sigma = parse_double(k, v); }},
      {"process.sigma_prime",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.process.sigma_prime = parse_double(k, v);
       }},
      {"process.dim",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.dim = parse_int(k, v); }},
      {"process.phi",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process.phi = parse_double(k, v); }},
      {"process.innovations",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.process.innovations = trim(v); }},

      {"train.beta",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.beta = parse_double(k, v); }},
      {"train.batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_int(k, v); }},
      {"train.rounds",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.rounds = parse_int(k, v); }},
      {"train.schedule",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const std::string t = trim(v);
         if (t == "constant") {
           c.train.schedule.kind = ScheduleKind::Constant;
         } else if (t == "poly_decay") {
           c.train.schedule.kind = ScheduleKind::PolyDecay;
         } else if (t == "inverse_k") {
           c.train.schedule.kind = ScheduleKind::InverseK;
         } else {
           throw ConfigError(k + ": expected constant, poly_decay or inverse_k, got '" + v + "'");
         }
       }},
      {"train.eta",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.schedule.eta = parse_double(k, v);
       }},
      {"train.lambda",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.schedule.lambda = parse_double(k, v);
       }},
      {"train.alpha",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.schedule.alpha = parse_double(k, v);
       }},
      {"train.features",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.train.features = baseline_features_from_string(trim(v));
       }},
      {"train.eval_every",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.eval_every = parse_int(k, v); }},
      {"train.eval_batch",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.eval_batch = parse_int(k, v); }},
      {"train.grad_clip",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const std::string t = trim(v);
         if (t.empty() || t == "off") {
           c.train.grad_clip.reset();
         } else {
           c.train.grad_clip = parse_double(k, v);
         }
       }},
      {"train.cost",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.cost.kind = cost_kind_from_string(trim(v));
       }},
      {"train.cost_clamp",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const std::string t = trim(v);
         if (t.empty() || t == "off") {
           c.cost.clamp.reset();
         } else {
           c.cost.clamp = parse_double(k, v);
         }
       }},

      {"coupling.init_std",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.coupling.init_std = parse_double(k, v);
       }},
      {"coupling.rho_max",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.coupling.rho_max = parse_double(k, v);
       }},

      {"eval.samples",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.samples = parse_int(k, v); }},
      {"eval.projections",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.projections = parse_int(k, v); }},
      {"eval.permutations",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.permutations = parse_int(k, v); }},
      {"eval.bandwidth",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.bandwidth = parse_double(k, v); }},
      {"eval.distances",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.distances = parse_bool(k, v); }},

      {"sweep.betas",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.sweep.betas.clear();
         for (const auto& item : split_list(v)) c.sweep.betas.push_back(parse_double(k, item));
       }},
      {"sweep.seeds",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sweep.seeds = parse_int(k, v); }},
      {"sweep.d_pairs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.sweep.d_pairs.clear();
         for (const auto& item : split_list(v)) c.sweep.d_pairs.push_back(static_cast<int>(parse_int(k, item)));
       }},
      {"sweep.eta_beta_ref",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.sweep.eta_beta_ref = parse_double(k, v);
       }},

      {"oracle.grid_sizes",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.oracle.grid_sizes.clear();
         for (const auto& item : split_list(v)) c.oracle.grid_sizes.push_back(static_cast<int>(parse_int(k, item)));
       }},
      {"oracle.width",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.oracle.width = parse_double(k, v); }},

      {"null.repetitions",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.null_test.repetitions = parse_int(k, v);
       }},
      {"null.samples",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.null_test.samples = parse_int(k, v); }},
      {"null.level",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.null_test.level = parse_double(k, v); }},
  };
  return table;
}

bool is_martingale_family(ExperimentKind k) {
  return k == ExperimentKind::MartingaleBenchmark || k == ExperimentKind::BetaSweep ||
         k == ExperimentKind::MultiAsset || k == ExperimentKind::OracleGridStudy;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::SyntheticUnimodal:
      return "synthetic_unimodal";
    case ExperimentKind::SyntheticBimodal:
      return "synthetic_bimodal";
    case ExperimentKind::MartingaleBenchmark:
      return "martingale_benchmark";
    case ExperimentKind::BetaSweep:
      return "beta_sweep";
    case ExperimentKind::MultiAsset:
      return "multi_asset";
    case ExperimentKind::OracleGridStudy:
      return "oracle_grid_study";
    case ExperimentKind::NullCalibration:
      return "null_calibration";
  }
  return "martingale_benchmark";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::SyntheticUnimodal, ExperimentKind::SyntheticBimodal,
                 ExperimentKind::MartingaleBenchmark, ExperimentKind::BetaSweep, ExperimentKind::MultiAsset,
                 ExperimentKind::OracleGridStudy, ExperimentKind::NullCalibration}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("run.experiment: unknown experiment '" + name + "'");
}

void ExperimentConfig::apply_experiment_defaults(const std::set<std::string>& given) {
  auto unset = [&](const char* key) { return given.count(key) == 0; };
  if (is_martingale_family(experiment)) {
    if (unset("process.horizon")) process.horizon = 5;
    if (unset("train.cost")) cost.kind = CostKind::ZeroAtStart;
    if (unset("train.eta")) train.schedule.eta = kMartingaleEta;
    bool sweep_like = experiment == ExperimentKind::BetaSweep || experiment == ExperimentKind::MultiAsset;
    if (sweep_like && unset("eval.distances")) eval.distances = false;
  } else {
    if (unset("process.horizon")) process.horizon = 10;
    if (unset("process.dim")) process.dim = 3;
    if (unset("train.cost")) cost.kind = CostKind::NormalizedSquared;
    if (unset("train.eta")) train.schedule.eta = kSyntheticEta;
  }
  if (unset("train.eval_every")) train.eval_every = 100;
}

void ExperimentConfig::validate() const {
  if (process.horizon < 1) throw ConfigError("process.horizon: must be >= 1");
  if (is_martingale_family(experiment)) {
    martingale().validate();
  } else {
    if (process.innovations != "paper" && process.innovations != "gaussian") {
      throw ConfigError("process.innovations: expected paper or gaussian");
    }
    ar1().validate();
  }
  train.validate();
  if (!(coupling.init_std > 0.0)) throw ConfigError("coupling.init_std: must be > 0");
  if (!(coupling.rho_max > 0.0 && coupling.rho_max < 1.0)) throw ConfigError("coupling.rho_max: must lie in (0, 1)");
  if (eval.samples < 3) throw ConfigError("eval.samples: must be >= 3");
  if (eval.projections < 1) throw ConfigError("eval.projections: must be >= 1");
  if (eval.permutations < 19) throw ConfigError("eval.permutations: must be >= 19");
  if (eval.bandwidth < 0.0) throw ConfigError("eval.bandwidth: must be >= 0");
  if (sweep.betas.empty()) throw ConfigError("sweep.betas: empty list");
  for (double b : sweep.betas)
    if (!(b >= 0.0)) throw ConfigError("sweep.betas: entries must be >= 0");
  if (sweep.seeds < 1) throw ConfigError("sweep.seeds: must be >= 1");
  for (int d : sweep.d_pairs)
    if (d < 1) throw ConfigError("sweep.d_pairs: entries must be >= 1");
  if (sweep.eta_beta_ref < 0.0) throw ConfigError("sweep.eta_beta_ref: must be >= 0");
  for (int s : oracle.grid_sizes)
    if (s < 3) throw ConfigError("oracle.grid_sizes: entries must be >= 3");
  if (!(oracle.width > 0.0)) throw ConfigError("oracle.width: must be > 0");
  if (null_test.repetitions < 1) throw ConfigError("null.repetitions: must be >= 1");
  if (null_test.samples < 3) throw ConfigError("null.samples: must be >= 3");
  if (!(null_test.level > 0.0 && null_test.level < 1.0)) throw ConfigError("null.level: must lie in (0, 1)");
}

MartingaleConfig ExperimentConfig::martingale() const {
  MartingaleConfig m;
  m.d_pairs = process.d_pairs;
  m.horizon = process.horizon;
  m.y0 = process.y0;
  m.y0_prime = process.y0_prime;
  m.sigma = process.sigma;
  m.sigma_prime = process.sigma_prime;
  m.seed = seed;
  return m;
}

Ar1Config ExperimentConfig::ar1() const {
  Ar1Config a;
  if (experiment == ExperimentKind::SyntheticBimodal) {
    a = Ar1Config::bimodal(process.dim, process.horizon, seed);
  } else if (process.innovations == "gaussian") {
    a = Ar1Config::gaussian_unimodal(process.dim, process.horizon, seed);
  } else {
    a = Ar1Config::unimodal(process.dim, process.horizon, seed);
  }
  a.phi = process.phi;
  return a;
}

MetricSettings ExperimentConfig::metric_settings() const {
  MetricSettings m;
  m.projections = eval.projections;
  m.bandwidth = eval.bandwidth;
  m.permutations = eval.permutations;
  m.seed = derive_seed(seed, "metrics", 0);
  m.distances = eval.distances;
  return m;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["run"] = {{"experiment", to_string(experiment)}, {"seed", seed}, {"out", out}};
  j["process"] = {{"horizon", process.horizon},   {"d_pairs", process.d_pairs},
                  {"y0", process.y0},             {"y0_prime", process.y0_prime},
                  {"sigma", process.sigma},       {"sigma_prime", process.sigma_prime},
                  {"dim", process.dim},           {"phi", process.phi},
                  {"innovations", process.innovations}};
  j["train"] = {{"beta", train.beta},
                {"batch_size", train.batch_size},
                {"rounds", train.rounds},
                {"schedule", schedule_name(train.schedule.kind)},
                {"eta", train.schedule.eta},
                {"lambda", train.schedule.lambda},
                {"alpha", train.schedule.alpha},
                {"features", to_string(train.features)},
                {"eval_every", train.eval_every},
                {"eval_batch", train.eval_batch},
                {"grad_clip", train.grad_clip ? nlohmann::json(*train.grad_clip) : nlohmann::json("off")},
                {"cost", to_string(cost.kind)},
                {"cost_clamp", cost.clamp ? nlohmann::json(*cost.clamp) : nlohmann::json("off")}};
  j["coupling"] = {{"init_std", coupling.init_std}, {"rho_max", coupling.rho_max}};
  j["eval"] = {{"samples", eval.samples},
               {"projections", eval.projections},
               {"permutations", eval.permutations},
               {"bandwidth", eval.bandwidth},
               {"distances", eval.distances}};
  j["sweep"] = {{"betas", sweep.betas},
                {"seeds", sweep.seeds},
                {"d_pairs", sweep.d_pairs},
                {"eta_beta_ref", sweep.eta_beta_ref}};
  j["oracle"] = {{"grid_sizes", oracle.grid_sizes}, {"width", oracle.width}};
  j["null"] = {{"repetitions", null_test.repetitions}, {"samples", null_test.samples}, {"level", null_test.level}};
  return j;
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream os;
  os << "[run]\nexperiment = " << to_string(experiment) << "\nseed = " << seed << "\n";
  if (!out.empty()) os << "out = " << out << "\n";
  os << "\n[process]\nhorizon = " << process.horizon << "\nd_pairs = " << process.d_pairs
     << "\ny0 = " << num(process.y0) << "\ny0_prime = " << num(process.y0_prime) << "\nsigma = " << num(process.sigma)
     << "\nsigma_prime = " << num(process.sigma_prime) << "\ndim = " << process.dim << "\nphi = " << num(process.phi)
     << "\ninnovations = " << process.innovations << "\n";
  os << "\n[train]\nbeta = " << num(train.beta) << "\nbatch_size = " << train.batch_size
     << "\nrounds = " << train.rounds << "\nschedule = " << schedule_name(train.schedule.kind)
     << "\neta = " << num(train.schedule.eta) << "\nlambda = " << num(train.schedule.lambda)
     << "\nalpha = " << num(train.schedule.alpha) << "\nfeatures = " << to_string(train.features)
     << "\neval_every = " << train.eval_every << "\neval_batch = " << train.eval_batch
     << "\ngrad_clip = " << (train.grad_clip ? num(*train.grad_clip) : std::string("off"))
     << "\ncost = " << to_string(cost.kind)
     << "\ncost_clamp = " << (cost.clamp ? num(*cost.clamp) : std::string("off")) << "\n";
  os << "\n[coupling]\ninit_std = " << num(coupling.init_std) << "\nrho_max = " << num(coupling.rho_max) << "\n";
  os << "\n[eval]\nsamples = " << eval.samples << "\nprojections = " << eval.projections
     << "\npermutations = " << eval.permutations << "\nbandwidth = " << num(eval.bandwidth)
     << "\ndistances = " << (eval.distances ? "true" : "false") << "\n";
  os << "\n[sweep]\nbetas = " << join(sweep.betas) << "\nseeds = " << sweep.seeds << "\nd_pairs = " << join(sweep.d_pairs)
     << "\neta_beta_ref = " << num(sweep.eta_beta_ref) << "\n";
  os << "\n[oracle]\ngrid_sizes = " << join(oracle.grid_sizes) << "\nwidth = " << num(oracle.width) << "\n";
  os << "\n[null]\nrepetitions = " << null_test.repetitions << "\nsamples = " << null_test.samples
     << "\nlevel = " << num(null_test.level) << "\n";
  return os.str();
}

ExperimentConfig parse_config(const std::string& text, const std::string& experiment) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ExperimentConfig cfg;
  std::set<std::string> given;
  // The experiment decides several defaults, so it is applied first.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (setters().count(full) == 0) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      entries.emplace_back(full, value.data());
      given.insert(full);
    }
  }
  if (!experiment.empty()) {
    std::erase_if(entries, [](const auto& e) { return e.first == "run.experiment"; });
    entries.emplace_back("run.experiment", experiment);
    given.insert("run.experiment");
  }
  for (const auto& [full, value] : entries) {
    if (full == "run.experiment") setters().at(full)(cfg, full, value);
  }
  for (const auto& [full, value] : entries) {
    if (full == "run.seed") setters().at(full)(cfg, full, value);
  }
  cfg.apply_experiment_defaults(given);
  for (const auto& [full, value] : entries) setters().at(full)(cfg, full, value);
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(text);
}

}  // namespace bcot
