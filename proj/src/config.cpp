#include "nbe/config.hpp"

#include <algorithm>
#include <fstream>

#include "nbe/io.hpp"

namespace nbe {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end())
      throw ConfigError("config: unknown key '" + item.key() + "' in '" +
                        section + "'");
  }
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " +
                      e.what());
  }
}

PriorSpec parse_prior(const json& j, GPParams* fixed) {
  reject_unknown_keys(j, "prior", {"params", "fixed"});
  if (!j.contains("params"))
    throw ConfigError("config: prior.params is required");
  PriorSpec prior;
  for (const auto& pj : j.at("params")) {
    reject_unknown_keys(pj, "prior.params[]",
                        {"name", "lower", "upper", "positive"});
    ParamPrior p;
    p.name = pj.at("name").get<std::string>();
    p.lower = pj.at("lower").get<double>();
    p.upper = pj.at("upper").get<double>();
    p.positive = get_or(pj, "positive", true);
    prior.params.push_back(p);
  }
  if (j.contains("fixed")) {
    reject_unknown_keys(j.at("fixed"), "prior.fixed",
                        {"sigma2", "nu", "tau", "rho"});
    fixed->sigma2 = get_or(j.at("fixed"), "sigma2", fixed->sigma2);
    fixed->nu = get_or(j.at("fixed"), "nu", fixed->nu);
    fixed->tau = get_or(j.at("fixed"), "tau", fixed->tau);
    fixed->rho = get_or(j.at("fixed"), "rho", fixed->rho);
  }
  return prior;
}

LocationPrior parse_locations(const json& j) {
  reject_unknown_keys(j, "locations",
                      {"kind", "n_min", "n_max", "lambda_min", "lambda_max",
                       "delta_min", "delta_max"});
  LocationPrior loc;
  const std::string kind = get_or<std::string>(j, "kind", "cluster");
  if (kind == "cluster")
    loc.kind = LocationPrior::Kind::Cluster;
  else if (kind == "uniform")
    loc.kind = LocationPrior::Kind::Uniform;
  else
    throw ConfigError("config: locations.kind must be cluster or uniform");
  loc.size.n_min = get_or(j, "n_min", 250);
  loc.size.n_max = get_or(j, "n_max", loc.size.n_min);
  loc.cluster.lambda_min = get_or(j, "lambda_min", 10.0);
  loc.cluster.lambda_max = get_or(j, "lambda_max", 50.0);
  loc.cluster.delta_min = get_or(j, "delta_min", 0.1);
  loc.cluster.delta_max = get_or(j, "delta_max", loc.cluster.delta_min);
  return loc;
}

}  // namespace

SpatialModel RunConfig::model_enum() const {
  return model == "gp" ? SpatialModel::Gp : SpatialModel::Schlather;
}

std::string RunConfig::hash_hex() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash));
  return buf;
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown_keys(
      j, "(top level)",
      {"model", "task", "seed", "profile", "workers", "reproducible", "out_dir",
       "prior", "locations", "neighbours", "arch", "train", "quantiles",
       "simulate", "estimate", "assess", "coverage", "bench"});

  RunConfig cfg;
  cfg.model = get_or<std::string>(j, "model", "gp");
  if (cfg.model != "gp" && cfg.model != "schlather")
    throw ConfigError("config: model must be gp or schlather");
  cfg.task = get_or<std::string>(j, "task", "point");
  if (cfg.task != "point" && cfg.task != "quantiles")
    throw ConfigError("config: task must be point or quantiles");
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.profile = get_or<std::string>(j, "profile", "desk");
  if (cfg.profile != "desk" && cfg.profile != "paper")
    throw ConfigError("config: profile must be desk or paper");
  cfg.workers = get_or(j, "workers", 0);
  cfg.reproducible = get_or(j, "reproducible", true);
  cfg.out_dir = get_or<std::string>(j, "out_dir", ".");

  // profile defaults; explicit fields below override them
  const bool paper = cfg.profile == "paper";
  cfg.train.k_train = paper ? 10000 : 1000;
  cfg.train.k_val = paper ? 2000 : 200;
  cfg.arch.channels = paper ? 128 : 64;
  cfg.arch.hidden = paper ? std::vector<int>{128, 128} : std::vector<int>{64, 64};

  if (!j.contains("prior")) throw ConfigError("config: prior is required");
  cfg.prior = parse_prior(j.at("prior"), &cfg.gp_fixed);
  if (j.contains("locations"))
    cfg.prior.locations = parse_locations(j.at("locations"));
  else
    cfg.prior.locations = LocationPrior{};
  cfg.prior.validate();

  if (j.contains("neighbours")) {
    const json& nj = j.at("neighbours");
    reject_unknown_keys(nj, "neighbours", {"radius", "max_neighbours", "strategy"});
    cfg.rule.radius = get_or(nj, "radius", 0.2);
    cfg.rule.max_neighbours = get_or(nj, "max_neighbours", 30);
    const std::string strat = get_or<std::string>(nj, "strategy", "random");
    if (strat == "random")
      cfg.rule.strategy = NeighbourRule::Strategy::RandomSubsample;
    else if (strat == "minmax")
      cfg.rule.strategy = NeighbourRule::Strategy::MinMaxOrdering;
    else
      throw ConfigError("config: neighbours.strategy must be random or minmax");
  }
  cfg.rule.validate();

  if (j.contains("arch")) {
    const json& aj = j.at("arch");
    reject_unknown_keys(aj, "arch", {"layers", "channels", "hidden"});
    cfg.arch.layers = get_or(aj, "layers", cfg.arch.layers);
    cfg.arch.channels = get_or(aj, "channels", cfg.arch.channels);
    cfg.arch.hidden = get_or(aj, "hidden", cfg.arch.hidden);
  }
  cfg.arch.p = cfg.prior.dim();
  cfg.arch.rule = cfg.rule;
  cfg.arch.final_act.clear();
  for (const auto& p : cfg.prior.params)
    cfg.arch.final_act.push_back(p.positive ? Activation::Exponential
                                            : Activation::Identity);
  cfg.arch.validate();

  if (j.contains("train")) {
    const json& tj = j.at("train");
    reject_unknown_keys(tj, "train",
                        {"k_train", "k_val", "j", "m", "batch", "patience",
                         "max_epochs", "lr", "verbose"});
    cfg.train.k_train = get_or(tj, "k_train", cfg.train.k_train);
    cfg.train.k_val = get_or(tj, "k_val", cfg.train.k_val);
    cfg.train.j = get_or(tj, "j", cfg.train.j);
    cfg.train.m = get_or(tj, "m", cfg.train.m);
    cfg.train.batch = get_or(tj, "batch", cfg.train.batch);
    cfg.train.patience = get_or(tj, "patience", cfg.train.patience);
    cfg.train.max_epochs = get_or(tj, "max_epochs", cfg.train.max_epochs);
    cfg.train.lr = get_or(tj, "lr", cfg.train.lr);
    cfg.train.verbose = get_or(tj, "verbose", cfg.train.verbose);
  }
  cfg.train.seed = cfg.seed;
  cfg.train.workers = cfg.workers;
  cfg.train.validate();

  if (j.contains("quantiles")) {
    const json& qj = j.at("quantiles");
    reject_unknown_keys(qj, "quantiles", {"q1", "q2"});
    cfg.q1 = get_or(qj, "q1", 0.025);
    cfg.q2 = get_or(qj, "q2", 0.975);
    if (!(cfg.q1 > 0 && cfg.q1 < cfg.q2 && cfg.q2 < 1))
      throw ConfigError("config: quantiles need 0 < q1 < q2 < 1");
  }

  cfg.simulate_section = get_or(j, "simulate", json::object());
  cfg.estimate_section = get_or(j, "estimate", json::object());
  cfg.assess_section = get_or(j, "assess", json::object());
  cfg.coverage_section = get_or(j, "coverage", json::object());
  cfg.bench_section = get_or(j, "bench", json::object());

  // canonical hash: nlohmann::json orders object keys, so dump() is stable
  cfg.config_hash = fnv1a_str(j.dump());
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse failure in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace nbe
