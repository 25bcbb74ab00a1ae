// Command-line front end: simulate / train / estimate / assess / coverage /
// bench, driven by a JSON configuration with flag overrides.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nbe/baselines.hpp"
#include "nbe/config.hpp"
#include "nbe/eval.hpp"
#include "nbe/io.hpp"

namespace fs = std::filesystem;
using nbe::RunConfig;
using json = nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitCheckpoint = 4;

std::string meta_line(const RunConfig& cfg) {
  return "config=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed);
}

void write_text(const RunConfig& cfg, const std::string& path,
                const std::string& body) {
  nbe::write_file(path, "# " + meta_line(cfg) + "\n" + body);
}

void require_file(const std::string& path) {
  if (!fs::exists(path))
    throw fs::filesystem_error("missing input file", path,
                               std::make_error_code(std::errc::no_such_file_or_directory));
}

std::vector<std::string> param_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& p : cfg.prior.params) names.push_back(p.name);
  return names;
}

std::string timing_field(const RunConfig& cfg, double seconds) {
  return cfg.reproducible ? "NA" : nbe::format_double(seconds);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
  nbe::reject_unknown_keys(cfg.simulate_section, "simulate", {"count", "theta"});
  const int count = cfg.simulate_section.value("count", 1);
  const auto problem = nbe::make_problem(cfg.prior, cfg.model_enum(),
                                         cfg.train.m, cfg.gp_fixed);
  fs::create_directories(cfg.out_dir);
  json manifest;
  manifest["config"] = cfg.hash_hex();
  manifest["seed"] = cfg.seed;
  manifest["model"] = cfg.model;
  manifest["files"] = json::array();
  for (int d = 0; d < count; ++d) {
    Eigen::VectorXd theta;
    if (cfg.simulate_section.contains("theta")) {
      const auto v = cfg.simulate_section.at("theta").get<std::vector<double>>();
      theta = Eigen::Map<const Eigen::VectorXd>(v.data(), long(v.size()));
      if (theta.size() != cfg.prior.dim())
        throw nbe::ConfigError("simulate.theta has wrong length");
    } else {
      nbe::Rng rng(cfg.seed, nbe::Rng::combine(0x73696D74, std::uint64_t(d)));
      theta = problem.sample_theta(rng);
    }
    nbe::Rng rng(cfg.seed, nbe::Rng::combine(0x73696D64, std::uint64_t(d)));
    const nbe::SpatialDataset data = problem.simulate(theta, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "dataset_%04d.csv", d + 1);
    const std::string path = (fs::path(cfg.out_dir) / name).string();
    nbe::write_dataset_csv(path, data, meta_line(cfg));
    json entry;
    entry["file"] = name;
    entry["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
    json sizes = json::array();
    for (const auto& s : data.S) sizes.push_back(s.rows());
    entry["n"] = sizes;
    manifest["files"].push_back(entry);
  }
  nbe::write_file((fs::path(cfg.out_dir) / "manifest.json").string(),
                  manifest.dump(2) + "\n");
  std::cout << "simulate: wrote " << count << " dataset(s) to " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto problem = nbe::make_problem(cfg.prior, cfg.model_enum(),
                                         cfg.train.m, cfg.gp_fixed);
  fs::create_directories(cfg.out_dir);
  json meta;
  meta["model"] = cfg.model;
  meta["task"] = cfg.task;
  meta["config"] = cfg.hash_hex();
  meta["seed"] = cfg.seed;
  meta["param_names"] = param_names(cfg);

  nbe::Rng init_rng(cfg.seed, 0x696E6974);
  nbe::TrainHistory history;
  const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.nbe").string();
  if (cfg.task == "point") {
    auto net = nbe::build_point_estimator<float>(cfg.arch, init_rng);
    history = nbe::train_point(net, problem, cfg.train);
    nbe::save_checkpoint(ckpt, net, meta.dump());
  } else {
    auto net = nbe::build_interval_estimator<float>(cfg.arch, cfg.prior,
                                                    init_rng, cfg.q1, cfg.q2);
    history = nbe::train_interval(net, problem, cfg.train);
    nbe::save_checkpoint(ckpt, net, meta.dump());
  }
  write_text(cfg, (fs::path(cfg.out_dir) / "history.csv").string(),
             history.to_csv(!cfg.reproducible));
  std::cout << "train: best epoch " << history.best_epoch << " of "
            << history.stopped_epoch << ", validation risk "
            << (history.best_epoch == 0 ? history.initial_val_risk
                                        : history.val_risk[std::size_t(
                                              history.best_epoch - 1)])
            << "\n";
  return 0;
}

// Joint rescaling of every replicate's coordinates into the calibrated unit
// square; returns the scale factor.
double rescale_dataset(nbe::SpatialDataset& data) {
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto& s : data.S)
    for (long r = 0; r < s.rows(); ++r) {
      min_x = std::min(min_x, s(r, 0));
      max_x = std::max(max_x, s(r, 0));
      min_y = std::min(min_y, s(r, 1));
      max_y = std::max(max_y, s(r, 1));
    }
  const double c = std::max(max_x - min_x, max_y - min_y);
  if (!(c > 0))
    throw std::runtime_error("rescale: degenerate location configuration");
  for (auto& s : data.S) {
    s.col(0) = (s.col(0).array() - min_x) / c;
    s.col(1) = (s.col(1).array() - min_y) / c;
  }
  return c;
}

int cmd_estimate(const RunConfig& cfg, bool rescale) {
  nbe::reject_unknown_keys(cfg.estimate_section, "estimate",
                           {"checkpoint", "dataset"});
  const std::string ckpt = cfg.estimate_section.at("checkpoint").get<std::string>();
  const std::string dataset_path =
      cfg.estimate_section.at("dataset").get<std::string>();
  require_file(ckpt);
  require_file(dataset_path);

  nbe::SpatialDataset data = nbe::read_dataset_csv(dataset_path);
  double scale = 1.0;
  if (rescale) scale = rescale_dataset(data);

  const std::string kind = nbe::checkpoint_kind(ckpt);
  std::string meta_json;
  nbe::EstimateReport report;
  nbe::Rng rng(cfg.seed, 0x657374);
  std::vector<std::string> names;
  if (kind == "point") {
    const auto net = nbe::load_point_checkpoint(ckpt, &meta_json);
    const json meta = json::parse(meta_json);
    if (meta.contains("model") && meta.at("model") != cfg.model)
      throw nbe::CheckpointError("checkpoint was trained for model " +
                                 meta.at("model").get<std::string>() +
                                 ", config says " + cfg.model);
    if (meta.contains("param_names"))
      names = meta.at("param_names").get<std::vector<std::string>>();
    report = nbe::estimate_point(net, data, net.arch.rule, rng, cfg.reproducible);
  } else {
    const auto net = nbe::load_interval_checkpoint(ckpt, &meta_json);
    const json meta = json::parse(meta_json);
    if (meta.contains("model") && meta.at("model") != cfg.model)
      throw nbe::CheckpointError("checkpoint was trained for model " +
                                 meta.at("model").get<std::string>() +
                                 ", config says " + cfg.model);
    if (meta.contains("param_names"))
      names = meta.at("param_names").get<std::vector<std::string>>();
    report =
        nbe::estimate_interval(net, data, net.arch.rule, rng, cfg.reproducible);
  }
  const int p = report.interval ? int(report.lower.size())
                                : int(report.estimate.size());
  while (int(names.size()) < p) names.push_back("p" + std::to_string(names.size()));

  // back-transform the range parameter when distances were rescaled
  auto backscale = [&](int k, double v) {
    return names[std::size_t(k)] == "rho" ? v * scale : v;
  };
  std::string body;
  if (report.interval) {
    body += "param,lower,upper\n";
    for (int k = 0; k < p; ++k)
      body += names[std::size_t(k)] + "," +
              nbe::format_double(backscale(k, report.lower[k])) + "," +
              nbe::format_double(backscale(k, report.upper[k])) + "\n";
  } else {
    body += "param,estimate\n";
    for (int k = 0; k < p; ++k)
      body += names[std::size_t(k)] + "," +
              nbe::format_double(backscale(k, report.estimate[k])) + "\n";
  }
  body += "# m=" + std::to_string(report.m) +
          " seconds=" + timing_field(cfg, report.seconds) + "\n";
  fs::create_directories(cfg.out_dir);
  write_text(cfg, (fs::path(cfg.out_dir) / "estimates.csv").string(), body);
  std::cout << "estimate: wrote estimates.csv (" << report.seconds << " s)\n";
  return 0;
}

nbe::EstimatorFn gnn_point_fn(const std::string& ckpt_path, const RunConfig& cfg) {
  require_file(ckpt_path);
  auto net = std::make_shared<nbe::PointEstimator<float>>(
      nbe::load_point_checkpoint(ckpt_path));
  const bool repro = cfg.reproducible;
  return [net, repro](const nbe::SpatialDataset& data) {
    nbe::Rng rng(0);
    return nbe::estimate_point(*net, data, net->arch.rule, rng, repro).estimate;
  };
}

nbe::EstimatorFn ml_fn(const RunConfig& cfg) {
  const auto names = param_names(cfg);
  const Eigen::VectorXd lo = cfg.prior.lower_bounds();
  const Eigen::VectorXd hi = cfg.prior.upper_bounds();
  const nbe::GPParams fixed = cfg.gp_fixed;
  return [names, lo, hi, fixed](const nbe::SpatialDataset& data) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(lo.size());
    for (int i = 0; i < data.replicates(); ++i)
      sum += nbe::ml_estimate_gp(data.Z[i], data.S[i], names, lo, hi, fixed).argmin;
    return Eigen::VectorXd(sum / double(data.replicates()));
  };
}

nbe::EstimatorFn pl_fn(const RunConfig& cfg) {
  const Eigen::VectorXd lo = cfg.prior.lower_bounds();
  const Eigen::VectorXd hi = cfg.prior.upper_bounds();
  return [lo, hi](const nbe::SpatialDataset& data) {
    return nbe::pl_estimate_schlather(data, lo, hi).argmin;
  };
}

int cmd_assess(const RunConfig& cfg) {
  nbe::reject_unknown_keys(cfg.assess_section, "assess",
                           {"kind", "checkpoint", "checkpoints", "labels",
                            "n_theta", "configs", "reps", "theta0", "n_grid",
                            "baseline"});
  const std::string kind = cfg.assess_section.value("kind", "rmse");
  fs::create_directories(cfg.out_dir);
  const auto names = param_names(cfg);

  if (kind == "rmse") {
    const int n_theta = cfg.assess_section.value("n_theta", 200);
    const int n_configs = cfg.assess_section.value("configs", 4);
    const bool baseline = cfg.assess_section.value("baseline", true);
    const auto suite =
        nbe::make_test_suite(cfg.prior, cfg.model_enum(), n_theta, n_configs,
                             cfg.train.m, cfg.seed, cfg.gp_fixed);
    const auto gnn = gnn_point_fn(
        cfg.assess_section.at("checkpoint").get<std::string>(), cfg);
    const auto r_gnn = nbe::rmse_on_test(gnn, suite, cfg.workers);
    std::string body = "estimator,param,rmse\n";
    auto emit = [&](const std::string& est, const nbe::RmseReport& r) {
      for (int k = 0; k < int(names.size()); ++k)
        body += est + "," + names[std::size_t(k)] + "," +
                nbe::format_double(r.per_param[k]) + "\n";
      body += est + ",__overall__," + nbe::format_double(r.overall) + "\n";
    };
    emit("gnn", r_gnn);
    json summary;
    summary["gnn"] = r_gnn.overall;
    if (baseline) {
      const auto base = cfg.model == "gp" ? ml_fn(cfg) : pl_fn(cfg);
      const auto r_base = nbe::rmse_on_test(base, suite, cfg.workers);
      emit(cfg.model == "gp" ? "ml" : "pl", r_base);
      summary[cfg.model == "gp" ? "ml" : "pl"] = r_base.overall;
    }
    write_text(cfg, (fs::path(cfg.out_dir) / "rmse.csv").string(), body);
    nbe::write_file((fs::path(cfg.out_dir) / "summary.json").string(),
                    summary.dump(2) + "\n");
  } else if (kind == "sampling") {
    const int reps = cfg.assess_section.value("reps", 100);
    const int n_configs = cfg.assess_section.value("configs", 4);
    const auto v = cfg.assess_section.at("theta0").get<std::vector<double>>();
    const Eigen::VectorXd theta0 =
        Eigen::Map<const Eigen::VectorXd>(v.data(), long(v.size()));
    std::vector<nbe::Points> configs;
    const nbe::Domain2D domain = nbe::Domain2D::unit_square();
    for (int c = 0; c < n_configs; ++c) {
      nbe::Rng rng(cfg.seed, nbe::Rng::combine(0x61636667, std::uint64_t(c)));
      configs.push_back(nbe::sample_locations(cfg.prior.locations, domain, rng));
    }
    const auto gnn = gnn_point_fn(
        cfg.assess_section.at("checkpoint").get<std::string>(), cfg);
    const auto samples = nbe::sampling_distribution(
        gnn, theta0, configs, reps, cfg.model_enum(), cfg.train.m, cfg.seed,
        cfg.prior, cfg.gp_fixed, cfg.workers);
    std::string body = "config,rep,param,estimate\n";
    for (std::size_t c = 0; c < samples.size(); ++c)
      for (long r = 0; r < samples[c].rows(); ++r)
        for (long k = 0; k < samples[c].cols(); ++k)
          body += std::to_string(c + 1) + "," + std::to_string(r + 1) + "," +
                  names[std::size_t(k)] + "," +
                  nbe::format_double(samples[c](r, k)) + "\n";
    write_text(cfg, (fs::path(cfg.out_dir) / "sampling.csv").string(), body);
  } else if (kind == "variable_n") {
    const auto ckpts =
        cfg.assess_section.at("checkpoints").get<std::vector<std::string>>();
    std::vector<std::string> labels =
        cfg.assess_section.value("labels", std::vector<std::string>{});
    while (labels.size() < ckpts.size())
      labels.push_back("estimator" + std::to_string(labels.size() + 1));
    const auto n_grid = cfg.assess_section.at("n_grid").get<std::vector<int>>();
    const int n_theta = cfg.assess_section.value("n_theta", 100);
    std::vector<nbe::EstimatorFn> fns;
    for (const auto& c : ckpts) fns.push_back(gnn_point_fn(c, cfg));
    // constant prior-midpoint reference
    Eigen::VectorXd mid = 0.5 * (cfg.prior.lower_bounds() + cfg.prior.upper_bounds());
    fns.push_back([mid](const nbe::SpatialDataset&) { return mid; });
    labels.push_back("prior_midpoint");
    RunConfig local = cfg;
    auto suite_for_n = [&](int n) {
      nbe::PriorSpec prior = local.prior;
      prior.locations.kind = nbe::LocationPrior::Kind::Uniform;
      prior.locations.size = {n, n};
      return nbe::make_test_suite_fresh(
          prior, local.model_enum(), n_theta, local.train.m,
          nbe::Rng::combine(local.seed, std::uint64_t(n)), local.gp_fixed);
    };
    const auto curve =
        nbe::variable_n_curve(fns, n_grid, suite_for_n, cfg.workers);
    std::string body = "n,estimator,rmse\n";
    for (std::size_t gi = 0; gi < curve.n_grid.size(); ++gi)
      for (std::size_t e = 0; e < labels.size(); ++e)
        body += std::to_string(curve.n_grid[gi]) + "," + labels[e] + "," +
                nbe::format_double(curve.rmse(long(gi), long(e))) + "\n";
    write_text(cfg, (fs::path(cfg.out_dir) / "variable_n.csv").string(), body);
  } else {
    throw nbe::ConfigError("assess.kind must be rmse, sampling, or variable_n");
  }
  std::cout << "assess: done (" << kind << ")\n";
  return 0;
}

int cmd_coverage(const RunConfig& cfg) {
  nbe::reject_unknown_keys(cfg.coverage_section, "coverage",
                           {"checkpoint", "n_theta", "per_theta"});
  const std::string ckpt = cfg.coverage_section.at("checkpoint").get<std::string>();
  require_file(ckpt);
  if (nbe::checkpoint_kind(ckpt) != "interval")
    throw nbe::CheckpointError("coverage needs an interval checkpoint");
  auto net = std::make_shared<nbe::IntervalEstimator<float>>(
      nbe::load_interval_checkpoint(ckpt));
  const bool repro = cfg.reproducible;
  nbe::IntervalFn fn = [net, repro](const nbe::SpatialDataset& data) {
    nbe::Rng rng(0);
    const auto r = nbe::estimate_interval(*net, data, net->arch.rule, rng, repro);
    return std::make_pair(r.lower, r.upper);
  };
  const int n_theta = cfg.coverage_section.value("n_theta", 200);
  const int per_theta = cfg.coverage_section.value("per_theta", 5);
  const auto report = nbe::empirical_coverage(
      fn, cfg.prior, cfg.model_enum(), n_theta, per_theta, cfg.train.m,
      net->q2 - net->q1, cfg.seed, cfg.gp_fixed, cfg.workers);
  const auto names = param_names(cfg);
  std::string body = "param,coverage,nominal,n_theta,per_theta\n";
  for (int k = 0; k < int(names.size()); ++k)
    body += names[std::size_t(k)] + "," +
            nbe::format_double(report.coverage[k]) + "," +
            nbe::format_double(report.nominal) + "," +
            std::to_string(report.n_theta) + "," +
            std::to_string(report.per_theta) + "\n";
  fs::create_directories(cfg.out_dir);
  write_text(cfg, (fs::path(cfg.out_dir) / "coverage.csv").string(), body);
  std::cout << "coverage: " << report.coverage.transpose() << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  nbe::reject_unknown_keys(cfg.bench_section, "bench",
                           {"checkpoint", "sizes", "reps", "baseline"});
  const auto sizes = cfg.bench_section.value("sizes", std::vector<int>{100, 200, 400});
  const int reps = cfg.bench_section.value("reps", 20);
  const bool baseline = cfg.bench_section.value("baseline", true);
  std::vector<std::pair<std::string, nbe::EstimatorFn>> estimators;
  estimators.emplace_back(
      "gnn", gnn_point_fn(cfg.bench_section.at("checkpoint").get<std::string>(), cfg));
  if (baseline && cfg.model == "gp") estimators.emplace_back("ml", ml_fn(cfg));
  if (baseline && cfg.model == "schlather")
    estimators.emplace_back("pl", pl_fn(cfg));

  RunConfig local = cfg;
  const auto problem =
      nbe::make_problem(local.prior, local.model_enum(), local.train.m, local.gp_fixed);
  Eigen::VectorXd mid = 0.5 * (cfg.prior.lower_bounds() + cfg.prior.upper_bounds());
  auto make_dataset = [&](int n, nbe::Rng& rng) {
    nbe::PriorSpec prior = local.prior;
    prior.locations.size = {n, n};
    const auto prob = nbe::make_problem(prior, local.model_enum(), local.train.m,
                                        local.gp_fixed);
    return prob.simulate(mid, rng);
  };
  const auto rows = nbe::timing_benchmark(estimators, sizes, make_dataset, reps,
                                          cfg.seed);
  std::string body = "estimator,n,median_seconds\n";
  for (const auto& r : rows)
    body += r.name + "," + std::to_string(r.n) + "," +
            nbe::format_double(r.median_seconds) + "\n";
  fs::create_directories(cfg.out_dir);
  write_text(cfg, (fs::path(cfg.out_dir) / "bench.csv").string(), body);
  std::cout << "bench: wrote bench.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amortised neural Bayes estimation for irregular spatial data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string profile_override, out_dir_override;
  std::int64_t seed_override = -1;
  int workers_override = -1;
  bool rescale = false;
  bool no_reproducible = false;

  const std::vector<std::string> commands = {"simulate", "train",  "estimate",
                                             "assess",   "coverage", "bench"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON configuration file")
        ->required();
    sub->add_option("--seed", seed_override, "Override the config seed");
    sub->add_option("--profile", profile_override, "desk or paper");
    sub->add_option("--workers", workers_override, "Worker thread count");
    sub->add_option("--out-dir", out_dir_override, "Output directory");
    sub->add_flag("--no-reproducible", no_reproducible,
                  "Fresh randomness for neighbour subsampling; real timings in outputs");
    if (name == "estimate")
      sub->add_flag("--rescale", rescale,
                    "Rescale coordinates to the calibrated unit square");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    json raw;
    {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "error: cannot open config " << config_path << "\n";
        return kExitMissingFile;
      }
      try {
        in >> raw;
      } catch (const json::exception& e) {
        std::cerr << "error: config parse: " << e.what() << "\n";
        return kExitConfig;
      }
    }
    // flag overrides take precedence over the document
    if (seed_override >= 0) raw["seed"] = seed_override;
    if (!profile_override.empty()) raw["profile"] = profile_override;
    if (workers_override >= 0) raw["workers"] = workers_override;
    if (!out_dir_override.empty()) raw["out_dir"] = out_dir_override;
    if (no_reproducible) raw["reproducible"] = false;

    const RunConfig cfg = RunConfig::from_json(raw);

    if (cmd == "simulate") return cmd_simulate(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "estimate") return cmd_estimate(cfg, rescale);
    if (cmd == "assess") return cmd_assess(cfg);
    if (cmd == "coverage") return cmd_coverage(cfg);
    if (cmd == "bench") return cmd_bench(cfg);
    std::cerr << "error: unknown command " << cmd << "\n";
    return 1;
  } catch (const nbe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nbe::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
