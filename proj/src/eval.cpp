#include "nbe/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nbe/special.hpp"

namespace nbe {

namespace {

int resolve_workers(int workers) {
#ifdef _OPENMP
  return workers > 0 ? workers : omp_get_max_threads();
#else
  (void)workers;
  return 1;
#endif
}

SpatialDataset simulate_at_locations(const PriorSpec& prior, SpatialModel model,
                                     const Eigen::VectorXd& theta,
                                     const Points& s, int m,
                                     const GPParams& gp_fixed, Rng& rng) {
  SpatialDataset data;
  if (model == SpatialModel::Gp) {
    const GPParams params = gp_params_from_theta(prior, theta, gp_fixed);
    for (int i = 0; i < m; ++i) {
      data.S.push_back(s);
      data.Z.push_back(simulate_gp(s, params, rng));
    }
  } else {
    const SchlatherParams params = schlather_params_from_theta(prior, theta);
    for (int i = 0; i < m; ++i) {
      data.S.push_back(s);
      data.Z.push_back(simulate_schlather(s, params, rng));
    }
  }
  return data;
}

}  // namespace

TestSuite make_test_suite(const PriorSpec& prior, SpatialModel model,
                          int n_theta, int n_configs, int m, std::uint64_t seed,
                          const GPParams& gp_fixed) {
  prior.validate();
  if (n_theta < 1 || n_configs < 1 || m < 1)
    throw std::invalid_argument("make_test_suite: counts must be >= 1");
  TestSuite suite;
  suite.seed = seed;
  suite.m = m;
  const Domain2D domain = Domain2D::unit_square();
  for (int c = 0; c < n_configs; ++c) {
    Rng rng(seed, Rng::combine(0x636F6E66, std::uint64_t(c)));
    Points s;
    do {
      s = sample_locations(prior.locations, domain, rng);
    } while (s.rows() == 0);
    suite.configs.push_back(std::move(s));
  }
  Rng theta_rng(seed, 0x746573);
  const Eigen::MatrixXd thetas = sample_prior(prior, n_theta, theta_rng);
  suite.thetas.resize(long(n_theta) * n_configs, prior.dim());
  long row = 0;
  for (int t = 0; t < n_theta; ++t) {
    for (int c = 0; c < n_configs; ++c) {
      Rng rng(seed, Rng::combine(0x64617461, std::uint64_t(row)));
      suite.thetas.row(row) = thetas.row(t);
      suite.datasets.push_back(simulate_at_locations(
          prior, model, thetas.row(t), suite.configs[std::size_t(c)], m,
          gp_fixed, rng));
      suite.config_id.push_back(c);
      ++row;
    }
  }
  return suite;
}

TestSuite make_test_suite_fresh(const PriorSpec& prior, SpatialModel model,
                                int n_theta, int m, std::uint64_t seed,
                                const GPParams& gp_fixed) {
  prior.validate();
  TestSuite suite;
  suite.seed = seed;
  suite.m = m;
  Rng theta_rng(seed, 0x746573);
  suite.thetas = sample_prior(prior, n_theta, theta_rng);
  const Domain2D domain = Domain2D::unit_square();
  for (int t = 0; t < n_theta; ++t) {
    Rng rng(seed, Rng::combine(0x66726573, std::uint64_t(t)));
    Points s;
    do {
      s = sample_locations(prior.locations, domain, rng);
    } while (s.rows() == 0);
    suite.datasets.push_back(simulate_at_locations(
        prior, model, suite.thetas.row(t), s, m, gp_fixed, rng));
    suite.config_id.push_back(-1);
  }
  return suite;
}

RmseReport rmse_on_test(const EstimatorFn& est, const TestSuite& suite,
                        int workers) {
  const long count = long(suite.datasets.size());
  if (count == 0) throw std::invalid_argument("rmse_on_test: empty suite");
  const long p = suite.thetas.cols();
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(count, p);
  const int w = resolve_workers(workers);
#pragma omp parallel for schedule(dynamic) num_threads(w)
  for (long i = 0; i < count; ++i) {
    const Eigen::VectorXd hat = est(suite.datasets[std::size_t(i)]);
    for (long k = 0; k < p; ++k) {
      const double d = hat[k] - suite.thetas(i, k);
      sq(i, k) = d * d;
    }
  }
  RmseReport report;
  report.count = int(count);
  report.per_param = (sq.colwise().mean()).cwiseSqrt().transpose();
  report.overall = std::sqrt(sq.mean());
  return report;
}

CoverageReport empirical_coverage(const IntervalFn& interval,
                                  const PriorSpec& prior, SpatialModel model,
                                  int n_theta, int per_theta, int m,
                                  double nominal, std::uint64_t seed,
                                  const GPParams& gp_fixed, int workers) {
  prior.validate();
  const int p = prior.dim();
  const long total = long(n_theta) * per_theta;
  Rng theta_rng(seed, 0x636F76);
  const Eigen::MatrixXd thetas = sample_prior(prior, n_theta, theta_rng);
  Eigen::MatrixXd hit = Eigen::MatrixXd::Zero(total, p);
  const Domain2D domain = Domain2D::unit_square();
  const int w = resolve_workers(workers);
  std::string error;
#pragma omp parallel for schedule(dynamic) num_threads(w)
  for (long i = 0; i < total; ++i) {
    try {
      const long t = i / per_theta;
      Rng rng(seed, Rng::combine(0x63646174, std::uint64_t(i)));
      Points s;
      do {
        s = sample_locations(prior.locations, domain, rng);
      } while (s.rows() == 0);
      const SpatialDataset data = simulate_at_locations(
          prior, model, thetas.row(t), s, m, gp_fixed, rng);
      const auto [lo, hi] = interval(data);
      for (int k = 0; k < p; ++k)
        hit(i, k) = (thetas(t, k) >= lo[k] && thetas(t, k) <= hi[k]) ? 1.0 : 0.0;
    } catch (const std::exception& ex) {
#pragma omp critical
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("empirical_coverage: " + error);
  CoverageReport report;
  report.coverage = hit.colwise().mean().transpose();
  report.nominal = nominal;
  report.n_theta = n_theta;
  report.per_theta = per_theta;
  return report;
}

std::vector<Eigen::MatrixXd> sampling_distribution(
    const EstimatorFn& est, const Eigen::VectorXd& theta0,
    const std::vector<Points>& configs, int reps, SpatialModel model, int m,
    std::uint64_t seed, const PriorSpec& prior, const GPParams& gp_fixed,
    int workers) {
  std::vector<Eigen::MatrixXd> out(configs.size());
  const int w = resolve_workers(workers);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    out[c].resize(reps, theta0.size());
#pragma omp parallel for schedule(dynamic) num_threads(w)
    for (int r = 0; r < reps; ++r) {
      Rng rng(seed, Rng::combine(Rng::combine(0x73616D70, std::uint64_t(c)),
                                 std::uint64_t(r)));
      const SpatialDataset data = simulate_at_locations(
          prior, model, theta0, configs[c], m, gp_fixed, rng);
      out[c].row(r) = est(data);
    }
  }
  return out;
}

VariableNCurve variable_n_curve(
    const std::vector<EstimatorFn>& estimators, const std::vector<int>& n_grid,
    const std::function<TestSuite(int)>& suite_for_n, int workers) {
  VariableNCurve curve;
  curve.n_grid = n_grid;
  curve.rmse.resize(long(n_grid.size()), long(estimators.size()));
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const TestSuite suite = suite_for_n(n_grid[gi]);
    for (std::size_t e = 0; e < estimators.size(); ++e)
      curve.rmse(long(gi), long(e)) =
          rmse_on_test(estimators[e], suite, workers).overall;
  }
  return curve;
}

double conjugate_quantile_oracle(double q, double z) {
  return 0.5 * z + std::sqrt(0.5) * normal_quantile(q);
}

TrainingProblem make_conjugate_problem() {
  TrainingProblem prob;
  prob.p = 1;
  prob.sample_theta = [](Rng& rng) {
    Eigen::VectorXd theta(1);
    theta[0] = rng.normal();
    return theta;
  };
  prob.simulate = [](const Eigen::VectorXd& theta, Rng& rng) {
    SpatialDataset data;
    data.S.push_back(Points::Zero(1, 2));
    Eigen::VectorXd z(1);
    z[0] = theta[0] + rng.normal();
    data.Z.push_back(z);
    return data;
  };
  return prob;
}

PriorSpec conjugate_support_box(double half_width) {
  PriorSpec prior;
  prior.params.push_back({"theta", -half_width, half_width, false});
  prior.locations.kind = LocationPrior::Kind::Uniform;
  prior.locations.size = {1, 1};
  return prior;
}

std::vector<TimingRow> timing_benchmark(
    const std::vector<std::pair<std::string, EstimatorFn>>& estimators,
    const std::vector<int>& sizes,
    const std::function<SpatialDataset(int, Rng&)>& make_dataset, int reps,
    std::uint64_t seed) {
  if (reps < 1) throw std::invalid_argument("timing_benchmark: reps < 1");
  std::vector<TimingRow> rows;
  for (int n : sizes) {
    Rng rng(seed, Rng::combine(0x62656E63, std::uint64_t(n)));
    const SpatialDataset data = make_dataset(n, rng);
    for (const auto& [name, est] : estimators) {
      (void)est(data);  // warmup, excluded
      std::vector<double> times;
      times.reserve(std::size_t(reps));
      for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)est(data);
        times.push_back(std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0).count());
      }
      std::sort(times.begin(), times.end());
      rows.push_back({name, n, times[times.size() / 2]});
    }
  }
  return rows;
}

}  // namespace nbe
