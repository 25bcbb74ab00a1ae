#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nbe/train.hpp"

namespace nbe {

using EstimatorFn = std::function<Eigen::VectorXd(const SpatialDataset&)>;
using IntervalFn = std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(
    const SpatialDataset&)>;

// (theta, dataset) pairs with the location configurations that generated
// them; every dataset is reproducible from `seed`.
struct TestSuite {
  Eigen::MatrixXd thetas;  // one row per dataset
  std::vector<SpatialDataset> datasets;
  std::vector<int> config_id;   // index into `configs`, or -1 for fresh draws
  std::vector<Points> configs;  // stored location configurations
  std::uint64_t seed = 0;
  int m = 1;
};

// n_theta prior draws x n_configs location configurations sampled once from
// the location prior; one dataset per (theta, configuration) pair.
TestSuite make_test_suite(const PriorSpec& prior, SpatialModel model,
                          int n_theta, int n_configs, int m, std::uint64_t seed,
                          const GPParams& gp_fixed = {});

// Variant with a fresh location configuration for every dataset.
TestSuite make_test_suite_fresh(const PriorSpec& prior, SpatialModel model,
                                int n_theta, int m, std::uint64_t seed,
                                const GPParams& gp_fixed = {});

struct RmseReport {
  double overall = 0.0;
  Eigen::VectorXd per_param;
  int count = 0;
};

// Pooled root-mean-squared error over datasets and parameters.
RmseReport rmse_on_test(const EstimatorFn& est, const TestSuite& suite,
                        int workers = 0);

struct CoverageReport {
  Eigen::VectorXd coverage;  // per parameter
  double nominal = 0.95;
  int n_theta = 0;
  int per_theta = 0;
};

// Samples n_theta parameter vectors from the prior, simulates `per_theta`
// datasets for each (locations resampled from the location prior every
// time), and reports the fraction of datasets whose interval covers the
// truth, per parameter.
CoverageReport empirical_coverage(const IntervalFn& interval,
                                  const PriorSpec& prior, SpatialModel model,
                                  int n_theta, int per_theta, int m,
                                  double nominal, std::uint64_t seed,
                                  const GPParams& gp_fixed = {},
                                  int workers = 0);

// For each stored configuration, simulates `reps` datasets at theta0 and
// collects the estimates: result[c] is reps x p.
std::vector<Eigen::MatrixXd> sampling_distribution(
    const EstimatorFn& est, const Eigen::VectorXd& theta0,
    const std::vector<Points>& configs, int reps, SpatialModel model, int m,
    std::uint64_t seed, const PriorSpec& prior, const GPParams& gp_fixed = {},
    int workers = 0);

struct VariableNCurve {
  std::vector<int> n_grid;
  Eigen::MatrixXd rmse;  // |n_grid| x |estimators|
};

VariableNCurve variable_n_curve(
    const std::vector<EstimatorFn>& estimators, const std::vector<int>& n_grid,
    const std::function<TestSuite(int)>& suite_for_n, int workers = 0);

// Conjugate toy model theta ~ N(0,1), Z | theta ~ N(theta, 1): the exact
// posterior q-quantile given a single observation z is z/2 + sqrt(1/2) *
// Phi^{-1}(q). Used as the analytic oracle for the quantile networks.
double conjugate_quantile_oracle(double q, double z);

// Training problem for the toy model: scalar theta, one replicate holding a
// single observation at the origin.
TrainingProblem make_conjugate_problem();

// Compact box used by the interval head's logistic support mapping for the
// toy model; wide enough that the untruncated normal prior is covered to
// numerical precision.
PriorSpec conjugate_support_box(double half_width = 8.0);

struct TimingRow {
  std::string name;
  int n = 0;
  double median_seconds = 0.0;
};

// Wall-clock per estimate: one warmup call excluded, then the median of
// `reps` timed calls on a fixed dataset of each size.
std::vector<TimingRow> timing_benchmark(
    const std::vector<std::pair<std::string, EstimatorFn>>& estimators,
    const std::vector<int>& sizes,
    const std::function<SpatialDataset(int, Rng&)>& make_dataset, int reps = 20,
    std::uint64_t seed = 0);

}  // namespace nbe
