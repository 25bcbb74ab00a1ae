#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nbe/estimator.hpp"
#include "nbe/simulate.hpp"

namespace nbe {

enum class SpatialModel { Gp, Schlather };

struct LossSpec {
  enum class Kind { Mae, JointInterval };
  Kind kind = Kind::Mae;
  double q1 = 0.025, q2 = 0.975;
};

struct TrainConfig {
  int k_train = 1000;  // parameter vectors in the training set
  int k_val = 200;     // parameter vectors in the validation set
  int j = 5;           // datasets per parameter vector
  int m = 1;           // replicate fields per dataset
  int batch = 32;      // parameter vectors per gradient step
  int patience = 5;    // epochs without validation improvement before stopping
  int max_epochs = 100;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = all available cores
  bool verbose = false;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_risk, val_risk, seconds;
  std::vector<std::uint64_t> data_hash;  // per-epoch hash of the simulated data
  double initial_val_risk = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;  // 1-based; 0 means the initial parameters were best
  int stopped_epoch = 0;

  // epoch,train_risk,val_risk,seconds. Timing is volatile; reproducible runs
  // write a zero column instead.
  std::string to_csv(bool include_timing = true) const;
};

// Stops after `patience` consecutive epochs without strict improvement of the
// validation risk; the parameters from the best epoch are kept.
struct EarlyStopper {
  explicit EarlyStopper(int patience) : patience(patience) {}
  int patience;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_improvement = 0;

  // Returns true when `risk` strictly improves on the best so far.
  bool observe(int epoch, double risk) {
    if (risk < best) {
      best = risk;
      best_epoch = epoch;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return false;
  }
  bool should_stop() const { return since_improvement >= patience; }
};

// What the trainer drives: a prior sampler for theta and a dataset simulator
// (locations drawn fresh inside each call).
struct TrainingProblem {
  int p = 0;
  std::function<Eigen::VectorXd(Rng&)> sample_theta;
  std::function<SpatialDataset(const Eigen::VectorXd&, Rng&)> simulate;
};

// Maps a free-parameter vector (ordered as prior.params) onto the model
// parameter structs; unnamed components keep the values in `fixed`.
GPParams gp_params_from_theta(const PriorSpec& prior,
                              const Eigen::VectorXd& theta,
                              const GPParams& fixed);
SchlatherParams schlather_params_from_theta(const PriorSpec& prior,
                                            const Eigen::VectorXd& theta);

TrainingProblem make_problem(const PriorSpec& prior, SpatialModel model, int m,
                             const GPParams& gp_fixed = {},
                             const SchlatherOpts& schlather_opts = {});

// Fixed validation material: simulated datasets with their graphs and casts.
struct ValEntry {
  Eigen::VectorXd theta;
  SpatialDataset data;
  std::vector<SpatialGraph> graphs;
  std::vector<VecX<float>> z;
};
struct ValidationSet {
  std::vector<ValEntry> entries;
};

ValidationSet make_validation_set(const TrainingProblem& prob, int k, int j,
                                  const NeighbourRule& rule, std::uint64_t seed,
                                  int workers = 0);

double validation_risk(const PointEstimator<float>& net,
                       const ValidationSet& val, const LossSpec& loss,
                       int workers = 0);
double validation_risk(const IntervalEstimator<float>& net,
                       const ValidationSet& val, const LossSpec& loss,
                       int workers = 0);

// Risk of an arbitrary estimator function over (theta, dataset) pairs; the
// function must return p values for MAE and 2p for the joint interval loss.
double risk(const std::function<Eigen::VectorXd(const SpatialDataset&)>& est,
            const std::vector<std::pair<Eigen::VectorXd, SpatialDataset>>& entries,
            const LossSpec& loss);

// Monte-Carlo risk minimisation with on-the-fly data simulation: theta
// samples and validation data are fixed up front, training data (including
// the location configurations) are regenerated every epoch, and optimisation
// stops when the validation risk has not decreased in `patience` consecutive
// epochs. The returned network carries the best-epoch parameters.
TrainHistory train_point(PointEstimator<float>& net, const TrainingProblem& prob,
                         const TrainConfig& cfg);
TrainHistory train_interval(IntervalEstimator<float>& net,
                            const TrainingProblem& prob, const TrainConfig& cfg);

// Convenience wrappers taking the spatial model by name.
TrainHistory train(PointEstimator<float>& net, const PriorSpec& prior,
                   SpatialModel model, const LossSpec& loss,
                   const TrainConfig& cfg, const GPParams& gp_fixed = {});
TrainHistory train(IntervalEstimator<float>& net, const PriorSpec& prior,
                   SpatialModel model, const TrainConfig& cfg,
                   const GPParams& gp_fixed = {});

}  // namespace nbe
