#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbe/nn.hpp"
#include "nbe/types.hpp"

namespace nbe {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Architecture descriptor: L propagation layers feeding a mean readout whose
// width equals the channel count, then a dense mapping to p outputs.
struct ArchSpec {
  int layers = 4;
  int channels = 128;
  std::vector<int> hidden = {128, 128};
  int p = 2;
  std::vector<Activation> final_act;  // per output; empty means all identity
  NeighbourRule rule;

  void validate() const;
  long param_count() const;  // trainable scalars in one stack
};

// Inner network psi (propagation + readout) composed with the mapping phi.
// The final dense layer is linear; output transforms live in the heads.
template <typename S>
struct GnnStack {
  std::vector<GraphConvLayer<S>> conv;
  std::vector<DenseLayer<S>> dense;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < conv.size(); ++i)
      conv[i].visit(prefix + "conv" + std::to_string(i + 1), f);
    for (std::size_t i = 0; i < dense.size(); ++i)
      dense[i].visit(prefix + "dense" + std::to_string(i + 1), f);
  }
};

template <typename S>
struct ReplicateTape {
  MatX<S> h0;
  std::vector<GraphConvTape<S>> conv;
  VecX<S> readout;
};

template <typename S>
struct StackTape {
  std::vector<ReplicateTape<S>> reps;
  VecX<S> t;
  std::vector<VecX<S>> dense_out;
};

// Runs the full stack over a dataset's replicates: per-replicate propagation
// and readout, elementwise average across replicates, then the mapping.
template <typename S>
VecX<S> stack_forward(const GnnStack<S>& stack,
                      const std::vector<SpatialGraph>& graphs,
                      const std::vector<VecX<S>>& z, StackTape<S>* tape = nullptr);

template <typename S>
void stack_backward(const GnnStack<S>& stack,
                    const std::vector<SpatialGraph>& graphs,
                    const StackTape<S>& tape, const VecX<S>& d_out,
                    GnnStack<S>& grad);

template <typename S>
struct PointEstimator {
  ArchSpec arch;
  GnnStack<S> stack;

  template <class F>
  void visit(F&& f) {
    stack.visit("", f);
  }
};

// Interval estimator with two parallel stacks U and V. Estimates take the
// form [g_k(U_k), g_k(U_k + exp(V_k))] with g_k the logistic map onto the
// prior support of parameter k, so the endpoints are ordered and contained
// in the support for any network weights.
template <typename S>
struct IntervalEstimator {
  ArchSpec arch;
  GnnStack<S> u, v;
  Eigen::VectorXd lower_bound, upper_bound;
  double q1 = 0.025, q2 = 0.975;

  template <class F>
  void visit(F&& f) {
    u.visit("u.", f);
    v.visit("v.", f);
  }
};

template <typename S>
PointEstimator<S> build_point_estimator(const ArchSpec& arch, Rng& rng);

template <typename S>
IntervalEstimator<S> build_interval_estimator(const ArchSpec& arch,
                                              const PriorSpec& prior, Rng& rng,
                                              double q1 = 0.025,
                                              double q2 = 0.975);

// Point-head output transform: exponential for positive parameters, identity
// otherwise.
template <typename S>
VecX<S> point_head(const ArchSpec& arch, const VecX<S>& out) {
  VecX<S> est = out;
  for (long k = 0; k < est.size(); ++k) {
    const Activation a =
        arch.final_act.empty() ? Activation::Identity : arch.final_act[k];
    est[k] = apply_activation(a, est[k]);
  }
  return est;
}

struct EstimateReport {
  std::vector<std::string> param_names;
  Eigen::VectorXd estimate;       // point task
  Eigen::VectorXd lower, upper;   // interval task
  bool interval = false;
  double seconds = 0.0;
  int m = 0;
  std::vector<int> n_per_replicate;
};

// Evaluates an estimator on a dataset. With `reproducible` set, the random
// neighbour subsample is seeded from the dataset content, so repeated calls
// agree; otherwise it draws from `rng`.
EstimateReport estimate_point(const PointEstimator<float>& net,
                              const SpatialDataset& data,
                              const NeighbourRule& rule, Rng& rng,
                              bool reproducible = true);

EstimateReport estimate_interval(const IntervalEstimator<float>& net,
                                 const SpatialDataset& data,
                                 const NeighbourRule& rule, Rng& rng,
                                 bool reproducible = true);

// Builds per-replicate graphs and casts data for a forward pass.
void prepare_inputs(const SpatialDataset& data, const NeighbourRule& rule,
                    Rng& rng, std::vector<SpatialGraph>* graphs,
                    std::vector<VecX<float>>* z);

// Content-derived RNG for reproducible graph construction.
Rng dataset_rng(const SpatialDataset& data);

// ---------------------------------------------------------------------------
// Checkpoints: magic, format version, JSON header (arch + metadata + tensor
// manifest), float32 little-endian payload in manifest order, CRC32 trailer.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, PointEstimator<float>& net,
                     const std::string& metadata_json = "{}");
void save_checkpoint(const std::string& path, IntervalEstimator<float>& net,
                     const std::string& metadata_json = "{}");

// "point" or "interval" without loading the weights.
std::string checkpoint_kind(const std::string& path);

PointEstimator<float> load_point_checkpoint(const std::string& path,
                                            std::string* metadata_json = nullptr);
IntervalEstimator<float> load_interval_checkpoint(
    const std::string& path, std::string* metadata_json = nullptr);

}  // namespace nbe
