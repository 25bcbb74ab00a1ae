#include "nbe/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nbe/io.hpp"

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

std::uint64_t stream_id(const char* tag, std::uint64_t a = 0,
                        std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = fnv1a(tag, std::strlen(tag));
  h = Rng::combine(h, a);
  h = Rng::combine(h, b);
  h = Rng::combine(h, c);
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (k_train < 1 || k_val < 1 || j < 1 || m < 1 || batch < 1 || patience < 1 ||
      max_epochs < 1)
    throw std::invalid_argument("TrainConfig: all counts must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr <= 0");
}

std::string TrainHistory::to_csv(bool include_timing) const {
  std::string out = "epoch,train_risk,val_risk,seconds\n";
  for (std::size_t e = 0; e < val_risk.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(train_risk[e]) + "," +
           format_double(val_risk[e]) + "," +
           (include_timing ? format_double(seconds[e]) : std::string("0")) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model plumbing
// ---------------------------------------------------------------------------

GPParams gp_params_from_theta(const PriorSpec& prior,
                              const Eigen::VectorXd& theta,
                              const GPParams& fixed) {
  GPParams p = fixed;
  for (int k = 0; k < prior.dim(); ++k) {
    const std::string& name = prior.params[k].name;
    if (name == "tau")
      p.tau = theta[k];
    else if (name == "rho")
      p.rho = theta[k];
    else if (name == "sigma2")
      p.sigma2 = theta[k];
    else if (name == "nu")
      p.nu = theta[k];
    else
      throw std::invalid_argument("gp model: unknown parameter " + name);
  }
  return p;
}

SchlatherParams schlather_params_from_theta(const PriorSpec& prior,
                                            const Eigen::VectorXd& theta) {
  SchlatherParams p;
  for (int k = 0; k < prior.dim(); ++k) {
    const std::string& name = prior.params[k].name;
    if (name == "rho")
      p.rho = theta[k];
    else if (name == "nu")
      p.nu = theta[k];
    else
      throw std::invalid_argument("schlather model: unknown parameter " + name);
  }
  return p;
}

TrainingProblem make_problem(const PriorSpec& prior, SpatialModel model, int m,
                             const GPParams& gp_fixed,
                             const SchlatherOpts& schlather_opts) {
  prior.validate();
  if (m < 1) throw std::invalid_argument("make_problem: m < 1");
  TrainingProblem prob;
  prob.p = prior.dim();
  prob.sample_theta = [prior](Rng& rng) {
    Eigen::VectorXd theta(prior.dim());
    for (int k = 0; k < prior.dim(); ++k)
      theta[k] = rng.uniform(prior.params[k].lower, prior.params[k].upper);
    return theta;
  };
  const Domain2D domain = Domain2D::unit_square();
  if (model == SpatialModel::Gp) {
    prob.simulate = [prior, gp_fixed, m, domain](const Eigen::VectorXd& theta,
                                                 Rng& rng) {
      const GPParams params = gp_params_from_theta(prior, theta, gp_fixed);
      SpatialDataset data;
      for (int i = 0; i < m; ++i) {
        Points s;
        do {
          s = sample_locations(prior.locations, domain, rng);
        } while (s.rows() == 0);
        data.Z.push_back(simulate_gp(s, params, rng));
        data.S.push_back(std::move(s));
      }
      return data;
    };
  } else {
    prob.simulate = [prior, schlather_opts, m, domain](
                        const Eigen::VectorXd& theta, Rng& rng) {
      const SchlatherParams params = schlather_params_from_theta(prior, theta);
      SpatialDataset data;
      Points s;
      do {
        s = sample_locations(prior.locations, domain, rng);
      } while (s.rows() == 0);
      // replicate fields share the location configuration of the dataset
      for (int i = 0; i < m; ++i) {
        data.S.push_back(s);
        data.Z.push_back(simulate_schlather(s, params, rng, schlather_opts));
      }
      return data;
    };
  }
  return prob;
}

// ---------------------------------------------------------------------------
// Loss adapters
// ---------------------------------------------------------------------------

namespace {

struct PointPolicy {
  using Net = PointEstimator<float>;
  static double loss_grad(const Net& net, const std::vector<SpatialGraph>& graphs,
                          const std::vector<VecX<float>>& z,
                          const Eigen::VectorXd& theta, const LossSpec&,
                          float weight, Net* grad) {
    StackTape<float> tape;
    const VecX<float> out =
        stack_forward(net.stack, graphs, z, grad ? &tape : nullptr);
    const VecX<float> est = point_head(net.arch, out);
    const VecX<float> theta_f = theta.cast<float>();
    VecX<float> d_est;
    const float loss = mae_loss(theta_f, est, grad ? &d_est : nullptr);
    if (grad) {
      VecX<float> d_out(est.size());
      for (long k = 0; k < est.size(); ++k) {
        const Activation a = net.arch.final_act.empty() ? Activation::Identity
                                                        : net.arch.final_act[k];
        d_out[k] = d_est[k] * activation_deriv_from_output(a, est[k]) * weight;
      }
      stack_backward(net.stack, graphs, tape, d_out, grad->stack);
    }
    return double(loss);
  }
};

struct IntervalPolicy {
  using Net = IntervalEstimator<float>;
  static double loss_grad(const Net& net, const std::vector<SpatialGraph>& graphs,
                          const std::vector<VecX<float>>& z,
                          const Eigen::VectorXd& theta, const LossSpec& loss_spec,
                          float weight, Net* grad) {
    StackTape<float> ut, vt;
    const VecX<float> u =
        stack_forward(net.u, graphs, z, grad ? &ut : nullptr);
    const VecX<float> v =
        stack_forward(net.v, graphs, z, grad ? &vt : nullptr);
    const int p = net.arch.p;
    VecX<float> q(2 * p), s1(p), s2(p), ev(p);
    for (int k = 0; k < p; ++k) {
      const float a = float(net.lower_bound[k]), b = float(net.upper_bound[k]);
      s1[k] = sigmoid(u[k]);
      ev[k] = std::exp(v[k]);
      s2[k] = sigmoid(u[k] + ev[k]);
      q[k] = a + (b - a) * s1[k];
      q[k + p] = a + (b - a) * s2[k];
    }
    const VecX<float> theta_f = theta.cast<float>();
    VecX<float> d_q;
    const float loss = joint_interval_loss(theta_f, q, loss_spec.q1, loss_spec.q2,
                                           grad ? &d_q : nullptr);
    if (grad) {
      VecX<float> d_u(p), d_v(p);
      for (int k = 0; k < p; ++k) {
        const float ba = float(net.upper_bound[k] - net.lower_bound[k]);
        const float g1 = ba * s1[k] * (1.0f - s1[k]);
        const float g2 = ba * s2[k] * (1.0f - s2[k]);
        d_u[k] = (d_q[k] * g1 + d_q[k + p] * g2) * weight;
        d_v[k] = d_q[k + p] * g2 * ev[k] * weight;
      }
      stack_backward(net.u, graphs, ut, d_u, grad->u);
      stack_backward(net.v, graphs, vt, d_v, grad->v);
    }
    return double(loss);
  }
};

template <typename S, class Net>
void add_tensors(Net& dst, Net& src) {
  auto d = tensor_refs<S>(dst);
  auto s = tensor_refs<S>(src);
  for (std::size_t t = 0; t < d.size(); ++t)
    for (long i = 0; i < d[t].count(); ++i) d[t].data[i] += s[t].data[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

ValidationSet make_validation_set(const TrainingProblem& prob, int k, int j,
                                  const NeighbourRule& rule, std::uint64_t seed,
                                  int workers) {
  ValidationSet val;
  val.entries.resize(std::size_t(k) * j);
  const int w = resolve_workers(workers);
#pragma omp parallel for schedule(static) num_threads(w)
  for (int idx = 0; idx < k * j; ++idx) {
    const int ki = idx / j, ji = idx % j;
    Rng rng_theta(seed, stream_id("theta_val", std::uint64_t(ki)));
    ValEntry entry;
    entry.theta = prob.sample_theta(rng_theta);
    Rng rng_data(seed, stream_id("val_data", std::uint64_t(ki), std::uint64_t(ji)));
    entry.data = prob.simulate(entry.theta, rng_data);
    for (int r = 0; r < entry.data.replicates(); ++r) {
      entry.graphs.push_back(build_graph(entry.data.S[r], rule, rng_data));
      entry.z.push_back(entry.data.Z[r].cast<float>());
    }
    val.entries[std::size_t(idx)] = std::move(entry);
  }
  return val;
}

namespace {

template <class Policy>
double validation_risk_impl(const typename Policy::Net& net,
                            const ValidationSet& val, const LossSpec& loss,
                            int workers) {
  if (val.entries.empty())
    throw std::invalid_argument("validation_risk: empty validation set");
  const int w = resolve_workers(workers);
  std::vector<double> partial(std::size_t(w), 0.0);
#pragma omp parallel for schedule(static) num_threads(w)
  for (long i = 0; i < long(val.entries.size()); ++i) {
#ifdef _OPENMP
    const int t = omp_get_thread_num();
#else
    const int t = 0;
#endif
    const ValEntry& e = val.entries[std::size_t(i)];
    partial[std::size_t(t)] +=
        Policy::loss_grad(net, e.graphs, e.z, e.theta, loss, 0.0f, nullptr);
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total / double(val.entries.size());
}

}  // namespace

double validation_risk(const PointEstimator<float>& net, const ValidationSet& val,
                       const LossSpec& loss, int workers) {
  return validation_risk_impl<PointPolicy>(net, val, loss, workers);
}

double validation_risk(const IntervalEstimator<float>& net,
                       const ValidationSet& val, const LossSpec& loss,
                       int workers) {
  return validation_risk_impl<IntervalPolicy>(net, val, loss, workers);
}

double risk(const std::function<Eigen::VectorXd(const SpatialDataset&)>& est,
            const std::vector<std::pair<Eigen::VectorXd, SpatialDataset>>& entries,
            const LossSpec& loss) {
  if (entries.empty()) throw std::invalid_argument("risk: empty set");
  double total = 0.0;
  for (const auto& [theta, data] : entries) {
    const Eigen::VectorXd out = est(data);
    if (loss.kind == LossSpec::Kind::Mae) {
      total += mae_loss<double>(theta, out, nullptr);
    } else {
      total += joint_interval_loss<double>(theta, out, loss.q1, loss.q2, nullptr);
    }
  }
  return total / double(entries.size());
}

// ---------------------------------------------------------------------------
// Training engine
// ---------------------------------------------------------------------------

namespace {

template <class Policy>
TrainHistory train_engine(typename Policy::Net& net, const TrainingProblem& prob,
                          const LossSpec& loss, const TrainConfig& cfg) {
  using Net = typename Policy::Net;
  cfg.validate();
  if (prob.p != net.arch.p)
    throw std::invalid_argument("train: problem/network dimension mismatch");
  const int w = resolve_workers(cfg.workers);
  const NeighbourRule rule = net.arch.rule;

  // Parameter samples are fixed for the whole run.
  std::vector<Eigen::VectorXd> thetas(std::size_t(cfg.k_train));
  for (int k = 0; k < cfg.k_train; ++k) {
    Rng r(cfg.seed, stream_id("theta_train", std::uint64_t(k)));
    thetas[std::size_t(k)] = prob.sample_theta(r);
  }
  const ValidationSet val =
      make_validation_set(prob, cfg.k_val, cfg.j, rule, cfg.seed, w);

  TrainHistory history;
  history.initial_val_risk = validation_risk_impl<Policy>(net, val, loss, w);

  EarlyStopper stopper(cfg.patience);
  stopper.observe(0, history.initial_val_risk);
  Net best = net;

  AdamState<float> adam;
  adam.cfg.lr = cfg.lr;

  Net grad = net;
  std::vector<Net> thread_grads(std::size_t(w), net);

  Rng shuffle_rng(cfg.seed, stream_id("epoch_order"));
  std::vector<int> order(std::size_t(cfg.k_train));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // fresh pass order per epoch
    for (int i = cfg.k_train - 1; i > 0; --i)
      std::swap(order[std::size_t(i)],
                order[std::size_t(shuffle_rng.uniform_int(0, i))]);

    double loss_sum = 0.0;
    std::uint64_t epoch_hash = 0;
    std::string error;

    for (int start = 0; start < cfg.k_train; start += cfg.batch) {
      const int bsize = std::min(cfg.batch, cfg.k_train - start);
      const int jobs = bsize * cfg.j;
      const float weight = 1.0f / float(bsize * cfg.j);
      for (int t = 0; t < w; ++t) zero_tensors<float>(thread_grads[std::size_t(t)]);
      std::vector<double> loss_partial(std::size_t(w), 0.0);
      std::vector<std::uint64_t> hash_partial(std::size_t(w), 0);

#pragma omp parallel for schedule(static) num_threads(w)
      for (int job = 0; job < jobs; ++job) {
#ifdef _OPENMP
        const int t = omp_get_thread_num();
#else
        const int t = 0;
#endif
        try {
          const int k = order[std::size_t(start + job / cfg.j)];
          const int ji = job % cfg.j;
          // On-the-fly simulation: data (and locations) fresh every epoch.
          Rng rng_d(cfg.seed, stream_id("train_data", std::uint64_t(epoch),
                                        std::uint64_t(k), std::uint64_t(ji)));
          const SpatialDataset data =
              prob.simulate(thetas[std::size_t(k)], rng_d);
          std::vector<SpatialGraph> graphs;
          std::vector<VecX<float>> z;
          graphs.reserve(data.S.size());
          z.reserve(data.S.size());
          for (int r = 0; r < data.replicates(); ++r) {
            graphs.push_back(build_graph(data.S[r], rule, rng_d));
            z.push_back(data.Z[r].cast<float>());
          }
          const double l = Policy::loss_grad(net, graphs, z,
                                             thetas[std::size_t(k)], loss, weight,
                                             &thread_grads[std::size_t(t)]);
          if (!std::isfinite(l))
            throw std::runtime_error(
                "non-finite loss at epoch " + std::to_string(epoch) +
                ", parameter vector " + std::to_string(k) + ", dataset " +
                std::to_string(ji));
          loss_partial[std::size_t(t)] += l;
          hash_partial[std::size_t(t)] ^= dataset_content_hash(data);
        } catch (const std::exception& ex) {
#pragma omp critical
          if (error.empty()) error = ex.what();
        }
      }
      if (!error.empty()) throw std::runtime_error("train: " + error);

      // deterministic reduction: thread partials merged in thread order
      zero_tensors<float>(grad);
      for (int t = 0; t < w; ++t) {
        add_tensors<float>(grad, thread_grads[std::size_t(t)]);
        loss_sum += loss_partial[std::size_t(t)];
        epoch_hash ^= hash_partial[std::size_t(t)];
      }
      adam_update(net, grad, adam);
    }

    const double train_risk = loss_sum / double(cfg.k_train * cfg.j);
    const double val_risk = validation_risk_impl<Policy>(net, val, loss, w);
    history.train_risk.push_back(train_risk);
    history.val_risk.push_back(val_risk);
    history.data_hash.push_back(epoch_hash);
    history.seconds.push_back(std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - t0).count());
    if (stopper.observe(epoch, val_risk)) best = net;
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %3d  train %.5f  val %.5f  (best %.5f @ %d)\n",
                   epoch, train_risk, val_risk, stopper.best, stopper.best_epoch);
    history.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }
  net = best;
  history.best_epoch = stopper.best_epoch;
  return history;
}

}  // namespace

TrainHistory train_point(PointEstimator<float>& net, const TrainingProblem& prob,
                         const TrainConfig& cfg) {
  return train_engine<PointPolicy>(net, prob, LossSpec{}, cfg);
}

TrainHistory train_interval(IntervalEstimator<float>& net,
                            const TrainingProblem& prob, const TrainConfig& cfg) {
  LossSpec loss;
  loss.kind = LossSpec::Kind::JointInterval;
  loss.q1 = net.q1;
  loss.q2 = net.q2;
  return train_engine<IntervalPolicy>(net, prob, loss, cfg);
}

TrainHistory train(PointEstimator<float>& net, const PriorSpec& prior,
                   SpatialModel model, const LossSpec& loss,
                   const TrainConfig& cfg, const GPParams& gp_fixed) {
  if (loss.kind != LossSpec::Kind::Mae)
    throw std::invalid_argument("train: point estimators use the MAE loss");
  return train_point(net, make_problem(prior, model, cfg.m, gp_fixed), cfg);
}

TrainHistory train(IntervalEstimator<float>& net, const PriorSpec& prior,
                   SpatialModel model, const TrainConfig& cfg,
                   const GPParams& gp_fixed) {
  return train_interval(net, make_problem(prior, model, cfg.m, gp_fixed), cfg);
}

}  // namespace nbe
