#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbe/graph.hpp"
#include "nbe/rng.hpp"

namespace nbe {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Activation { Identity, Relu, Exponential };

template <typename S>
S apply_activation(Activation act, S x) {
  switch (act) {
    case Activation::Relu: return x > S(0) ? x : S(0);
    case Activation::Exponential: return std::exp(x);
    default: return x;
  }
}

// Derivative expressed through the activation *output*; valid for the three
// activations used here (with the ReLU subgradient at the kink set to 0).
template <typename S>
S activation_deriv_from_output(Activation act, S out) {
  switch (act) {
    case Activation::Relu: return out > S(0) ? S(1) : S(0);
    case Activation::Exponential: return out;
    default: return S(1);
  }
}

// Floored at the smallest normal so the positivity of softplus survives
// exp-underflow for very negative inputs.
template <typename S>
S softplus(S x) {
  const S v = x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::max(v, std::numeric_limits<S>::min());
}

template <typename S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                   : std::exp(x) / (S(1) + std::exp(x));
}

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename S>
struct DenseLayer {
  MatX<S> w;  // out x in
  VecX<S> b;  // out
  Activation act = Activation::Relu;

  int in() const { return int(w.cols()); }
  int out() const { return int(w.rows()); }
  long param_count() const { return w.size() + b.size(); }

  VecX<S> forward(const VecX<S>& x) const {
    if (x.size() != w.cols())
      throw std::invalid_argument("DenseLayer: input width mismatch");
    VecX<S> y = w * x + b;
    for (long i = 0; i < y.size(); ++i) y[i] = apply_activation(act, y[i]);
    return y;
  }

  // d_out is the loss gradient at the layer output; `out` the forward output.
  void backward(const VecX<S>& x, const VecX<S>& out, const VecX<S>& d_out,
                DenseLayer<S>& grad, VecX<S>* d_in) const {
    VecX<S> d_pre(out.size());
    for (long i = 0; i < out.size(); ++i)
      d_pre[i] = d_out[i] * activation_deriv_from_output(act, out[i]);
    grad.w.noalias() += d_pre * x.transpose();
    grad.b += d_pre;
    if (d_in) d_in->noalias() = w.transpose() * d_pre;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w.data(), long(w.rows()), long(w.cols()));
    f(prefix + ".b", b.data(), long(b.size()), 1L);
  }
  template <class F>
  void visit(F&& f) {
    visit(std::string("dense"), std::forward<F>(f));
  }
};

// Spatial graph convolution: node j maps to
//   g(Gamma1 h_j + |N(j)|^{-1} sum_{j' in N(j)} exp(-d_{jj'}/gamma) Gamma2 h_{j'} + b)
// with the range parameter gamma = softplus(gamma_raw) kept positive by
// construction. Empty neighbourhoods contribute a zero message.
template <typename S>
struct GraphConvLayer {
  MatX<S> gamma1;  // out x in
  MatX<S> gamma2;  // out x in
  VecX<S> bias;    // out
  S gamma_raw = S(0);
  Activation act = Activation::Relu;

  int in() const { return int(gamma1.cols()); }
  int out() const { return int(gamma1.rows()); }
  long param_count() const { return gamma1.size() + gamma2.size() + bias.size() + 1; }
  S range() const { return softplus(gamma_raw); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma1", gamma1.data(), long(gamma1.rows()), long(gamma1.cols()));
    f(prefix + ".gamma2", gamma2.data(), long(gamma2.rows()), long(gamma2.cols()));
    f(prefix + ".bias", bias.data(), long(bias.size()), 1L);
    f(prefix + ".gamma_raw", &gamma_raw, 1L, 1L);
  }
  template <class F>
  void visit(F&& f) {
    visit(std::string("conv"), std::forward<F>(f));
  }
};

template <typename S>
struct GraphConvTape {
  MatX<S> g2h;    // h_in * Gamma2', reused by the range-parameter gradient
  MatX<S> h_out;  // post-activation output
};

template <typename S>
MatX<S> graph_conv_apply(const GraphConvLayer<S>& layer, const SpatialGraph& g,
                         const MatX<S>& h_in, GraphConvTape<S>* tape = nullptr) {
  const long n = h_in.rows();
  if (n != g.size())
    throw std::invalid_argument("graph_conv_apply: node count mismatch");
  if (h_in.cols() != layer.in())
    throw std::invalid_argument("graph_conv_apply: feature width mismatch");

  const S gamma = layer.range();
  MatX<S> g2h = h_in * layer.gamma2.transpose();  // n x out
  MatX<S> pre = h_in * layer.gamma1.transpose();  // n x out
  for (long j = 0; j < n; ++j) {
    const auto& nb = g.nbr[j];
    if (nb.empty()) continue;
    const S inv = S(1) / S(nb.size());
    for (std::size_t e = 0; e < nb.size(); ++e) {
      const S w = std::exp(S(-g.dist[j][e]) / gamma) * inv;
      pre.row(j) += w * g2h.row(nb[e]);
    }
  }
  pre.rowwise() += layer.bias.transpose();
  MatX<S> h_out = pre.unaryExpr(
      [&](S x) { return apply_activation(layer.act, x); });
  if (tape) {
    tape->g2h = std::move(g2h);
    tape->h_out = h_out;
  }
  return h_out;
}

// Reverse-mode gradients of the graph convolution, including the path through
// exp(-d/gamma) and the softplus reparameterisation of gamma.
template <typename S>
void graph_conv_backward(const GraphConvLayer<S>& layer, const SpatialGraph& g,
                         const MatX<S>& h_in, const GraphConvTape<S>& tape,
                         const MatX<S>& d_out, GraphConvLayer<S>& grad,
                         MatX<S>* d_in) {
  const long n = h_in.rows();
  if (d_out.rows() != n || d_out.cols() != layer.out())
    throw std::invalid_argument("graph_conv_backward: gradient shape mismatch");

  MatX<S> d_pre(n, layer.out());
  for (long j = 0; j < n; ++j)
    for (long c = 0; c < d_pre.cols(); ++c)
      d_pre(j, c) = d_out(j, c) *
                    activation_deriv_from_output(layer.act, tape.h_out(j, c));

  grad.bias += d_pre.colwise().sum().transpose();
  grad.gamma1.noalias() += d_pre.transpose() * h_in;

  const S gamma = layer.range();
  const S inv_gamma2 = S(1) / (gamma * gamma);
  MatX<S> p2 = MatX<S>::Zero(n, layer.out());  // A' * d_pre
  S d_gamma = S(0);
  for (long j = 0; j < n; ++j) {
    const auto& nb = g.nbr[j];
    if (nb.empty()) continue;
    const S inv = S(1) / S(nb.size());
    for (std::size_t e = 0; e < nb.size(); ++e) {
      const S d = S(g.dist[j][e]);
      const S w = std::exp(-d / gamma) * inv;
      p2.row(nb[e]) += w * d_pre.row(j);
      d_gamma += d_pre.row(j).dot(tape.g2h.row(nb[e])) * w * d * inv_gamma2;
    }
  }
  grad.gamma2.noalias() += p2.transpose() * h_in;
  grad.gamma_raw += d_gamma * sigmoid(layer.gamma_raw);
  if (d_in) {
    d_in->noalias() = d_pre * layer.gamma1;
    d_in->noalias() += p2 * layer.gamma2;
  }
}

// ---------------------------------------------------------------------------
// Readout and set aggregation
// ---------------------------------------------------------------------------

template <typename S>
VecX<S> mean_readout(const MatX<S>& h) {
  if (h.rows() < 1) throw std::invalid_argument("mean_readout: empty graph");
  return h.colwise().mean().transpose();
}

template <typename S>
MatX<S> mean_readout_backward(const VecX<S>& d_r, long n) {
  MatX<S> d_h(n, d_r.size());
  d_h.rowwise() = d_r.transpose() / S(n);
  return d_h;
}

template <typename S>
VecX<S> set_average(const std::vector<VecX<S>>& rs) {
  if (rs.empty()) throw std::invalid_argument("set_average: empty set");
  VecX<S> t = rs[0];
  for (std::size_t i = 1; i < rs.size(); ++i) {
    if (rs[i].size() != t.size())
      throw std::invalid_argument("set_average: length mismatch");
    t += rs[i];
  }
  return t / S(rs.size());
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean absolute error p^{-1} sum_k |est_k - theta_k|; the subgradient at an
// exact tie is 0.
template <typename S>
S mae_loss(const VecX<S>& theta, const VecX<S>& est, VecX<S>* d_est = nullptr) {
  if (theta.size() != est.size())
    throw std::invalid_argument("mae_loss: length mismatch");
  const S inv_p = S(1) / S(theta.size());
  S loss = S(0);
  if (d_est) d_est->resize(est.size());
  for (long k = 0; k < theta.size(); ++k) {
    const S diff = est[k] - theta[k];
    loss += std::abs(diff) * inv_p;
    if (d_est)
      (*d_est)[k] = (diff > S(0) ? inv_p : (diff < S(0) ? -inv_p : S(0)));
  }
  return loss;
}

// Quantile (pinball) loss (est - theta)(I(est > theta) - q).
template <typename S>
S quantile_loss(S theta, S est, double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("quantile_loss: q outside (0,1)");
  return (est - theta) * ((est > theta ? S(1) : S(0)) - S(q));
}

// d/d_est of the pinball loss (almost everywhere).
template <typename S>
S quantile_loss_grad(S theta, S est, double q) {
  return (est > theta ? S(1) : S(0)) - S(q);
}

// Sum over parameters of the pinball losses at the two levels; q holds the
// level-q1 estimates in its first p entries and level-q2 in the second p.
template <typename S>
S joint_interval_loss(const VecX<S>& theta, const VecX<S>& q, double q1,
                      double q2, VecX<S>* d_q = nullptr) {
  if (q.size() != 2 * theta.size())
    throw std::invalid_argument("joint_interval_loss: length mismatch");
  if (!(q1 < q2))
    throw std::invalid_argument("joint_interval_loss: requires q1 < q2");
  const long p = theta.size();
  if (d_q) d_q->resize(2 * p);
  S loss = S(0);
  for (long k = 0; k < p; ++k) {
    loss += quantile_loss(theta[k], q[k], q1);
    loss += quantile_loss(theta[k], q[k + p], q2);
    if (d_q) {
      (*d_q)[k] = quantile_loss_grad(theta[k], q[k], q1);
      (*d_q)[k + p] = quantile_loss_grad(theta[k], q[k + p], q2);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Initialisation
// ---------------------------------------------------------------------------

template <typename S>
void glorot_uniform(MatX<S>& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(w.rows() + w.cols()));
  for (long i = 0; i < w.rows(); ++i)
    for (long j = 0; j < w.cols(); ++j) w(i, j) = S(rng.uniform(-limit, limit));
}

template <typename S>
DenseLayer<S> make_dense(int in, int out, Activation act, Rng& rng) {
  DenseLayer<S> l;
  l.w.resize(out, in);
  glorot_uniform(l.w, rng);
  l.b = VecX<S>::Zero(out);
  l.act = act;
  return l;
}

// gamma is initialised to half the default neighbourhood radius.
template <typename S>
GraphConvLayer<S> make_graph_conv(int in, int out, Activation act, Rng& rng,
                                  double init_range = 0.1) {
  GraphConvLayer<S> l;
  l.gamma1.resize(out, in);
  l.gamma2.resize(out, in);
  glorot_uniform(l.gamma1, rng);
  glorot_uniform(l.gamma2, rng);
  l.bias = VecX<S>::Zero(out);
  l.gamma_raw = S(softplus_inverse(init_range));
  l.act = act;
  return l;
}

// ---------------------------------------------------------------------------
// Parameter iteration, Adam, finite differences
// ---------------------------------------------------------------------------

template <typename S>
struct TensorRef {
  std::string name;
  S* data;
  long rows, cols;
  long count() const { return rows * cols; }
};

// Collects named tensor views from any object exposing
// visit(f(name, data, rows, cols)); order is the checkpoint manifest order.
template <typename S, class Net>
std::vector<TensorRef<S>> tensor_refs(Net& net) {
  std::vector<TensorRef<S>> refs;
  net.visit([&](const std::string& name, S* data, long rows, long cols) {
    refs.push_back({name, data, rows, cols});
  });
  return refs;
}

template <typename S, class Net>
long count_parameters(Net& net) {
  long total = 0;
  net.visit([&](const std::string&, S*, long rows, long cols) {
    total += rows * cols;
  });
  return total;
}

template <typename S, class Net>
void zero_tensors(Net& net) {
  net.visit([](const std::string&, S* data, long rows, long cols) {
    std::fill(data, data + rows * cols, S(0));
  });
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<S> m, v;
};

// Standard Adam with bias correction over every tensor of `params`; `grads`
// must have the same shape layout. Throws on a non-finite gradient, naming
// the offending tensor.
template <typename S, class Net>
void adam_update(Net& params, Net& grads, AdamState<S>& state) {
  auto p_refs = tensor_refs<S>(params);
  auto g_refs = tensor_refs<S>(grads);
  if (p_refs.size() != g_refs.size())
    throw std::invalid_argument("adam_update: tensor list mismatch");
  long total = 0;
  for (const auto& r : p_refs) total += r.count();
  if (long(state.m.size()) != total) {
    state.m.assign(total, S(0));
    state.v.assign(total, S(0));
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.cfg.beta2, double(state.step));
  const S b1 = S(state.cfg.beta1), b2 = S(state.cfg.beta2);
  long off = 0;
  for (std::size_t t = 0; t < p_refs.size(); ++t) {
    if (p_refs[t].count() != g_refs[t].count())
      throw std::invalid_argument("adam_update: shape mismatch in " +
                                  p_refs[t].name);
    S* p = p_refs[t].data;
    const S* g = g_refs[t].data;
    for (long i = 0; i < p_refs[t].count(); ++i) {
      if (!std::isfinite(double(g[i])))
        throw std::runtime_error("adam_update: non-finite gradient in " +
                                 p_refs[t].name);
      S& m = state.m[off + i];
      S& v = state.v[off + i];
      m = b1 * m + (S(1) - b1) * g[i];
      v = b2 * v + (S(1) - b2) * g[i] * g[i];
      const double mhat = double(m) / c1;
      const double vhat = double(v) / c2;
      p[i] -= S(state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
    }
    off += p_refs[t].count();
  }
}

struct FdReport {
  double worst_rel = 0.0;
  std::string worst_tensor;
  bool pass = true;
};

// Central-difference check of analytic gradients for every trainable tensor
// of `net`. `loss` evaluates the current net; `analytic` writes gradients
// into a zeroed clone. Keeps the worst relative error and the tensor it
// occurred in.
template <typename S, class Net, class LossFn, class GradFn>
FdReport finite_difference_check(Net& net, LossFn&& loss, GradFn&& analytic,
                                 double step = 1e-5, double tol = 1e-5) {
  Net grad = net;
  zero_tensors<S>(grad);
  analytic(grad);

  FdReport report;
  auto p_refs = tensor_refs<S>(net);
  auto g_refs = tensor_refs<S>(grad);
  for (std::size_t t = 0; t < p_refs.size(); ++t) {
    for (long i = 0; i < p_refs[t].count(); ++i) {
      S& x = p_refs[t].data[i];
      const S saved = x;
      x = saved + S(step);
      const double up = loss();
      x = saved - S(step);
      const double down = loss();
      x = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = double(g_refs[t].data[i]);
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / scale;
      if (rel > report.worst_rel) {
        report.worst_rel = rel;
        report.worst_tensor = p_refs[t].name;
      }
    }
  }
  report.pass = report.worst_rel <= tol;
  return report;
}

}  // namespace nbe
