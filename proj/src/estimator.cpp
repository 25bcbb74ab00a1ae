#include "nbe/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "nbe/io.hpp"

namespace nbe {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// ArchSpec
// ---------------------------------------------------------------------------

void ArchSpec::validate() const {
  if (layers < 1) throw std::invalid_argument("ArchSpec: layers < 1");
  if (channels < 1) throw std::invalid_argument("ArchSpec: channels < 1");
  if (p < 1) throw std::invalid_argument("ArchSpec: p < 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("ArchSpec: hidden width < 1");
  if (!final_act.empty() && int(final_act.size()) != p)
    throw std::invalid_argument("ArchSpec: final_act size != p");
  rule.validate();
}

long ArchSpec::param_count() const {
  long total = 0;
  int in = 1;
  for (int l = 0; l < layers; ++l) {
    total += 2L * channels * in + channels + 1;
    in = channels;
  }
  for (int h : hidden) {
    total += long(h) * in + h;
    in = h;
  }
  total += long(p) * in + p;
  return total;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

template <typename S>
static GnnStack<S> build_stack(const ArchSpec& arch, Rng& rng) {
  GnnStack<S> stack;
  const double init_range = arch.rule.radius / 2.0;
  int in = 1;
  for (int l = 0; l < arch.layers; ++l) {
    stack.conv.push_back(
        make_graph_conv<S>(in, arch.channels, Activation::Relu, rng, init_range));
    in = arch.channels;
  }
  for (int h : arch.hidden) {
    stack.dense.push_back(make_dense<S>(in, h, Activation::Relu, rng));
    in = h;
  }
  stack.dense.push_back(make_dense<S>(in, arch.p, Activation::Identity, rng));
  return stack;
}

template <typename S>
PointEstimator<S> build_point_estimator(const ArchSpec& arch, Rng& rng) {
  arch.validate();
  PointEstimator<S> net;
  net.arch = arch;
  net.stack = build_stack<S>(arch, rng);
  return net;
}

template <typename S>
IntervalEstimator<S> build_interval_estimator(const ArchSpec& arch,
                                              const PriorSpec& prior, Rng& rng,
                                              double q1, double q2) {
  arch.validate();
  prior.validate();
  if (prior.dim() != arch.p)
    throw std::invalid_argument("build_interval_estimator: prior/arch p mismatch");
  if (!(q1 < q2) || !(q1 > 0.0) || !(q2 < 1.0))
    throw std::invalid_argument("build_interval_estimator: need 0 < q1 < q2 < 1");
  for (const auto& pp : prior.params)
    if (!std::isfinite(pp.lower) || !std::isfinite(pp.upper))
      throw std::invalid_argument(
          "build_interval_estimator: prior support must be compact (bounded), "
          "parameter " + pp.name);
  IntervalEstimator<S> net;
  net.arch = arch;
  net.arch.final_act.clear();  // interval heads use identity finals
  net.u = build_stack<S>(net.arch, rng);
  net.v = build_stack<S>(net.arch, rng);
  net.lower_bound = prior.lower_bounds();
  net.upper_bound = prior.upper_bounds();
  net.q1 = q1;
  net.q2 = q2;
  return net;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename S>
VecX<S> stack_forward(const GnnStack<S>& stack,
                      const std::vector<SpatialGraph>& graphs,
                      const std::vector<VecX<S>>& z, StackTape<S>* tape) {
  const std::size_t m = graphs.size();
  if (m == 0) throw std::invalid_argument("stack_forward: empty dataset");
  if (z.size() != m)
    throw std::invalid_argument("stack_forward: graph/data replicate mismatch");

  if (tape) tape->reps.resize(m);
  std::vector<VecX<S>> readouts(m);
  for (std::size_t i = 0; i < m; ++i) {
    MatX<S> h(z[i].size(), 1);
    h.col(0) = z[i];
    ReplicateTape<S> rep;
    rep.h0 = h;
    if (tape) rep.conv.resize(stack.conv.size());
    for (std::size_t l = 0; l < stack.conv.size(); ++l) {
      GraphConvTape<S> ct;
      h = graph_conv_apply(stack.conv[l], graphs[i], h, tape ? &ct : nullptr);
      if (tape) rep.conv[l] = std::move(ct);
    }
    readouts[i] = mean_readout(h);
    if (tape) {
      rep.readout = readouts[i];
      tape->reps[i] = std::move(rep);
    }
  }
  VecX<S> x = set_average(readouts);
  if (tape) {
    tape->t = x;
    tape->dense_out.resize(stack.dense.size());
  }
  for (std::size_t d = 0; d < stack.dense.size(); ++d) {
    x = stack.dense[d].forward(x);
    if (tape) tape->dense_out[d] = x;
  }
  return x;
}

template <typename S>
void stack_backward(const GnnStack<S>& stack,
                    const std::vector<SpatialGraph>& graphs,
                    const StackTape<S>& tape, const VecX<S>& d_out,
                    GnnStack<S>& grad) {
  // mapping module
  VecX<S> d = d_out;
  for (long di = long(stack.dense.size()) - 1; di >= 0; --di) {
    const VecX<S>& input = di == 0 ? tape.t : tape.dense_out[di - 1];
    VecX<S> d_in;
    stack.dense[di].backward(input, tape.dense_out[di], d, grad.dense[di], &d_in);
    d = std::move(d_in);
  }
  // deep-set average, then per-replicate propagation
  const S inv_m = S(1) / S(tape.reps.size());
  for (std::size_t i = 0; i < tape.reps.size(); ++i) {
    const ReplicateTape<S>& rep = tape.reps[i];
    const long n = rep.h0.rows();
    MatX<S> d_h = mean_readout_backward(VecX<S>(d * inv_m), n);
    for (long l = long(stack.conv.size()) - 1; l >= 0; --l) {
      const MatX<S>& h_in = l == 0 ? rep.h0 : rep.conv[l - 1].h_out;
      MatX<S> d_prev;
      graph_conv_backward(stack.conv[l], graphs[i], h_in, rep.conv[l], d_h,
                          grad.conv[l], l > 0 ? &d_prev : nullptr);
      if (l > 0) d_h = std::move(d_prev);
    }
  }
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

Rng dataset_rng(const SpatialDataset& data) {
  return Rng(dataset_content_hash(data), 0x676E6E);
}

void prepare_inputs(const SpatialDataset& data, const NeighbourRule& rule,
                    Rng& rng, std::vector<SpatialGraph>* graphs,
                    std::vector<VecX<float>>* z) {
  data.validate();
  if (data.empty()) throw std::invalid_argument("estimate: empty dataset");
  graphs->clear();
  z->clear();
  for (int i = 0; i < data.replicates(); ++i) {
    if (data.S[i].rows() < 1)
      throw std::invalid_argument("estimate: replicate " + std::to_string(i + 1) +
                                  " has no locations");
    graphs->push_back(build_graph(data.S[i], rule, rng));
    z->push_back(data.Z[i].cast<float>());
  }
}

EstimateReport estimate_point(const PointEstimator<float>& net,
                              const SpatialDataset& data,
                              const NeighbourRule& rule, Rng& rng,
                              bool reproducible) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng local = reproducible ? dataset_rng(data) : rng.substream(rng.next_u64());
  std::vector<SpatialGraph> graphs;
  std::vector<VecX<float>> z;
  prepare_inputs(data, rule, local, &graphs, &z);
  const VecX<float> out = stack_forward(net.stack, graphs, z);
  const VecX<float> est = point_head(net.arch, out);

  EstimateReport report;
  report.estimate = est.cast<double>();
  report.m = data.replicates();
  for (const auto& s : data.S) report.n_per_replicate.push_back(int(s.rows()));
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0).count();
  return report;
}

EstimateReport estimate_interval(const IntervalEstimator<float>& net,
                                 const SpatialDataset& data,
                                 const NeighbourRule& rule, Rng& rng,
                                 bool reproducible) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng local = reproducible ? dataset_rng(data) : rng.substream(rng.next_u64());
  std::vector<SpatialGraph> graphs;
  std::vector<VecX<float>> z;
  prepare_inputs(data, rule, local, &graphs, &z);
  const VecX<float> u = stack_forward(net.u, graphs, z);
  const VecX<float> v = stack_forward(net.v, graphs, z);

  EstimateReport report;
  report.interval = true;
  const int p = net.arch.p;
  report.lower.resize(p);
  report.upper.resize(p);
  for (int k = 0; k < p; ++k) {
    const double a = net.lower_bound[k], b = net.upper_bound[k];
    const double uk = double(u[k]);
    const double wk = uk + std::exp(std::min(double(v[k]), 30.0));
    double lo = a + (b - a) * sigmoid(uk);
    double hi = a + (b - a) * sigmoid(wk);
    // The logistic map is strictly ordered in exact arithmetic; keep it so
    // under floating-point saturation as well.
    const double tiny = (b - a) * 1e-12;
    lo = std::clamp(lo, a + tiny, b - 2 * tiny);
    hi = std::clamp(hi, lo + tiny, b - tiny);
    report.lower[k] = lo;
    report.upper[k] = hi;
  }
  report.m = data.replicates();
  for (const auto& s : data.S) report.n_per_replicate.push_back(int(s.rows()));
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'B', 'E', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

json arch_to_json(const ArchSpec& arch) {
  json j;
  j["layers"] = arch.layers;
  j["channels"] = arch.channels;
  j["hidden"] = arch.hidden;
  j["p"] = arch.p;
  std::vector<std::string> acts;
  for (Activation a : arch.final_act)
    acts.push_back(a == Activation::Exponential ? "exponential"
                   : a == Activation::Relu      ? "relu"
                                                : "identity");
  j["final_act"] = acts;
  j["rule"] = {{"radius", arch.rule.radius},
               {"max_neighbours", arch.rule.max_neighbours},
               {"strategy", arch.rule.strategy ==
                                    NeighbourRule::Strategy::RandomSubsample
                                ? "random"
                                : "minmax"}};
  return j;
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec arch;
  arch.layers = j.at("layers").get<int>();
  arch.channels = j.at("channels").get<int>();
  arch.hidden = j.at("hidden").get<std::vector<int>>();
  arch.p = j.at("p").get<int>();
  arch.final_act.clear();
  for (const auto& a : j.at("final_act")) {
    const std::string s = a.get<std::string>();
    arch.final_act.push_back(s == "exponential" ? Activation::Exponential
                             : s == "relu"      ? Activation::Relu
                                                : Activation::Identity);
  }
  const auto& r = j.at("rule");
  arch.rule.radius = r.at("radius").get<double>();
  arch.rule.max_neighbours = r.at("max_neighbours").get<int>();
  arch.rule.strategy = r.at("strategy").get<std::string>() == "minmax"
                           ? NeighbourRule::Strategy::MinMaxOrdering
                           : NeighbourRule::Strategy::RandomSubsample;
  return arch;
}

template <class Net>
std::string serialise(Net& net, const std::string& kind, const json& extra,
                      const std::string& metadata_json) {
  auto refs = tensor_refs<float>(net);
  json header;
  header["kind"] = kind;
  header["arch"] = arch_to_json(net.arch);
  for (auto it = extra.begin(); it != extra.end(); ++it)
    header[it.key()] = it.value();
  header["meta"] = json::parse(metadata_json);
  json manifest = json::array();
  for (const auto& r : refs)
    manifest.push_back({{"name", r.name}, {"rows", r.rows}, {"cols", r.cols}});
  header["tensors"] = manifest;
  const std::string header_str = header.dump();

  std::string out(kMagic, 8);
  append_u32(out, kVersion);
  append_u64(out, header_str.size());
  out += header_str;
  for (const auto& r : refs)
    for (long i = 0; i < r.count(); ++i) append_f32(out, r.data[i]);
  append_u32(out, crc32(out.data(), out.size()));
  return out;
}

struct ParsedCheckpoint {
  json header;
  std::size_t payload_off;
  std::string bytes;
};

ParsedCheckpoint parse_checkpoint(const std::string& path) {
  ParsedCheckpoint pc;
  pc.bytes = read_file(path);
  const std::string& b = pc.bytes;
  if (b.size() < 24 || std::memcmp(b.data(), kMagic, 8) != 0)
    throw CheckpointError(path + ": not a checkpoint file");
  const std::uint32_t version = read_u32(b, 8);
  if (version != kVersion)
    throw CheckpointError(path + ": unsupported checkpoint version " +
                          std::to_string(version));
  if (b.size() < 4)
    throw CheckpointError(path + ": truncated checkpoint");
  const std::uint32_t stored = read_u32(b, b.size() - 4);
  const std::uint32_t actual = crc32(b.data(), b.size() - 4);
  if (stored != actual)
    throw CheckpointError(path + ": checksum mismatch (truncated or corrupt)");
  const std::uint64_t header_len = read_u64(b, 12);
  if (20 + header_len + 4 > b.size())
    throw CheckpointError(path + ": truncated header");
  pc.header = json::parse(b.substr(20, header_len));
  pc.payload_off = 20 + header_len;
  return pc;
}

template <class Net>
void load_payload(const ParsedCheckpoint& pc, Net& net,
                  const std::string& path) {
  auto refs = tensor_refs<float>(net);
  const json& manifest = pc.header.at("tensors");
  if (manifest.size() != refs.size())
    throw CheckpointError(path + ": tensor manifest mismatch");
  std::size_t off = pc.payload_off;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    const auto& entry = manifest[t];
    if (entry.at("name").get<std::string>() != refs[t].name ||
        entry.at("rows").get<long>() != refs[t].rows ||
        entry.at("cols").get<long>() != refs[t].cols)
      throw CheckpointError(path + ": manifest entry mismatch at " +
                            refs[t].name);
    for (long i = 0; i < refs[t].count(); ++i) {
      refs[t].data[i] = read_f32(pc.bytes, off);
      off += 4;
    }
  }
  if (off + 4 != pc.bytes.size())
    throw CheckpointError(path + ": payload size mismatch");
}

}  // namespace

void save_checkpoint(const std::string& path, PointEstimator<float>& net,
                     const std::string& metadata_json) {
  write_file(path, serialise(net, "point", json::object(), metadata_json));
}

void save_checkpoint(const std::string& path, IntervalEstimator<float>& net,
                     const std::string& metadata_json) {
  json extra;
  extra["lower_bound"] = std::vector<double>(
      net.lower_bound.data(), net.lower_bound.data() + net.lower_bound.size());
  extra["upper_bound"] = std::vector<double>(
      net.upper_bound.data(), net.upper_bound.data() + net.upper_bound.size());
  extra["q1"] = net.q1;
  extra["q2"] = net.q2;
  write_file(path, serialise(net, "interval", extra, metadata_json));
}

std::string checkpoint_kind(const std::string& path) {
  return parse_checkpoint(path).header.at("kind").get<std::string>();
}

PointEstimator<float> load_point_checkpoint(const std::string& path,
                                            std::string* metadata_json) {
  const ParsedCheckpoint pc = parse_checkpoint(path);
  if (pc.header.at("kind") != "point")
    throw CheckpointError(path + ": checkpoint is not a point estimator");
  Rng rng(0);
  PointEstimator<float> net =
      build_point_estimator<float>(arch_from_json(pc.header.at("arch")), rng);
  load_payload(pc, net, path);
  if (metadata_json) *metadata_json = pc.header.at("meta").dump();
  return net;
}

IntervalEstimator<float> load_interval_checkpoint(const std::string& path,
                                                  std::string* metadata_json) {
  const ParsedCheckpoint pc = parse_checkpoint(path);
  if (pc.header.at("kind") != "interval")
    throw CheckpointError(path + ": checkpoint is not an interval estimator");
  const ArchSpec arch = arch_from_json(pc.header.at("arch"));
  const auto lo = pc.header.at("lower_bound").get<std::vector<double>>();
  const auto hi = pc.header.at("upper_bound").get<std::vector<double>>();
  PriorSpec prior;
  for (std::size_t k = 0; k < lo.size(); ++k)
    prior.params.push_back({"p" + std::to_string(k), lo[k], hi[k], false});
  Rng rng(0);
  IntervalEstimator<float> net = build_interval_estimator<float>(
      arch, prior, rng, pc.header.at("q1").get<double>(),
      pc.header.at("q2").get<double>());
  load_payload(pc, net, path);
  if (metadata_json) *metadata_json = pc.header.at("meta").dump();
  return net;
}

// ---------------------------------------------------------------------------

template PointEstimator<float> build_point_estimator<float>(const ArchSpec&, Rng&);
template PointEstimator<double> build_point_estimator<double>(const ArchSpec&, Rng&);
template IntervalEstimator<float> build_interval_estimator<float>(
    const ArchSpec&, const PriorSpec&, Rng&, double, double);
template IntervalEstimator<double> build_interval_estimator<double>(
    const ArchSpec&, const PriorSpec&, Rng&, double, double);
template VecX<float> stack_forward<float>(const GnnStack<float>&,
                                          const std::vector<SpatialGraph>&,
                                          const std::vector<VecX<float>>&,
                                          StackTape<float>*);
template VecX<double> stack_forward<double>(const GnnStack<double>&,
                                            const std::vector<SpatialGraph>&,
                                            const std::vector<VecX<double>>&,
                                            StackTape<double>*);
template void stack_backward<float>(const GnnStack<float>&,
                                    const std::vector<SpatialGraph>&,
                                    const StackTape<float>&, const VecX<float>&,
                                    GnnStack<float>&);
template void stack_backward<double>(const GnnStack<double>&,
                                     const std::vector<SpatialGraph>&,
                                     const StackTape<double>&,
                                     const VecX<double>&, GnnStack<double>&);

}  // namespace nbe
