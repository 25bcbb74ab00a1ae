#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "nbe/estimator.hpp"
#include "nbe/io.hpp"
#include "nbe/simulate.hpp"

using namespace nbe;
namespace fs = std::filesystem;

namespace {

ArchSpec default_arch(int p) {
  ArchSpec arch;
  arch.p = p;
  arch.final_act.assign(std::size_t(p), Activation::Exponential);
  return arch;
}

PriorSpec gp_prior() {
  PriorSpec prior;
  prior.params.push_back({"tau", 0.1, 1.0, true});
  prior.params.push_back({"rho", 0.05, 0.3, true});
  return prior;
}

SpatialDataset random_dataset(int m, int n, Rng& rng, double z_scale = 1.0) {
  SpatialDataset data;
  for (int i = 0; i < m; ++i) {
    data.S.push_back(sample_uniform_points(n, Domain2D::unit_square(), rng));
    Eigen::VectorXd z(n);
    for (int r = 0; r < n; ++r) z[r] = z_scale * rng.normal();
    data.Z.push_back(z);
  }
  return data;
}

}  // namespace

TEST_CASE("per-layer and total parameter accounting") {
  Rng rng(1);
  auto net = build_point_estimator<float>(default_arch(3), rng);
  CHECK(net.stack.conv[0].param_count() == 385);
  CHECK(net.stack.conv[1].param_count() == 32897);
  CHECK(net.stack.conv[2].param_count() == 32897);
  CHECK(net.stack.conv[3].param_count() == 32897);
  CHECK(net.stack.dense[0].param_count() == 16512);
  CHECK(net.stack.dense[1].param_count() == 16512);
  CHECK(net.stack.dense[2].param_count() == 129 * 3);

  for (int p = 1; p <= 10; ++p) {
    const ArchSpec arch = default_arch(p);
    CHECK(arch.param_count() == 132100 + 129 * p);
    Rng r(2);
    auto n = build_point_estimator<float>(arch, r);
    CHECK(count_parameters<float>(n) == 132100 + 129 * p);
    auto iv = build_interval_estimator<float>(arch, [&] {
      PriorSpec prior;
      for (int k = 0; k < p; ++k)
        prior.params.push_back({"p" + std::to_string(k), 0.0, 1.0, false});
      return prior;
    }(), r);
    CHECK(count_parameters<float>(iv) == 2 * (132100 + 129 * p));
  }
}

TEST_CASE("same seed gives identical parameters") {
  Rng a(7), b(7);
  auto n1 = build_point_estimator<float>(default_arch(2), a);
  auto n2 = build_point_estimator<float>(default_arch(2), b);
  auto r1 = tensor_refs<float>(n1);
  auto r2 = tensor_refs<float>(n2);
  for (std::size_t t = 0; t < r1.size(); ++t)
    for (long i = 0; i < r1[t].count(); ++i)
      CHECK(r1[t].data[i] == r2[t].data[i]);
}

TEST_CASE("m = 1 estimate equals the single-field forward path") {
  ArchSpec arch = default_arch(2);
  arch.channels = 32;
  arch.hidden = {32, 32};
  Rng rng(3);
  auto net = build_point_estimator<float>(arch, rng);
  const SpatialDataset data = random_dataset(1, 25, rng);

  Rng grng = dataset_rng(data);
  std::vector<SpatialGraph> graphs;
  std::vector<VecX<float>> z;
  prepare_inputs(data, arch.rule, grng, &graphs, &z);

  // manual single-field chain: propagation, readout, mapping
  MatX<float> h(z[0].size(), 1);
  h.col(0) = z[0];
  for (const auto& layer : net.stack.conv)
    h = graph_conv_apply(layer, graphs[0], h);
  VecX<float> x = mean_readout(h);
  for (const auto& layer : net.stack.dense) x = layer.forward(x);
  const VecX<float> manual = point_head(arch, x);

  Rng erng(0);
  const EstimateReport report =
      estimate_point(net, data, arch.rule, erng, /*reproducible=*/true);
  for (int k = 0; k < 2; ++k)
    CHECK(report.estimate[k] == doctest::Approx(double(manual[k])).epsilon(1e-6));
}

TEST_CASE("estimates are invariant to replicate permutation") {
  ArchSpec arch = default_arch(2);
  arch.channels = 32;
  arch.hidden = {32, 32};
  Rng rng(4);
  auto net = build_point_estimator<float>(arch, rng);
  // small replicates: the neighbour cap never binds, so graphs are identical
  const SpatialDataset data = random_dataset(4, 15, rng);
  SpatialDataset permuted;
  for (int i : {2, 0, 3, 1}) {
    permuted.S.push_back(data.S[std::size_t(i)]);
    permuted.Z.push_back(data.Z[std::size_t(i)]);
  }
  Rng e1(0), e2(0);
  const auto r1 = estimate_point(net, data, arch.rule, e1);
  const auto r2 = estimate_point(net, permuted, arch.rule, e2);
  for (int k = 0; k < 2; ++k)
    CHECK(r1.estimate[k] ==
          doctest::Approx(r2.estimate[k]).epsilon(1e-6));
}

TEST_CASE("reproducible estimates are identical across calls") {
  ArchSpec arch = default_arch(2);
  arch.channels = 32;
  arch.hidden = {32};
  Rng rng(5);
  auto net = build_point_estimator<float>(arch, rng);
  const SpatialDataset data = random_dataset(2, 120, rng);  // cap binds here
  Rng e1(11), e2(22);  // different external streams must not matter
  const auto r1 = estimate_point(net, data, arch.rule, e1, true);
  const auto r2 = estimate_point(net, data, arch.rule, e2, true);
  CHECK(r1.estimate == r2.estimate);
}

TEST_CASE("interval estimates respect ordering and the prior box") {
  const PriorSpec prior = gp_prior();
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    ArchSpec arch = default_arch(2);
    arch.channels = 16;
    arch.hidden = {16, 16};
    auto net = build_interval_estimator<float>(arch, prior, rng);
    // random, untrained weights with exaggerated scale
    net.visit([&](const std::string&, float* d, long r, long c) {
      for (long i = 0; i < r * c; ++i) d[i] *= 5.0f;
    });
    for (int rep = 0; rep < 200; ++rep) {
      const SpatialDataset data = random_dataset(1, 10, rng, 10.0);
      Rng erng(0);
      const auto report = estimate_interval(net, data, arch.rule, erng);
      for (int k = 0; k < 2; ++k) {
        CHECK(report.lower[k] > prior.params[std::size_t(k)].lower);
        CHECK(report.lower[k] < report.upper[k]);
        CHECK(report.upper[k] < prior.params[std::size_t(k)].upper);
      }
    }
  }
}

TEST_CASE("end-to-end gradients pass finite differences on a 2-replicate dataset") {
  ArchSpec arch = default_arch(2);
  arch.channels = 16;
  arch.hidden = {16, 16};
  Rng rng(6);
  const SpatialDataset data = random_dataset(2, 8, rng);
  Rng grng = dataset_rng(data);
  std::vector<SpatialGraph> graphs;
  std::vector<VecX<float>> zf;
  prepare_inputs(data, arch.rule, grng, &graphs, &zf);
  std::vector<VecX<double>> z;
  for (const auto& v : zf) z.push_back(v.cast<double>());
  VecX<double> theta(2);
  theta << 0.4, 0.2;

  SUBCASE("point estimator under MAE") {
    auto net = build_point_estimator<double>(arch, rng);
    auto loss = [&]() {
      const VecX<double> out = stack_forward(net.stack, graphs, z);
      return double(mae_loss<double>(theta, point_head(arch, out), nullptr));
    };
    auto analytic = [&](PointEstimator<double>& grad) {
      StackTape<double> tape;
      const VecX<double> out = stack_forward(net.stack, graphs, z, &tape);
      const VecX<double> est = point_head(arch, out);
      VecX<double> d_est;
      mae_loss<double>(theta, est, &d_est);
      VecX<double> d_out(2);
      for (int k = 0; k < 2; ++k)
        d_out[k] = d_est[k] * activation_deriv_from_output(arch.final_act[std::size_t(k)], est[k]);
      stack_backward(net.stack, graphs, tape, d_out, grad.stack);
    };
    const FdReport report =
        finite_difference_check<double>(net, loss, analytic, 1e-5, 1e-5);
    CHECK_MESSAGE(report.pass, "worst=", report.worst_rel, " in ",
                  report.worst_tensor);
  }

  SUBCASE("interval estimator under the joint quantile loss") {
    auto net = build_interval_estimator<double>(arch, gp_prior(), rng);
    auto q_of = [&](const VecX<double>& u, const VecX<double>& v) {
      VecX<double> q(4);
      for (int k = 0; k < 2; ++k) {
        const double a = net.lower_bound[k], b = net.upper_bound[k];
        q[k] = a + (b - a) * sigmoid(u[k]);
        q[k + 2] = a + (b - a) * sigmoid(u[k] + std::exp(v[k]));
      }
      return q;
    };
    auto loss = [&]() {
      const VecX<double> u = stack_forward(net.u, graphs, z);
      const VecX<double> v = stack_forward(net.v, graphs, z);
      return double(joint_interval_loss<double>(theta, q_of(u, v), 0.025, 0.975,
                                                nullptr));
    };
    auto analytic = [&](IntervalEstimator<double>& grad) {
      StackTape<double> ut, vt;
      const VecX<double> u = stack_forward(net.u, graphs, z, &ut);
      const VecX<double> v = stack_forward(net.v, graphs, z, &vt);
      VecX<double> d_q;
      joint_interval_loss<double>(theta, q_of(u, v), 0.025, 0.975, &d_q);
      VecX<double> d_u(2), d_v(2);
      for (int k = 0; k < 2; ++k) {
        const double ba = net.upper_bound[k] - net.lower_bound[k];
        const double s1 = sigmoid(u[k]);
        const double ev = std::exp(v[k]);
        const double s2 = sigmoid(u[k] + ev);
        d_u[k] = d_q[k] * ba * s1 * (1 - s1) + d_q[k + 2] * ba * s2 * (1 - s2);
        d_v[k] = d_q[k + 2] * ba * s2 * (1 - s2) * ev;
      }
      stack_backward(net.u, graphs, ut, d_u, grad.u);
      stack_backward(net.v, graphs, vt, d_v, grad.v);
    };
    const FdReport report =
        finite_difference_check<double>(net, loss, analytic, 1e-5, 1e-5);
    CHECK_MESSAGE(report.pass, "worst=", report.worst_rel, " in ",
                  report.worst_tensor);
  }
}

TEST_CASE("checkpoint round trip is byte-exact") {
  const std::string dir = (fs::temp_directory_path() / "nbe_test_ckpt").string();
  fs::create_directories(dir);
  ArchSpec arch = default_arch(2);
  arch.channels = 24;
  arch.hidden = {24, 24};
  Rng rng(8);
  auto net = build_point_estimator<float>(arch, rng);

  const std::string p1 = dir + "/a.nbe", p2 = dir + "/b.nbe";
  save_checkpoint(p1, net, R"({"model":"gp","note":"x"})");
  std::string meta;
  auto loaded = load_point_checkpoint(p1, &meta);
  CHECK(meta.find("\"model\":\"gp\"") != std::string::npos);
  save_checkpoint(p2, loaded, R"({"model":"gp","note":"x"})");
  CHECK(read_file(p1) == read_file(p2));

  // estimates from loaded parameters match the originals exactly
  const SpatialDataset data = random_dataset(2, 30, rng);
  Rng e1(0), e2(0);
  CHECK(estimate_point(net, data, arch.rule, e1).estimate ==
        estimate_point(loaded, data, arch.rule, e2).estimate);

  // truncation breaks the checksum
  const std::string bytes = read_file(p1);
  write_file(dir + "/trunc.nbe", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_point_checkpoint(dir + "/trunc.nbe"), CheckpointError);

  // corrupt the version field
  std::string vbytes = bytes;
  vbytes[9] = char(9);
  write_file(dir + "/ver.nbe", vbytes);
  CHECK_THROWS_AS(load_point_checkpoint(dir + "/ver.nbe"), CheckpointError);

  // kind mismatch
  CHECK_THROWS_AS(load_interval_checkpoint(p1), CheckpointError);
  CHECK(checkpoint_kind(p1) == "point");

  fs::remove_all(dir);
}

TEST_CASE("interval checkpoints carry bounds and quantile levels") {
  const std::string dir = (fs::temp_directory_path() / "nbe_test_ckpt2").string();
  fs::create_directories(dir);
  ArchSpec arch = default_arch(2);
  arch.channels = 16;
  arch.hidden = {16};
  Rng rng(9);
  auto net = build_interval_estimator<float>(arch, gp_prior(), rng, 0.05, 0.95);
  const std::string path = dir + "/iv.nbe";
  save_checkpoint(path, net);
  auto loaded = load_interval_checkpoint(path);
  CHECK(loaded.q1 == 0.05);
  CHECK(loaded.q2 == 0.95);
  CHECK(loaded.lower_bound == net.lower_bound);
  CHECK(loaded.upper_bound == net.upper_bound);
  const SpatialDataset data = random_dataset(1, 12, rng);
  Rng e1(0), e2(0);
  const auto a = estimate_interval(net, data, arch.rule, e1);
  const auto b = estimate_interval(loaded, data, arch.rule, e2);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  fs::remove_all(dir);
}

TEST_CASE("one network evaluates across dataset shapes (amortisation)") {
  ArchSpec arch = default_arch(2);
  arch.channels = 32;
  arch.hidden = {32, 32};
  Rng rng(10);
  auto net = build_point_estimator<float>(arch, rng);
  for (const auto& [m, n] : std::vector<std::pair<int, int>>{
           {1, 10}, {1, 500}, {1, 3000}, {100, 10}, {5, 250}}) {
    const SpatialDataset data = random_dataset(m, n, rng);
    Rng erng(0);
    const auto report = estimate_point(net, data, arch.rule, erng);
    CHECK(report.estimate.allFinite());
    CHECK(report.m == m);
  }
  // empty dataset is rejected
  SpatialDataset empty;
  Rng erng(0);
  CHECK_THROWS_AS(estimate_point(net, empty, arch.rule, erng),
                  std::invalid_argument);
}
