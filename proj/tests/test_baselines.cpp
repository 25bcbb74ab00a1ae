#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nbe/baselines.hpp"
#include "nbe/simulate.hpp"
#include "nbe/special.hpp"
#include "nbe/stats.hpp"

using namespace nbe;

TEST_CASE("gp log-likelihood closed forms at n = 1") {
  Points s(1, 2);
  s << 0.5, 0.5;
  GPParams theta;  // sigma2 = 1, tau = 0
  Eigen::VectorXd z(1);
  z << 0.0;
  CHECK(gp_loglikelihood(theta, z, s) == doctest::Approx(-0.9189385).epsilon(1e-6));
  z << 1.0;
  CHECK(gp_loglikelihood(theta, z, s) == doctest::Approx(-1.4189385).epsilon(1e-6));
}

TEST_CASE("gp log-likelihood matches the dense-inverse density") {
  Rng rng(1);
  const Points s = sample_uniform_points(3, Domain2D::unit_square(), rng);
  GPParams theta;
  theta.sigma2 = 1.3;
  theta.rho = 0.15;
  theta.nu = 1.0;
  theta.tau = 0.4;
  Eigen::VectorXd z(3);
  z << 0.3, -1.1, 0.7;

  Eigen::MatrixXd sigma(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double h = (s.row(i) - s.row(j)).norm();
      sigma(i, j) = theta.sigma2 * matern_correlation(h, theta.rho, theta.nu) +
                    (i == j ? theta.tau * theta.tau : 0.0);
    }
  const double brute = -0.5 * (3.0 * std::log(2.0 * M_PI) +
                               std::log(sigma.determinant()) +
                               z.dot(sigma.inverse() * z));
  CHECK(gp_loglikelihood(theta, z, s) == doctest::Approx(brute).epsilon(1e-10));
}

TEST_CASE("nelder-mead finds interior and boundary minima") {
  Eigen::VectorXd lo(2), hi(2);
  lo << -1.0, -1.0;
  hi << 1.0, 1.0;

  Eigen::VectorXd c(2);
  c << 0.3, -0.4;
  auto f = [&](const Eigen::VectorXd& x) { return (x - c).squaredNorm(); };
  const OptimResult interior = nelder_mead_multistart(f, lo, hi);
  CHECK(interior.converged);
  CHECK((interior.argmin - c).norm() <= 1e-5);

  c << 2.0, 0.0;  // outside the box: the minimiser lies on the boundary
  const OptimResult edge = nelder_mead_multistart(f, lo, hi);
  CHECK(edge.argmin[0] == doctest::Approx(1.0).epsilon(1e-6));

  // x0 outside the box is rejected
  Eigen::VectorXd bad(2);
  bad << 5.0, 0.0;
  CHECK_THROWS_AS(nelder_mead(f, bad, lo, hi), std::invalid_argument);
}

TEST_CASE("nelder-mead solves randomised quadratics") {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const int dim = 2 + int(rng.uniform_int(0, 2));
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -2.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, 2.0);
    Eigen::VectorXd c(dim);
    Eigen::VectorXd scale(dim);
    for (int i = 0; i < dim; ++i) {
      c[i] = rng.uniform(-1.5, 1.5);
      scale[i] = rng.uniform(0.5, 3.0);
    }
    auto f = [&](const Eigen::VectorXd& x) {
      return (scale.array() * (x - c).array().square()).sum();
    };
    NelderMeadOpts opts;
    opts.restarts = 2;
    opts.max_iterations = 800;
    const OptimResult res = nelder_mead_multistart(f, lo, hi, opts);
    CHECK_MESSAGE(res.converged, "rep=", rep);
    CHECK_MESSAGE((res.argmin - c).norm() <= 1e-4, "rep=", rep);
  }
}

TEST_CASE("schlather bivariate cdf closed-form checks") {
  // comonotone limit r = 1
  for (double z : {0.5, 1.0, 3.0})
    CHECK(schlather_bivariate_cdf(z, z, 1.0) ==
          doctest::Approx(std::exp(-1.0 / z)).epsilon(1e-9));
  // marginal limit
  CHECK(schlather_bivariate_cdf(1.2, 1e9, 0.3) ==
        doctest::Approx(std::exp(-1.0 / 1.2)).epsilon(1e-6));
  // independence-level value at z1 = z2 = 1, r = 0
  CHECK(schlather_bivariate_cdf(1.0, 1.0, 0.0) ==
        doctest::Approx(std::exp(-(1.0 + std::sqrt(0.5)))).epsilon(1e-12));
  // diagonal identity against the extremal coefficient
  for (double r : {-0.5, 0.0, 0.4, 0.9})
    for (double z : {0.5, 1.0, 2.0, 8.0}) {
      const double theta2 = 1.0 + std::sqrt((1.0 - r) / 2.0);
      CHECK(schlather_bivariate_cdf(z, z, r) ==
            doctest::Approx(std::exp(-theta2 / z)).epsilon(1e-12));
    }
  // nondecreasing in each argument, bounded by the margins
  double prev = 0.0;
  for (double z1 : {0.3, 0.6, 1.0, 2.0, 5.0}) {
    const double g = schlather_bivariate_cdf(z1, 1.7, 0.2);
    CHECK(g >= prev);
    CHECK(g <= std::exp(-1.0 / z1) + 1e-15);
    CHECK(g <= std::exp(-1.0 / 1.7) + 1e-15);
    prev = g;
  }
  CHECK_THROWS_AS(schlather_bivariate_cdf(-1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("schlather pair density: derivative, mass, and symmetry") {
  // mixed partial against central differences of the CDF
  for (double r : {-0.4, 0.0, 0.5, 0.9})
    for (double z1 : {0.5, 1.0, 2.2})
      for (double z2 : {0.7, 1.5, 4.0}) {
        const double h1 = 1e-4 * z1, h2 = 1e-4 * z2;
        const double fd =
            (schlather_bivariate_cdf(z1 + h1, z2 + h2, r) -
             schlather_bivariate_cdf(z1 + h1, z2 - h2, r) -
             schlather_bivariate_cdf(z1 - h1, z2 + h2, r) +
             schlather_bivariate_cdf(z1 - h1, z2 - h2, r)) /
            (4.0 * h1 * h2);
        const double an = schlather_pair_density(z1, z2, r);
        CHECK_MESSAGE(std::abs(fd - an) <= 1e-6 * std::max(std::abs(an), 1e-3),
                      "r=", r, " z1=", z1, " z2=", z2);
        CHECK(schlather_pair_density(z2, z1, r) ==
              doctest::Approx(an).epsilon(1e-13));
      }

  // 2-D Simpson integral of the density over [1,3]^2 equals the CDF mass
  const double r = 0.35;
  const int n = 200;
  const double h = 2.0 / n;
  auto weight = [&](int i) { return i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double sum = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      sum += weight(i) * weight(j) *
             schlather_pair_density(1.0 + i * h, 1.0 + j * h, r);
  const double integral = sum * h * h / 9.0;
  const double mass = schlather_bivariate_cdf(3, 3, r) -
                      schlather_bivariate_cdf(1, 3, r) -
                      schlather_bivariate_cdf(3, 1, r) +
                      schlather_bivariate_cdf(1, 1, r);
  CHECK(integral == doctest::Approx(mass).epsilon(1e-6));
}

TEST_CASE("pairwise log-likelihood bookkeeping") {
  SchlatherParams theta{0.2, 1.0};
  SpatialDataset data;
  Points s(2, 2);
  s << 0.0, 0.0, 0.1, 0.0;
  Eigen::VectorXd z(2);
  z << 1.4, 0.9;
  data.S.push_back(s);
  data.Z.push_back(z);

  long pairs = 0;
  const double single = pl_loglikelihood(theta, data, 0.2, &pairs);
  CHECK(pairs == 1);
  const double r = matern_correlation(0.1, theta.rho, theta.nu);
  CHECK(single ==
        doctest::Approx(std::log(schlather_pair_density(1.4, 0.9, r))));

  // cutoff below the pair distance: no terms
  CHECK(pl_loglikelihood(theta, data, 0.05, &pairs) == 0.0);
  CHECK(pairs == 0);

  // duplicating the replicate doubles the sum
  data.S.push_back(s);
  data.Z.push_back(z);
  CHECK(pl_loglikelihood(theta, data, 0.2) ==
        doctest::Approx(2.0 * single).epsilon(1e-12));

  // replicate order does not matter
  SpatialDataset swapped;
  Eigen::VectorXd z2(2);
  z2 << 3.0, 0.5;
  swapped.S = {s, s};
  swapped.Z = {z2, z};
  SpatialDataset original;
  original.S = {s, s};
  original.Z = {z, z2};
  CHECK(pl_loglikelihood(theta, swapped, 0.2) ==
        doctest::Approx(pl_loglikelihood(theta, original, 0.2)).epsilon(1e-13));
}

TEST_CASE("ml estimation is consistent at moderate n") {
  const double tau0 = 0.3, rho0 = 0.15;
  GPParams truth;
  truth.tau = tau0;
  truth.rho = rho0;
  Eigen::VectorXd lo(2), hi(2);
  lo << 0.1, 0.05;
  hi << 1.0, 0.3;
  NelderMeadOpts opts;
  opts.restarts = 1;
  Rng rng(4);
  const int reps = 60;
  std::vector<double> tau_hat, rho_hat;
  for (int rep = 0; rep < reps; ++rep) {
    Rng r = rng.substream(std::uint64_t(rep));
    const Points s = sample_uniform_points(120, Domain2D::unit_square(), r);
    const Eigen::VectorXd z = simulate_gp(s, truth, r);
    const OptimResult fit =
        ml_estimate_gp(z, s, {"tau", "rho"}, lo, hi, GPParams{}, opts);
    tau_hat.push_back(fit.argmin[0]);
    rho_hat.push_back(fit.argmin[1]);
    // the optimiser dominates the truth on its own surface
    GPParams at_truth;
    at_truth.tau = tau0;
    at_truth.rho = rho0;
    CHECK(fit.value >= gp_loglikelihood(at_truth, z, s) - 1e-6);
  }
  CHECK(std::abs(mean(tau_hat) - tau0) <=
        3.0 * std::sqrt(variance(tau_hat) / reps));
  CHECK(std::abs(mean(rho_hat) - rho0) <=
        3.0 * std::sqrt(variance(rho_hat) / reps));
}

TEST_CASE("ml estimation pins to the boundary when the truth is outside the box") {
  GPParams truth;
  truth.tau = 0.2;
  truth.rho = 0.25;
  Eigen::VectorXd lo(2), hi(2);
  lo << 0.1, 0.02;
  hi << 1.0, 0.08;  // rho box excludes the truth
  Rng rng(5);
  const Points s = sample_uniform_points(150, Domain2D::unit_square(), rng);
  const Eigen::VectorXd z = simulate_gp(s, truth, rng);
  const OptimResult fit =
      ml_estimate_gp(z, s, {"tau", "rho"}, lo, hi, GPParams{});
  CHECK(fit.argmin[1] >= 0.075);
}

TEST_CASE("pairwise-likelihood fitting is roughly unbiased at desk scale") {
  SchlatherParams truth{0.2, 1.5};
  Eigen::VectorXd lo(2), hi(2);
  lo << 0.05, 0.5;
  hi << 0.3, 2.5;
  NelderMeadOpts opts;
  opts.restarts = 1;
  opts.max_iterations = 250;
  Rng rng(6);
  const int fits = 16;
  std::vector<double> rho_hat, nu_hat;
  for (int rep = 0; rep < fits; ++rep) {
    Rng r = rng.substream(std::uint64_t(rep));
    const Points s = sample_uniform_points(60, Domain2D::unit_square(), r);
    SpatialDataset data;
    for (int i = 0; i < 8; ++i) {
      data.S.push_back(s);
      data.Z.push_back(simulate_schlather(s, truth, r));
    }
    const OptimResult fit = pl_estimate_schlather(data, lo, hi, 0.2, opts);
    rho_hat.push_back(fit.argmin[0]);
    nu_hat.push_back(fit.argmin[1]);

    const double at_truth = pl_loglikelihood(truth, data, 0.2);
    CHECK(fit.value >= at_truth - 1e-6);
  }
  CHECK(std::abs(mean(rho_hat) - truth.rho) <=
        std::max(3.0 * std::sqrt(variance(rho_hat) / fits), 0.02));
  CHECK(std::abs(mean(nu_hat) - truth.nu) <=
        std::max(3.0 * std::sqrt(variance(nu_hat) / fits), 0.15));
}
