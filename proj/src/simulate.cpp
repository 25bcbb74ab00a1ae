#include "nbe/simulate.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbe/special.hpp"

namespace nbe {

Points sample_uniform_points(int n, const Domain2D& domain, Rng& rng) {
  if (n < 0) throw std::invalid_argument("sample_uniform_points: n < 0");
  domain.validate();
  Points s(n, 2);
  for (int i = 0; i < n; ++i) {
    s(i, 0) = rng.uniform(domain.x0, domain.x1);
    s(i, 1) = rng.uniform(domain.y0, domain.y1);
  }
  return s;
}

Points sample_matern_cluster(const ClusterProcessConfig& cfg,
                             const Domain2D& domain, Rng& rng) {
  cfg.validate();
  domain.validate();
  const Domain2D inflated{domain.x0 - cfg.delta, domain.y0 - cfg.delta,
                          domain.x1 + cfg.delta, domain.y1 + cfg.delta};
  const std::int64_t n_parents = rng.poisson(cfg.lambda * inflated.area());

  std::vector<std::pair<double, double>> kept;
  for (std::int64_t i = 0; i < n_parents; ++i) {
    const double px = rng.uniform(inflated.x0, inflated.x1);
    const double py = rng.uniform(inflated.y0, inflated.y1);
    const std::int64_t n_daughters = rng.poisson(cfg.mu);
    for (std::int64_t j = 0; j < n_daughters; ++j) {
      const double r = cfg.delta * std::sqrt(rng.uniform01());
      const double a = 2.0 * M_PI * rng.uniform01();
      const double x = px + r * std::cos(a);
      const double y = py + r * std::sin(a);
      if (domain.contains(x, y)) kept.emplace_back(x, y);
    }
  }
  Points s(long(kept.size()), 2);
  for (long i = 0; i < s.rows(); ++i) {
    s(i, 0) = kept[i].first;
    s(i, 1) = kept[i].second;
  }
  return s;
}

Points sample_locations(const LocationPrior& prior, const Domain2D& domain,
                        Rng& rng) {
  const int n =
      int(rng.uniform_int(prior.size.n_min, prior.size.n_max));
  if (prior.kind == LocationPrior::Kind::Uniform)
    return sample_uniform_points(n, domain, rng);
  ClusterProcessConfig cfg;
  cfg.lambda = rng.uniform(prior.cluster.lambda_min, prior.cluster.lambda_max);
  cfg.delta = rng.uniform(prior.cluster.delta_min, prior.cluster.delta_max);
  cfg.mu = double(n) / cfg.lambda;
  return sample_matern_cluster(cfg, domain, rng);
}

namespace {

Eigen::MatrixXd matern_correlation_matrix(const Points& s, double rho,
                                          double nu) {
  const long n = s.rows();
  Eigen::MatrixXd r(n, n);
  for (long i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (long j = i + 1; j < n; ++j) {
      const double h = (s.row(i) - s.row(j)).norm();
      r(i, j) = r(j, i) = matern_correlation(h, rho, nu);
    }
  }
  return r;
}

[[noreturn]] void throw_not_pd(const Points& s, const char* who) {
  long bi = 0, bj = 1;
  double best = std::numeric_limits<double>::infinity();
  for (long i = 0; i < s.rows(); ++i)
    for (long j = i + 1; j < s.rows(); ++j) {
      const double h = (s.row(i) - s.row(j)).norm();
      if (h < best) {
        best = h;
        bi = i;
        bj = j;
      }
    }
  throw std::runtime_error(
      std::string(who) +
      ": covariance not positive definite; closest locations are rows " +
      std::to_string(bi) + " and " + std::to_string(bj) + " at distance " +
      std::to_string(best) + " (duplicate points need tau > 0)");
}

}  // namespace

Eigen::VectorXd simulate_gp(const Points& S, const GPParams& params, Rng& rng) {
  params.validate();
  const long n = S.rows();
  if (n == 0) return Eigen::VectorXd(0);
  Eigen::MatrixXd sigma =
      params.sigma2 * matern_correlation_matrix(S, params.rho, params.nu);
  sigma.diagonal().array() += params.tau * params.tau;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw_not_pd(S, "simulate_gp");
  Eigen::VectorXd eps(n);
  for (long i = 0; i < n; ++i) eps[i] = rng.normal();
  return llt.matrixL() * eps;
}

double schlather_spectral_scale() { return std::sqrt(2.0 * M_PI); }

Eigen::VectorXd simulate_schlather(const Points& S, const SchlatherParams& params,
                                   Rng& rng, const SchlatherOpts& opts) {
  params.validate();
  if (S.rows() == 0)
    throw std::invalid_argument("simulate_schlather: empty location set");
  if (!(opts.bound > 0.0))
    throw std::invalid_argument("simulate_schlather: bound must be > 0");

  const long n = S.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(
      matern_correlation_matrix(S, params.rho, params.nu));
  if (llt.info() != Eigen::Success) throw_not_pd(S, "simulate_schlather");
  const Eigen::MatrixXd chol_l = llt.matrixL();

  // Running maximum in units of the unit-variance spectral field; the
  // truncation bound applies in the same units.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eps(n);
  double zeta = 0.0;
  int k = 0;
  for (;;) {
    zeta += rng.exponential();
    if (opts.bound / zeta < z.minCoeff()) break;
    if (++k > opts.max_spectral)
      throw std::runtime_error(
          "simulate_schlather: exceeded max spectral functions (" +
          std::to_string(opts.max_spectral) + "); bound too large?");
    for (long i = 0; i < n; ++i) eps[i] = rng.normal();
    const Eigen::VectorXd y = chol_l * eps;
    z = z.cwiseMax(y.cwiseMax(0.0) / zeta);
  }
  return schlather_spectral_scale() * z;
}

Eigen::MatrixXd sample_prior(const PriorSpec& prior, int k, Rng& rng) {
  prior.validate();
  if (k < 1) throw std::invalid_argument("sample_prior: k < 1");
  Eigen::MatrixXd thetas(k, prior.dim());
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < prior.dim(); ++j)
      thetas(i, j) = rng.uniform(prior.params[j].lower, prior.params[j].upper);
  return thetas;
}

}  // namespace nbe
