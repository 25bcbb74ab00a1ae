#pragma once

#include <Eigen/Dense>

#include "nbe/rng.hpp"
#include "nbe/types.hpp"

namespace nbe {

// n i.i.d. uniform locations on the domain.
Points sample_uniform_points(int n, const Domain2D& domain, Rng& rng);

// Matern cluster process. Parents are simulated on the domain inflated by
// delta on every side so clusters near the boundary are not thinned; only
// daughters falling inside the domain are returned. An empty result is legal.
Points sample_matern_cluster(const ClusterProcessConfig& cfg,
                             const Domain2D& domain, Rng& rng);

// Draws one location configuration from the configured prior. For the
// cluster kind, a target count n is drawn first and mu is set to n/lambda.
Points sample_locations(const LocationPrior& prior, const Domain2D& domain,
                        Rng& rng);

// Gaussian process data at locations S: Z ~ N(0, Sigma) with
// Sigma_{jj'} = sigma2 * matern(d_{jj'}) + tau^2 1{j=j'}, via Cholesky.
Eigen::VectorXd simulate_gp(const Points& S, const GPParams& params, Rng& rng);

struct SchlatherOpts {
  // Truncation bound for the spectral algorithm, in standard deviations of
  // the underlying (unit-variance) Gaussian field.
  double bound = 3.5;
  int max_spectral = 10000;
};

// Schlather max-stable process with unit Frechet margins: running maximum of
// zeta_k^{-1} max{0, Y_k(s)} over Poisson points zeta_k, with each Y_k a
// Matern-correlated Gaussian field scaled so E[max{0, Y_k}] = 1.
Eigen::VectorXd simulate_schlather(const Points& S, const SchlatherParams& params,
                                   Rng& rng, const SchlatherOpts& opts = {});

// Scaling applied to the standard Gaussian field in the Schlather model.
double schlather_spectral_scale();

// K parameter vectors, coordinates i.i.d. uniform over the prior box (K x p).
Eigen::MatrixXd sample_prior(const PriorSpec& prior, int k, Rng& rng);

}  // namespace nbe
