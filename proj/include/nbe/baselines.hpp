#pragma once

#include <Eigen/Dense>
#include <functional>

#include "nbe/types.hpp"

namespace nbe {

struct OptimResult {
  Eigen::VectorXd argmin;
  double value = 0.0;  // objective at argmin
  int iterations = 0;
  bool converged = false;
};

struct NelderMeadOpts {
  int max_iterations = 500;
  double tol = 1e-8;          // simplex function-value spread
  int restarts = 4;           // random restarts beyond the midpoint start
  std::uint64_t seed = 17;    // for restart draws
};

// Simplex minimisation with box constraints enforced by clipping proposals
// into the box.
OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper,
                        const NelderMeadOpts& opts = {});

// Multi-start wrapper: midpoint of the box plus random interior restarts.
OptimResult nelder_mead_multistart(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const NelderMeadOpts& opts = {});

// Exact Gaussian log-likelihood log N(Z; 0, Sigma(theta)) via Cholesky;
// returns -inf (with a stderr note) if the covariance fails to factorise.
double gp_loglikelihood(const GPParams& theta, const Eigen::VectorXd& z,
                        const Points& s);

// Maximum-likelihood fit of the free GP parameters (named by `free_names`,
// e.g. {"tau","rho"}; the rest stay at `fixed`) over the prior box.
OptimResult ml_estimate_gp(const Eigen::VectorXd& z, const Points& s,
                           const std::vector<std::string>& free_names,
                           const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const GPParams& fixed,
                           const NelderMeadOpts& opts = {});

// Bivariate CDF of Schlather's model with unit Frechet margins at correlation
// r of the underlying Gaussian field:
//   G(z1,z2) = exp(-(1/2)(1/z1 + 1/z2)[1 + sqrt(1 - 2(r+1) z1 z2/(z1+z2)^2)]).
double schlather_bivariate_cdf(double z1, double z2, double r);

// Mixed partial d^2 G / dz1 dz2, evaluated analytically.
double schlather_pair_density(double z1, double z2, double r);

// Pairwise log-likelihood: sum over replicates and location pairs within
// `cutoff` of log pair densities, with r the Matern correlation at the pair
// distance. Zero qualifying pairs yields 0; `pair_count` reports how many
// pairs entered the sum.
double pl_loglikelihood(const SchlatherParams& theta, const SpatialDataset& data,
                        double cutoff = 0.2, long* pair_count = nullptr);

// Maximum pairwise-likelihood fit of (rho, nu) over the prior box.
OptimResult pl_estimate_schlather(const SpatialDataset& data,
                                  const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper,
                                  double cutoff = 0.2,
                                  const NelderMeadOpts& opts = {});

}  // namespace nbe
