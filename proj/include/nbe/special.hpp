#pragma once

namespace nbe {

// Modified Bessel function of the second kind K_order(x), order > 0, x > 0.
// Series (Temme) for x <= 2, continued fraction for x > 2, upward recurrence
// in the order. Relative error is well below 1e-10 over the ranges exercised
// by the Matern family (order in [0.1, 10], x in [1e-6, 700]).
double bessel_k(double order, double x);

// Isotropic Matern correlation 2^{1-nu}/Gamma(nu) (h/rho)^nu K_nu(h/rho).
// Equals 1 at h = 0 (continuous limit) and decreases strictly in h.
double matern_correlation(double h, double rho, double nu);

double normal_cdf(double x);
double normal_pdf(double x);

// Inverse standard-normal CDF, accurate to ~1e-14 for q in (1e-300, 1).
double normal_quantile(double q);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

double chi_square_cdf(double x, double dof);

// Tail probability of the Kolmogorov distribution, Q(lambda) =
// 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

}  // namespace nbe
