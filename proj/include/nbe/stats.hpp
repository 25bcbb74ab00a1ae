#pragma once

#include <functional>
#include <vector>

namespace nbe {

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf);

// Asymptotic KS p-value with the Stephens small-sample correction.
double ks_pvalue(double d, int n);

// Chi-square goodness-of-fit p-value for observed counts against equal
// expected frequencies.
double chi_square_uniform_pvalue(const std::vector<long>& counts);

// Mann-Kendall trend statistic: S = sum_{i<j} sign(x_j - x_i) standardised
// by its null variance. Negative values indicate a decreasing trend; the
// one-sided 5% critical value is -1.645.
double mann_kendall_z(const std::vector<double>& x);

double mean(const std::vector<double>& x);
double variance(const std::vector<double>& x);  // unbiased

}  // namespace nbe
