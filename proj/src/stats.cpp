#include "nbe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nbe/special.hpp"

namespace nbe {

double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = double(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - f));
  }
  return d;
}

double ks_pvalue(double d, int n) {
  const double sn = std::sqrt(double(n));
  return kolmogorov_q(d * (sn + 0.12 + 0.11 / sn));
}

double chi_square_uniform_pvalue(const std::vector<long>& counts) {
  if (counts.size() < 2)
    throw std::invalid_argument("chi_square_uniform_pvalue: need >= 2 cells");
  double total = 0.0;
  for (long c : counts) total += double(c);
  const double expected = total / double(counts.size());
  if (expected <= 0.0)
    throw std::invalid_argument("chi_square_uniform_pvalue: empty counts");
  double stat = 0.0;
  for (long c : counts) {
    const double diff = double(c) - expected;
    stat += diff * diff / expected;
  }
  return 1.0 - chi_square_cdf(stat, double(counts.size() - 1));
}

double mann_kendall_z(const std::vector<double>& x) {
  const int n = int(x.size());
  if (n < 3) throw std::invalid_argument("mann_kendall_z: need >= 3 points");
  long s = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      s += (x[j] > x[i]) - (x[j] < x[i]);
  const double var = double(n) * (n - 1) * (2 * n + 5) / 18.0;
  if (s > 0) return (s - 1) / std::sqrt(var);
  if (s < 0) return (s + 1) / std::sqrt(var);
  return 0.0;
}

double mean(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("mean: empty");
  double s = 0.0;
  for (double v : x) s += v;
  return s / double(x.size());
}

double variance(const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("variance: need >= 2 values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / double(x.size() - 1);
}

}  // namespace nbe
