#include "nbe/baselines.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nbe/rng.hpp"
#include "nbe/special.hpp"

namespace nbe {

// ---------------------------------------------------------------------------
// Nelder-Mead with box constraints
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd clip_to_box(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi) {
  for (long i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

}  // namespace

OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper, const NelderMeadOpts& opts) {
  const long n = x0.size();
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("nelder_mead: bound dimension mismatch");
  for (long i = 0; i < n; ++i)
    if (x0[i] < lower[i] || x0[i] > upper[i])
      throw std::invalid_argument("nelder_mead: x0 outside bounds");

  std::vector<Eigen::VectorXd> simplex;
  simplex.push_back(x0);
  for (long i = 0; i < n; ++i) {
    Eigen::VectorXd v = x0;
    const double step = 0.1 * (upper[i] - lower[i]);
    v[i] = (v[i] + step <= upper[i]) ? v[i] + step : v[i] - step;
    simplex.push_back(clip_to_box(v, lower, upper));
  }
  std::vector<double> fv(simplex.size());
  for (std::size_t i = 0; i < simplex.size(); ++i) fv[i] = f(simplex[i]);

  OptimResult res;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    // order ascending by objective
    std::vector<std::size_t> idx(simplex.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> sx(simplex.size());
    std::vector<double> sf(simplex.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      sx[i] = simplex[idx[i]];
      sf[i] = fv[idx[i]];
    }
    simplex = sx;
    fv = sf;

    const double spread = std::abs(fv.back() - fv.front());
    if (spread <= opts.tol * (std::abs(fv.front()) + opts.tol)) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
    centroid /= double(n);

    const Eigen::VectorXd& worst = simplex.back();
    const Eigen::VectorXd xr = clip_to_box(centroid + (centroid - worst), lower, upper);
    const double fr = f(xr);
    if (fr < fv.front()) {
      const Eigen::VectorXd xe =
          clip_to_box(centroid + 2.0 * (centroid - worst), lower, upper);
      const double fe = f(xe);
      if (fe < fr) {
        simplex.back() = xe;
        fv.back() = fe;
      } else {
        simplex.back() = xr;
        fv.back() = fr;
      }
    } else if (fr < fv[fv.size() - 2]) {
      simplex.back() = xr;
      fv.back() = fr;
    } else {
      const Eigen::VectorXd xc =
          clip_to_box(centroid + 0.5 * (worst - centroid), lower, upper);
      const double fc = f(xc);
      if (fc < fv.back()) {
        simplex.back() = xc;
        fv.back() = fc;
      } else {
        for (std::size_t i = 1; i < simplex.size(); ++i) {
          simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < simplex.size(); ++i)
    if (fv[i] < fv[best]) best = i;
  res.argmin = simplex[best];
  res.value = fv[best];
  res.iterations = iter;
  return res;
}

OptimResult nelder_mead_multistart(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const NelderMeadOpts& opts) {
  Rng rng(opts.seed, 0x6E6D);
  OptimResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (int s = 0; s <= opts.restarts; ++s) {
    Eigen::VectorXd x0(lower.size());
    for (long i = 0; i < x0.size(); ++i)
      x0[i] = s == 0 ? 0.5 * (lower[i] + upper[i])
                     : rng.uniform(lower[i], upper[i]);
    OptimResult r = nelder_mead(f, x0, lower, upper, opts);
    if (r.value < best.value ||
        (r.value == best.value && r.converged && !best.converged)) {
      const bool conv = r.converged || best.converged;
      best = std::move(r);
      best.converged = conv;
    } else if (r.converged) {
      best.converged = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Gaussian likelihood
// ---------------------------------------------------------------------------

double gp_loglikelihood(const GPParams& theta, const Eigen::VectorXd& z,
                        const Points& s) {
  theta.validate();
  const long n = s.rows();
  if (z.size() != n)
    throw std::invalid_argument("gp_loglikelihood: size mismatch");
  if (n == 0) return 0.0;
  Eigen::MatrixXd sigma(n, n);
  for (long i = 0; i < n; ++i) {
    sigma(i, i) = theta.sigma2 + theta.tau * theta.tau;
    for (long j = i + 1; j < n; ++j) {
      const double h = (s.row(i) - s.row(j)).norm();
      sigma(i, j) = sigma(j, i) =
          theta.sigma2 * matern_correlation(h, theta.rho, theta.nu);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    std::fprintf(stderr,
                 "gp_loglikelihood: Cholesky failed (rho=%g nu=%g tau=%g); "
                 "returning -inf\n",
                 theta.rho, theta.nu, theta.tau);
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd alpha = llt.solve(z);
  double logdet = 0.0;
  const auto& l_mat = llt.matrixLLT();
  for (long i = 0; i < n; ++i) logdet += std::log(l_mat(i, i));
  return -0.5 * (double(n) * std::log(2.0 * M_PI) + z.dot(alpha)) - logdet;
}

OptimResult ml_estimate_gp(const Eigen::VectorXd& z, const Points& s,
                           const std::vector<std::string>& free_names,
                           const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const GPParams& fixed,
                           const NelderMeadOpts& opts) {
  if (long(free_names.size()) != lower.size() || lower.size() != upper.size())
    throw std::invalid_argument("ml_estimate_gp: bounds/names mismatch");
  auto assemble = [&](const Eigen::VectorXd& x) {
    GPParams p = fixed;
    for (std::size_t k = 0; k < free_names.size(); ++k) {
      const std::string& name = free_names[k];
      if (name == "tau")
        p.tau = x[long(k)];
      else if (name == "rho")
        p.rho = x[long(k)];
      else if (name == "sigma2")
        p.sigma2 = x[long(k)];
      else if (name == "nu")
        p.nu = x[long(k)];
      else
        throw std::invalid_argument("ml_estimate_gp: unknown parameter " + name);
    }
    return p;
  };
  auto objective = [&](const Eigen::VectorXd& x) {
    return -gp_loglikelihood(assemble(x), z, s);
  };
  OptimResult res = nelder_mead_multistart(objective, lower, upper, opts);
  res.value = -res.value;  // report the log-likelihood
  return res;
}

// ---------------------------------------------------------------------------
// Schlather pairwise likelihood
// ---------------------------------------------------------------------------

namespace {

// Shared pieces of V(z1, z2) = (1/2)(1/z1 + 1/z2)(1 + w) and its partials.
struct SchlatherV {
  double v, v1, v2, v12;
};

SchlatherV schlather_v(double z1, double z2, double r) {
  const double a = r + 1.0;
  const double sum = z1 + z2;
  const double u = z1 * z2 / (sum * sum);
  const double w = std::sqrt(std::max(1.0 - 2.0 * a * u, 1e-14));
  const double t = 0.5 * (1.0 / z1 + 1.0 / z2);

  const double u1 = z2 * (z2 - z1) / (sum * sum * sum);
  const double u2 = z1 * (z1 - z2) / (sum * sum * sum);
  const double u12 = (4.0 * z1 * z2 - z1 * z1 - z2 * z2) / (sum * sum * sum * sum);

  const double w1 = -a * u1 / w;
  const double w2 = -a * u2 / w;
  const double w12 = -a * u12 / w - a * a * u1 * u2 / (w * w * w);

  SchlatherV out;
  out.v = t * (1.0 + w);
  out.v1 = -0.5 / (z1 * z1) * (1.0 + w) + t * w1;
  out.v2 = -0.5 / (z2 * z2) * (1.0 + w) + t * w2;
  out.v12 = -0.5 / (z1 * z1) * w2 - 0.5 / (z2 * z2) * w1 + t * w12;
  return out;
}

void check_pair_args(double z1, double z2, double r) {
  if (!(z1 > 0.0 && z2 > 0.0))
    throw std::invalid_argument("schlather pair: z1, z2 must be > 0");
  if (!(r > -1.0 && r <= 1.0))
    throw std::invalid_argument("schlather pair: r must be in (-1, 1]");
}

}  // namespace

double schlather_bivariate_cdf(double z1, double z2, double r) {
  check_pair_args(z1, z2, r);
  return std::exp(-schlather_v(z1, z2, r).v);
}

double schlather_pair_density(double z1, double z2, double r) {
  check_pair_args(z1, z2, r);
  const SchlatherV s = schlather_v(z1, z2, r);
  return std::exp(-s.v) * (s.v1 * s.v2 - s.v12);
}

double pl_loglikelihood(const SchlatherParams& theta, const SpatialDataset& data,
                        double cutoff, long* pair_count) {
  theta.validate();
  data.validate();
  if (!(cutoff > 0.0)) throw std::invalid_argument("pl_loglikelihood: cutoff <= 0");
  double total = 0.0;
  long pairs = 0;
  for (int i = 0; i < data.replicates(); ++i) {
    const Points& s = data.S[i];
    const Eigen::VectorXd& z = data.Z[i];
    for (long j = 0; j + 1 < s.rows(); ++j)
      for (long j2 = j + 1; j2 < s.rows(); ++j2) {
        const double d = (s.row(j) - s.row(j2)).norm();
        if (d > cutoff) continue;
        const double r = matern_correlation(d, theta.rho, theta.nu);
        const double f = schlather_pair_density(z[j], z[j2], r);
        total += std::log(std::max(f, 1e-300));
        ++pairs;
      }
  }
  if (pair_count) *pair_count = pairs;
  if (pairs == 0)
    std::fprintf(stderr,
                 "pl_loglikelihood: no location pairs within cutoff %g\n",
                 cutoff);
  return total;
}

OptimResult pl_estimate_schlather(const SpatialDataset& data,
                                  const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper, double cutoff,
                                  const NelderMeadOpts& opts) {
  if (lower.size() != 2 || upper.size() != 2)
    throw std::invalid_argument("pl_estimate_schlather: expects (rho, nu) bounds");
  data.validate();
  // Pair list is independent of theta; build it once.
  struct Pair {
    double z1, z2, d;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < data.replicates(); ++i) {
    const Points& s = data.S[i];
    const Eigen::VectorXd& z = data.Z[i];
    for (long j = 0; j + 1 < s.rows(); ++j)
      for (long j2 = j + 1; j2 < s.rows(); ++j2) {
        const double d = (s.row(j) - s.row(j2)).norm();
        if (d <= cutoff) pairs.push_back({z[j], z[j2], d});
      }
  }
  auto objective = [&](const Eigen::VectorXd& x) {
    double total = 0.0;
    for (const Pair& p : pairs) {
      const double r = matern_correlation(p.d, x[0], x[1]);
      total += std::log(std::max(schlather_pair_density(p.z1, p.z2, r), 1e-300));
    }
    return -total;
  };
  OptimResult res = nelder_mead_multistart(objective, lower, upper, opts);
  res.value = -res.value;
  return res;
}

}  // namespace nbe
