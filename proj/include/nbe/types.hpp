#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbe {

// Coordinate matrix: one spatial location per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct Domain2D {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  static Domain2D unit_square() { return {}; }

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
  void validate() const {
    if (!(x1 > x0 && y1 > y0))
      throw std::invalid_argument("Domain2D: upper corner must exceed lower");
  }
};

// Matern cluster process: Poisson parents with intensity lambda, each parent
// spawning Poisson(mu) daughters uniform on a disk of radius delta.
struct ClusterProcessConfig {
  double lambda = 25.0;
  double mu = 10.0;
  double delta = 0.1;

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("cluster: lambda <= 0");
    if (mu < 0.0) throw std::invalid_argument("cluster: mu < 0");
    if (!(delta > 0.0)) throw std::invalid_argument("cluster: delta <= 0");
  }
};

struct GPParams {
  double sigma2 = 1.0;  // marginal variance
  double rho = 0.2;     // range
  double nu = 1.0;      // smoothness
  double tau = 0.0;     // measurement-error standard deviation

  void validate() const {
    if (!(sigma2 > 0.0 && rho > 0.0 && nu > 0.0) || tau < 0.0)
      throw std::invalid_argument("GPParams: outside parameter domain");
  }
};

// Underlying Gaussian variance is fixed to 1 for the max-stable model.
struct SchlatherParams {
  double rho = 0.2;
  double nu = 1.0;

  void validate() const {
    if (!(rho > 0.0 && nu > 0.0))
      throw std::invalid_argument("SchlatherParams: outside parameter domain");
  }
};

struct ParamPrior {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool positive = true;  // selects the exponential output activation
};

// Sample-size prior: fixed n when n_min == n_max, otherwise discrete uniform.
struct SampleSizePrior {
  int n_min = 250;
  int n_max = 250;
};

// Ranges for the cluster-process configuration. The daughter mean is tied to
// the drawn target count: mu = n / lambda, so the expected number of sampled
// points stays at n while the clustering strength varies.
struct ClusterPrior {
  double lambda_min = 10.0;
  double lambda_max = 50.0;
  double delta_min = 0.1;
  double delta_max = 0.1;
};

struct LocationPrior {
  enum class Kind { Cluster, Uniform };
  Kind kind = Kind::Cluster;
  ClusterPrior cluster;
  SampleSizePrior size;
};

struct PriorSpec {
  std::vector<ParamPrior> params;
  LocationPrior locations;

  int dim() const { return int(params.size()); }

  void validate() const {
    if (params.empty()) throw std::invalid_argument("PriorSpec: no parameters");
    for (const auto& p : params)
      if (!(p.lower < p.upper))
        throw std::invalid_argument("PriorSpec: requires lower < upper for " +
                                    p.name);
    if (locations.size.n_min < 1 || locations.size.n_max < locations.size.n_min)
      throw std::invalid_argument("PriorSpec: bad sample-size range");
  }

  Eigen::VectorXd lower_bounds() const {
    Eigen::VectorXd v(dim());
    for (int k = 0; k < dim(); ++k) v[k] = params[k].lower;
    return v;
  }
  Eigen::VectorXd upper_bounds() const {
    Eigen::VectorXd v(dim());
    for (int k = 0; k < dim(); ++k) v[k] = params[k].upper;
    return v;
  }
};

// m replicate fields; replicate i holds coordinates S[i] (n_i x 2) and data
// Z[i] (length n_i). Replicates may have different locations and sizes.
struct SpatialDataset {
  std::vector<Points> S;
  std::vector<Eigen::VectorXd> Z;

  int replicates() const { return int(S.size()); }
  bool empty() const { return S.empty(); }

  void validate() const {
    if (S.size() != Z.size())
      throw std::invalid_argument("SpatialDataset: S/Z replicate mismatch");
    for (std::size_t i = 0; i < S.size(); ++i)
      if (S[i].rows() != Z[i].size())
        throw std::invalid_argument("SpatialDataset: replicate " +
                                    std::to_string(i + 1) + " size mismatch");
  }
};

}  // namespace nbe
