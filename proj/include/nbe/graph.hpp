#pragma once

#include <utility>
#include <vector>

#include "nbe/rng.hpp"
#include "nbe/types.hpp"

namespace nbe {

struct NeighbourRule {
  double radius = 0.2;
  int max_neighbours = 30;
  enum class Strategy { RandomSubsample, MinMaxOrdering };
  Strategy strategy = Strategy::RandomSubsample;

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("NeighbourRule: radius <= 0");
    if (max_neighbours < 1)
      throw std::invalid_argument("NeighbourRule: max_neighbours < 1");
  }
};

// Directed neighbour lists with parallel edge distances. j' in nbr[j] means
// j' sends a message to j; the reverse edge need not exist once the
// subsample cap binds.
struct SpatialGraph {
  Points coords;
  std::vector<std::vector<int>> nbr;
  std::vector<std::vector<double>> dist;

  int size() const { return int(coords.rows()); }
  long edge_count() const {
    long e = 0;
    for (const auto& v : nbr) e += long(v.size());
    return e;
  }
};

// Candidate neighbours of a node are all other nodes within `radius`
// (inclusive); when more than max_neighbours qualify, exactly that many are
// kept, either by uniform subsampling or by a deterministic min-max distance
// ordering. Isolated nodes get empty lists.
SpatialGraph build_graph(const Points& S, const NeighbourRule& rule, Rng& rng);

// Shifts and scales coordinates so the bounding box sits inside [0,1]^2 with
// its longer side mapped to length 1. Returns the scale factor c; a range
// estimated on the rescaled coordinates transforms back as rho = c * rho'.
std::pair<Points, double> rescale_to_unit_square(const Points& S);

}  // namespace nbe
