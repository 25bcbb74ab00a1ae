#include "nbe/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nbe {

namespace {

struct Candidate {
  int index;
  double dist;
};

// Uniform k-subset by partial Fisher-Yates over the candidate list.
void random_subsample(std::vector<Candidate>& c, int k, Rng& rng) {
  for (int i = 0; i < k; ++i) {
    const int j = int(rng.uniform_int(i, std::int64_t(c.size()) - 1));
    std::swap(c[i], c[j]);
  }
  c.resize(k);
}

// Deterministic min-max selection: seed with the nearest candidate, then
// repeatedly add the candidate whose minimum distance to the already-selected
// set is largest (ties broken by node index).
void minmax_subsample(const Points& s, std::vector<Candidate>& c, int k) {
  std::vector<Candidate> selected;
  selected.reserve(k);
  std::vector<double> min_dist(c.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> used(c.size(), false);

  std::size_t pick = 0;  // candidates are sorted by (dist, index); c[0] is nearest
  for (int round = 0; round < k; ++round) {
    selected.push_back(c[pick]);
    used[pick] = true;
    const auto chosen = s.row(c[pick].index);
    double best = -1.0;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (used[i]) continue;
      const double d = (s.row(c[i].index) - chosen).norm();
      min_dist[i] = std::min(min_dist[i], d);
      if (min_dist[i] > best) {
        best = min_dist[i];
        best_at = i;
      }
    }
    pick = best_at;
  }
  c = std::move(selected);
}

}  // namespace

SpatialGraph build_graph(const Points& S, const NeighbourRule& rule, Rng& rng) {
  rule.validate();
  const int n = int(S.rows());
  if (n < 1) throw std::invalid_argument("build_graph: need n >= 1");

  SpatialGraph g;
  g.coords = S;
  g.nbr.resize(n);
  g.dist.resize(n);

  // Grid-bucket index with cell size = radius, so candidates of a node lie in
  // its 3x3 cell neighbourhood.
  const double r = rule.radius;
  const double min_x = S.col(0).minCoeff(), min_y = S.col(1).minCoeff();
  const double max_x = S.col(0).maxCoeff(), max_y = S.col(1).maxCoeff();
  const int nx = std::max(1, int(std::floor((max_x - min_x) / r)) + 1);
  const int ny = std::max(1, int(std::floor((max_y - min_y) / r)) + 1);
  auto cell_of = [&](int i) {
    int cx = std::min(nx - 1, int((S(i, 0) - min_x) / r));
    int cy = std::min(ny - 1, int((S(i, 1) - min_y) / r));
    return cy * nx + cx;
  };
  std::vector<std::vector<int>> buckets(std::size_t(nx) * ny);
  for (int i = 0; i < n; ++i) buckets[cell_of(i)].push_back(i);

  std::vector<Candidate> cands;
  for (int j = 0; j < n; ++j) {
    cands.clear();
    const int cx = std::min(nx - 1, int((S(j, 0) - min_x) / r));
    const int cy = std::min(ny - 1, int((S(j, 1) - min_y) / r));
    for (int by = std::max(0, cy - 1); by <= std::min(ny - 1, cy + 1); ++by)
      for (int bx = std::max(0, cx - 1); bx <= std::min(nx - 1, cx + 1); ++bx)
        for (int i : buckets[std::size_t(by) * nx + bx]) {
          if (i == j) continue;
          const double d = (S.row(i) - S.row(j)).norm();
          if (d <= r) cands.push_back({i, d});
        }
    // Sorted candidate order makes the result independent of bucket layout.
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.dist != b.dist ? a.dist < b.dist : a.index < b.index;
    });
    if (int(cands.size()) > rule.max_neighbours) {
      if (rule.strategy == NeighbourRule::Strategy::RandomSubsample)
        random_subsample(cands, rule.max_neighbours, rng);
      else
        minmax_subsample(S, cands, rule.max_neighbours);
    }
    g.nbr[j].reserve(cands.size());
    g.dist[j].reserve(cands.size());
    for (const auto& c : cands) {
      g.nbr[j].push_back(c.index);
      g.dist[j].push_back(c.dist);
    }
  }
  return g;
}

std::pair<Points, double> rescale_to_unit_square(const Points& S) {
  if (S.rows() < 2)
    throw std::invalid_argument("rescale_to_unit_square: need n >= 2");
  const double min_x = S.col(0).minCoeff(), min_y = S.col(1).minCoeff();
  const double w = S.col(0).maxCoeff() - min_x;
  const double h = S.col(1).maxCoeff() - min_y;
  const double c = std::max(w, h);
  if (c <= 0.0)
    throw std::invalid_argument("rescale_to_unit_square: all points identical");
  Points out(S.rows(), 2);
  out.col(0) = (S.col(0).array() - min_x) / c;
  out.col(1) = (S.col(1).array() - min_y) / c;
  return {out, c};
}

}  // namespace nbe
