#include "emnn/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "emnn/error.hpp"

namespace emnn {

namespace {

double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

bool within_tie(double d, double best) { return d >= best * (1.0 - kTieTolerance); }

}  // namespace

std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t count, std::size_t start) {
  const std::size_t n = points.size();
  if (n == 0) throw ConfigError("fps: empty point set");
  if (count == 0) throw ConfigError("fps: count must be at least 1");
  if (start >= n) throw ConfigError("fps: start index " + std::to_string(start) + " out of range");
  if (count > n) {
    warn("fps: requested " + std::to_string(count) + " points from " + std::to_string(n) + ", clamping");
    count = n;
  }

  std::vector<std::size_t> picks{start};
  picks.reserve(count);
  std::vector<double> dmin(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[start] = 1;
  std::size_t last = start;
  while (picks.size() < count) {
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      dmin[i] = std::min(dmin[i], distance(points[i], points[last]));
      best = std::max(best, dmin[i]);
    }
    std::size_t pick = n;
    for (std::size_t i = 0; i < n && pick == n; ++i) {
      if (!taken[i] && within_tie(dmin[i], best)) pick = i;
    }
    taken[pick] = 1;
    picks.push_back(pick);
    last = pick;
  }
  return picks;
}

std::vector<std::vector<std::size_t>> radius_neighbors(const std::vector<Vec3>& points,
                                                       const std::vector<std::size_t>& centroids, double r) {
  if (!(r > 0.0)) throw ConfigError("radius_neighbors: radius must be positive");
  const double limit = r * (1.0 + kTieTolerance);
  std::vector<std::vector<std::size_t>> out(centroids.size());
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const Vec3& center = points.at(centroids[c]);
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j == centroids[c] || distance(points[j], center) <= limit) out[c].push_back(j);
    }
  }
  return out;
}

KnnResult knn(const std::vector<Vec3>& queries, const std::vector<Vec3>& candidates, std::size_t k) {
  if (candidates.empty()) throw ConfigError("knn: no candidates");
  if (k == 0) throw ConfigError("knn: k must be at least 1");
  k = std::min(k, candidates.size());
  KnnResult out;
  out.indices.resize(queries.size());
  out.distances.resize(queries.size());
  std::vector<double> d(candidates.size());
  std::vector<char> used(candidates.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t c = 0; c < candidates.size(); ++c) d[c] = distance(queries[q], candidates[c]);
    std::fill(used.begin(), used.end(), 0);
    for (std::size_t step = 0; step < k; ++step) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!used[c]) best = std::min(best, d[c]);
      }
      std::size_t pick = 0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!used[c] && d[c] <= best * (1.0 + kTieTolerance)) {
          pick = c;
          break;
        }
      }
      used[pick] = 1;
      out.indices[q].push_back(pick);
      out.distances[q].push_back(d[pick]);
    }
  }
  return out;
}

std::vector<double> unpool_weights(const std::vector<double>& distances) {
  if (distances.empty()) return {};
  std::vector<double> w(distances.size(), 0.0);
  std::size_t coincident = 0;
  for (double d : distances) coincident += d <= kCoincidentDistance ? 1 : 0;
  if (coincident > 0) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (distances[i] <= kCoincidentDistance) w[i] = 1.0 / static_cast<double>(coincident);
    }
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 1.0 / distances[i];
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double mean_nearest_neighbor_distance(const std::vector<Vec3>& points) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) best = std::min(best, distance(points[i], points[j]));
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

namespace {

double per_level(const std::vector<double>& values, std::size_t l, double fallback) {
  if (values.empty()) return fallback;
  if (values.size() == 1) return values[0];
  return values.at(l);
}

}  // namespace

Hierarchy build_hierarchy(const std::vector<Vec3>& points, const HierarchyOptions& options) {
  if (options.depth == 0) throw ConfigError("hierarchy depth must be at least 1");
  if (points.empty()) throw ConfigError("hierarchy: empty point set");
  const std::size_t steps = options.depth - 1;
  if (options.ratios.size() > 1 && options.ratios.size() != steps) {
    throw ConfigError("hierarchy: expected " + std::to_string(steps) + " ratios, got " +
                      std::to_string(options.ratios.size()));
  }
  if (options.radii.size() > 1 && options.radii.size() != steps) {
    throw ConfigError("hierarchy: expected " + std::to_string(steps) + " radii, got " +
                      std::to_string(options.radii.size()));
  }

  Hierarchy h;
  h.base_size = points.size();
  std::vector<Vec3> parent = points;
  for (std::size_t l = 0; l < steps; ++l) {
    const double ratio = per_level(options.ratios, l, 0.25);
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("hierarchy: ratio must lie in (0, 1]");
    const auto count = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(parent.size()) - 1e-9));
    if (count < 1) throw ConfigError("hierarchy: level " + std::to_string(l + 1) + " collapses to zero vertices");

    HierarchyLevel level;
    level.parent_size = parent.size();
    level.centroids = fps(parent, count, l == 0 ? std::min(options.fps_start, parent.size() - 1) : 0);
    for (std::size_t c : level.centroids) level.positions.push_back(parent[c]);

    double r = per_level(options.radii, l, 0.0);
    if (options.radii.empty()) {
      const double nn = mean_nearest_neighbor_distance(parent);
      r = nn > 0.0 ? options.radius_factor * nn : 1.0;
    }
    if (!(r > 0.0)) throw ConfigError("hierarchy: radius must be positive");
    level.radius = r;
    level.neighborhoods = radius_neighbors(parent, level.centroids, r);
    for (std::size_t c = 0; c < level.neighborhoods.size(); ++c) {
      for (std::size_t j : level.neighborhoods[c]) {
        level.pool_source.push_back(j);
        level.pool_segment.push_back(c);
      }
    }

    const KnnResult nearest = knn(parent, level.positions, options.k);
    for (std::size_t v = 0; v < parent.size(); ++v) {
      const std::vector<double> w = unpool_weights(nearest.distances[v]);
      for (std::size_t e = 0; e < w.size(); ++e) {
        level.unpool_source.push_back(nearest.indices[v][e]);
        level.unpool_target.push_back(v);
        level.unpool_weight.push_back(w[e]);
      }
    }

    parent = level.positions;
    h.levels.push_back(std::move(level));
  }
  return h;
}

Hierarchy relabel_hierarchy(const Hierarchy& hierarchy, const std::vector<std::size_t>& perm) {
  if (perm.size() != hierarchy.base_size) throw ConfigError("relabel_hierarchy: permutation size mismatch");
  Hierarchy out = hierarchy;
  if (out.levels.empty()) return out;
  HierarchyLevel& first = out.levels.front();
  for (auto& c : first.centroids) c = perm[c];
  for (auto& nb : first.neighborhoods) {
    for (auto& j : nb) j = perm[j];
    std::sort(nb.begin(), nb.end());
  }
  first.pool_source.clear();
  first.pool_segment.clear();
  for (std::size_t c = 0; c < first.neighborhoods.size(); ++c) {
    for (std::size_t j : first.neighborhoods[c]) {
      first.pool_source.push_back(j);
      first.pool_segment.push_back(c);
    }
  }

  // Re-emit interpolation entries grouped by new target index, keeping each
  // vertex's own KNN order.
  const std::size_t n = hierarchy.base_size;
  std::vector<std::size_t> inverse(n);
  for (std::size_t v = 0; v < n; ++v) inverse[perm[v]] = v;
  std::vector<std::size_t> begin(n + 1, 0);
  for (ad::Index t : hierarchy.levels.front().unpool_target) ++begin[t + 1];
  for (std::size_t v = 0; v < n; ++v) begin[v + 1] += begin[v];
  const HierarchyLevel& src = hierarchy.levels.front();
  first.unpool_source.clear();
  first.unpool_target.clear();
  first.unpool_weight.clear();
  for (std::size_t nv = 0; nv < n; ++nv) {
    const std::size_t old = inverse[nv];
    for (std::size_t e = begin[old]; e < begin[old + 1]; ++e) {
      first.unpool_source.push_back(src.unpool_source[e]);
      first.unpool_target.push_back(nv);
      first.unpool_weight.push_back(src.unpool_weight[e]);
    }
  }
  return out;
}

ad::Tensor pool(const ad::Tensor& h_parent, const HierarchyLevel& level, const Mlp& phi_p, const BoundParameters& p) {
  if (h_parent.dim(0) != level.parent_size) {
    throw ShapeError("pool: features have " + std::to_string(h_parent.dim(0)) + " rows, level expects " +
                     std::to_string(level.parent_size));
  }
  const ad::Tensor lifted = phi_p(h_parent, p);
  return ad::segment_max(ad::gather_rows(lifted, level.pool_source), level.pool_segment, level.size());
}

ad::Tensor interpolate(const ad::Tensor& h_child, const HierarchyLevel& level) {
  if (h_child.dim(0) != level.size()) {
    throw ShapeError("unpool: features have " + std::to_string(h_child.dim(0)) + " rows, level has " +
                     std::to_string(level.size()) + " centroids");
  }
  const ad::Tensor w = h_child.tape().constant({level.unpool_weight.size()}, level.unpool_weight);
  const ad::Tensor rows = ad::scale_rows(ad::gather_rows(h_child, level.unpool_source), w);
  return ad::segment_sum(rows, level.unpool_target, level.parent_size);
}

ad::Tensor unpool(const ad::Tensor& h_child, const ad::Tensor& h_skip, const HierarchyLevel& level, const Mlp& phi_u,
                  const BoundParameters& p) {
  return phi_u(ad::concat({interpolate(h_child, level), h_skip}), p);
}

}  // namespace emnn
