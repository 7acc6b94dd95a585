#pragma once

#include <cstddef>
#include <vector>

#include "emnn/nn.hpp"
#include "emnn/tensor.hpp"
#include "emnn/vec3.hpp"

namespace emnn {

// Distances within this relative margin of each other count as ties, which
// are broken by the lower index. Keeps selections stable when a rigid motion
// perturbs symmetric configurations at the rounding level.
inline constexpr double kTieTolerance = 1e-9;

// Below this distance a parent vertex is treated as coinciding with a centroid.
inline constexpr double kCoincidentDistance = 1e-12;

/// Greedy farthest point sampling. Returns `count` indices in pick order,
/// starting at `start`. A count above the point count is clamped (warning).
std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t count, std::size_t start = 0);

/// For each centroid, all points within distance r (inclusive), in ascending index order.
std::vector<std::vector<std::size_t>> radius_neighbors(const std::vector<Vec3>& points,
                                                       const std::vector<std::size_t>& centroids, double r);

struct KnnResult {
  std::vector<std::vector<std::size_t>> indices;  // into the candidate list
  std::vector<std::vector<double>> distances;     // ascending
};

/// The min(k, |candidates|) nearest candidates of every query point.
KnnResult knn(const std::vector<Vec3>& queries, const std::vector<Vec3>& candidates, std::size_t k);

/// Normalized inverse-distance weights. If any distance is at most
/// kCoincidentDistance, the coincident entries share the weight equally.
std::vector<double> unpool_weights(const std::vector<double>& distances);

/// Mean distance from each point to its nearest other point; 0 for fewer than two points.
double mean_nearest_neighbor_distance(const std::vector<Vec3>& points);

struct HierarchyOptions {
  std::size_t depth = 3;        // number of resolution levels including the input mesh
  std::vector<double> ratios;   // per pooling step; one value is broadcast, empty means 0.25
  std::vector<double> radii;    // per pooling step; empty means radius_factor * mean NN distance
  std::size_t k = 3;            // unpooling neighbours
  std::size_t fps_start = 0;
  double radius_factor = 2.0;
};

/// One coarsening step from a parent level to its FPS centroids.
struct HierarchyLevel {
  std::size_t parent_size = 0;
  std::vector<std::size_t> centroids;  // indices into the parent level, FPS order
  std::vector<Vec3> positions;         // centroid positions
  double radius = 0.0;
  std::vector<std::vector<std::size_t>> neighborhoods;

  // Flattened neighbourhoods: pooled row pool_segment[e] takes parent row pool_source[e].
  std::vector<ad::Index> pool_source;
  std::vector<ad::Index> pool_segment;

  // Flattened KNN interpolation: parent row unpool_target[e] receives
  // unpool_weight[e] times centroid row unpool_source[e].
  std::vector<ad::Index> unpool_source;
  std::vector<ad::Index> unpool_target;
  std::vector<double> unpool_weight;

  std::size_t size() const { return centroids.size(); }
};

/// levels[l] coarsens level l into level l + 1; level 0 is the input point set.
struct Hierarchy {
  std::size_t base_size = 0;
  std::vector<HierarchyLevel> levels;

  std::size_t depth() const { return levels.size() + 1; }
  std::size_t level_size(std::size_t l) const { return l == 0 ? base_size : levels[l - 1].size(); }
};

Hierarchy build_hierarchy(const std::vector<Vec3>& points, const HierarchyOptions& options);

/// The same hierarchy expressed for relabeled input points, where old vertex
/// v becomes new vertex perm[v]. Coarser levels keep their labels.
Hierarchy relabel_hierarchy(const Hierarchy& hierarchy, const std::vector<std::size_t>& perm);

/// h_child[i] = max over the neighbourhood of phi_p(h_parent).
ad::Tensor pool(const ad::Tensor& h_parent, const HierarchyLevel& level, const Mlp& phi_p, const BoundParameters& p);

/// Inverse-distance interpolation of child features onto the parent level.
ad::Tensor interpolate(const ad::Tensor& h_child, const HierarchyLevel& level);

/// phi_u([interpolate(h_child), h_skip]).
ad::Tensor unpool(const ad::Tensor& h_child, const ad::Tensor& h_skip, const HierarchyLevel& level, const Mlp& phi_u,
                  const BoundParameters& p);

}  // namespace emnn
