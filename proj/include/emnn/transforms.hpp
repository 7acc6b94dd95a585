#pragma once

#include <cstddef>
#include <vector>

#include "emnn/mesh.hpp"
#include "emnn/random.hpp"
#include "emnn/vec3.hpp"

namespace emnn {

Mat3 identity3();

/// Haar-distributed orthogonal matrix with determinant `det_sign` (+1 or -1):
/// Gram-Schmidt on a Gaussian matrix, then one row negated if needed.
Mat3 random_orthogonal(Rng& rng, int det_sign);

Vec3 random_vector(Rng& rng, double scale = 1.0);

/// Uniformly random permutation; perm[old] = new.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

/// Positions mapped to q x + t; winding reversed when requested. Scalars are kept.
Mesh transform_mesh(const Mesh& mesh, const Mat3& q, const Vec3& t, bool reverse_winding);

Mesh scale_mesh(const Mesh& mesh, double alpha);

/// Vertex v becomes vertex perm[v]; faces and scalars follow.
Mesh permute_mesh(const Mesh& mesh, const std::vector<std::size_t>& perm);

}  // namespace emnn
