#pragma once

#include <cstddef>
#include <cstdint>

#include "emnn/mesh.hpp"

namespace emnn::shapes {

// Procedural meshes used as fixtures and for the synthetic benchmark. All
// closed shapes are wound so that face normals point outwards.

/// Unit right triangle (0,0,0), (1,0,0), (0,1,0).
Mesh triangle();

Mesh tetrahedron();

/// Unit icosphere; subdivision 0 is the icosahedron (12 vertices),
/// subdivision s has 10 * 4^s + 2 vertices.
Mesh icosphere(std::size_t subdivisions);

/// Planar (n x n)-vertex grid in z = 0 with unit spacing.
Mesh grid(std::size_t n);

/// Cube [-1,1]^3 with each face split into a (cells x cells) grid.
Mesh subdivided_cube(std::size_t cells);

/// Non-convex, asymmetric closed surface: an icosphere with a smooth radial bump field.
Mesh blob(std::size_t subdivisions = 2);

/// Copy with every vertex displaced by isotropic Gaussian noise of the given scale.
Mesh jitter(const Mesh& mesh, double scale, std::uint64_t seed);

/// Member of the two-class synthetic task: a jittered icosphere (label 0,
/// 162 vertices) or a jittered subdivided cube (label 1, 152 vertices).
Mesh sphere_or_cube(int label, std::uint64_t seed);

}  // namespace emnn::shapes
