#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "emnn/vec3.hpp"

namespace emnn {

/// Vertex indices of a triangle. The stored order is the winding and defines
/// the orientation of the face normal.
using Face = std::array<std::size_t, 3>;

/// Unordered vertex pair, stored with e[0] < e[1].
using Edge = std::array<std::size_t, 2>;

/// Immutable triangle mesh.
///
/// Construction checks that every face references existing, pairwise
/// distinct vertices and derives the undirected edge set (sorted, unique).
/// Manifoldness is not enforced here; see validate().
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Vec3> positions, std::vector<Face> faces);

  std::size_t num_vertices() const { return positions_.size(); }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Row-major n x scalar_dim() table of initial invariant features.
  const std::vector<double>& vertex_scalars() const { return vertex_scalars_; }
  std::size_t scalar_dim() const { return scalar_dim_; }

  /// Copy with per-vertex scalars attached. Throws MeshError when the row
  /// count does not match the vertex count.
  Mesh with_vertex_scalars(std::size_t dim, std::vector<double> values) const;

  /// Copy with new positions and the same connectivity.
  Mesh with_positions(std::vector<Vec3> positions) const;

  /// Copy with every face's winding reversed (second and third corner swapped).
  Mesh with_reversed_winding() const;

 private:
  std::vector<Vec3> positions_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::vector<double> vertex_scalars_;
  std::size_t scalar_dim_ = 0;
};

/// Faces below this area (measured in normalized units, i.e. divided by the
/// squared mean radius) are flagged as degenerate.
inline constexpr double kDegenerateAreaThreshold = 1e-12;

struct EdgeFaceCount {
  Edge edge;
  std::size_t faces;
};

struct ValidationReport {
  std::vector<EdgeFaceCount> bad_edges;  // edges shared by more than two faces
  std::vector<std::size_t> degenerate_faces;
  std::vector<std::array<std::size_t, 2>> duplicate_faces;  // (first, repeat)

  bool ok() const { return bad_edges.empty() && degenerate_faces.empty() && duplicate_faces.empty(); }
  std::string summary() const;
};

ValidationReport validate(const Mesh& mesh);

struct FaceGeometry {
  std::vector<Vec3> normals;  // unnormalized cross products, winding-ordered
  std::vector<double> areas;
};

struct VertexGeometry {
  std::vector<Vec3> normals;  // unit length; zero for isolated vertices
  std::vector<double> areas;  // mean area of adjacent faces
};

FaceGeometry face_geometry(const Mesh& mesh);

/// Area-weighted vertex normals and mean adjacent face area. Isolated
/// vertices get a zero normal and zero area and raise a warning.
VertexGeometry vertex_geometry(const Mesh& mesh, const FaceGeometry& faces);
VertexGeometry vertex_geometry(const Mesh& mesh);

Vec3 centroid(const std::vector<Vec3>& points);

/// Mean distance of the points to their centroid.
double mean_radius(const std::vector<Vec3>& points);

/// Translates the centroid to the origin and divides by the mean distance to
/// the centroid. Throws MeshError("degenerate mesh extent") when all
/// vertices coincide.
Mesh normalize_mesh(const Mesh& mesh);

Mesh read_off(std::istream& in);
Mesh load_off(const std::filesystem::path& path);

/// ASCII OFF with 17 significant digits, so a read-back is bit-identical.
void write_off(std::ostream& out, const Mesh& mesh);
void save_off(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace emnn
