#include "emnn/transforms.hpp"

#include <numeric>

#include "emnn/error.hpp"

namespace emnn {

Mat3 identity3() { return {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}; }

Mat3 random_orthogonal(Rng& rng, int det_sign) {
  if (det_sign != 1 && det_sign != -1) throw ConfigError("random_orthogonal: determinant must be +1 or -1");
  for (;;) {
    Mat3 m;
    for (auto& row : m) row = random_vector(rng);
    // Gram-Schmidt; the implied R has a positive diagonal, which makes Q Haar distributed.
    bool ok = true;
    for (std::size_t i = 0; i < 3 && ok; ++i) {
      for (std::size_t j = 0; j < i; ++j) m[i] = m[i] - dot(m[i], m[j]) * m[j];
      const double len = norm(m[i]);
      if (len < 1e-8) ok = false;
      else m[i] = (1.0 / len) * m[i];
    }
    if (!ok) continue;
    if ((determinant(m) > 0.0) != (det_sign > 0)) m[2] = -1.0 * m[2];
    return m;
  }
}

Vec3 random_vector(Rng& rng, double scale) {
  const double x = rng.normal(), y = rng.normal(), z = rng.normal();
  return {scale * x, scale * y, scale * z};
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  return perm;
}

Mesh transform_mesh(const Mesh& mesh, const Mat3& q, const Vec3& t, bool reverse_winding) {
  std::vector<Vec3> pos;
  pos.reserve(mesh.num_vertices());
  for (const Vec3& p : mesh.positions()) pos.push_back(mat_vec(q, p) + t);
  Mesh out = mesh.with_positions(std::move(pos));
  return reverse_winding ? out.with_reversed_winding() : out;
}

Mesh scale_mesh(const Mesh& mesh, double alpha) {
  std::vector<Vec3> pos;
  pos.reserve(mesh.num_vertices());
  for (const Vec3& p : mesh.positions()) pos.push_back(alpha * p);
  return mesh.with_positions(std::move(pos));
}

Mesh permute_mesh(const Mesh& mesh, const std::vector<std::size_t>& perm) {
  const std::size_t n = mesh.num_vertices();
  if (perm.size() != n) throw ConfigError("permute_mesh: permutation size mismatch");
  std::vector<Vec3> pos(n);
  for (std::size_t v = 0; v < n; ++v) pos.at(perm[v]) = mesh.positions()[v];
  std::vector<Face> faces = mesh.faces();
  for (Face& f : faces) {
    for (auto& i : f) i = perm[i];
  }
  Mesh out(std::move(pos), std::move(faces));
  if (mesh.scalar_dim() > 0) {
    const std::size_t d = mesh.scalar_dim();
    std::vector<double> s(n * d);
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t k = 0; k < d; ++k) s[perm[v] * d + k] = mesh.vertex_scalars()[v * d + k];
    }
    out = out.with_vertex_scalars(d, std::move(s));
  }
  return out;
}

}  // namespace emnn
