#include "emnn/shapes.hpp"

#include <cmath>
#include <map>
#include <utility>

#include "emnn/random.hpp"

namespace emnn::shapes {

Mesh triangle() { return Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

Mesh tetrahedron() {
  return Mesh({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}},
              {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

Mesh icosphere(std::size_t subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p = (1.0 / norm(p)) * p;
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (std::size_t s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto mid = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      Vec3 m = 0.5 * (v[a] + v[b]);
      m = (1.0 / norm(m)) * m;
      v.push_back(m);
      midpoint.emplace(key, v.size() - 1);
      return v.size() - 1;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& face : f) {
      const std::size_t a = mid(face[0], face[1]);
      const std::size_t b = mid(face[1], face[2]);
      const std::size_t c = mid(face[2], face[0]);
      next.push_back({face[0], a, c});
      next.push_back({face[1], b, a});
      next.push_back({face[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  return Mesh(std::move(v), std::move(f));
}

Mesh grid(std::size_t n) {
  std::vector<Vec3> v;
  v.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) v.push_back({static_cast<double>(c), static_cast<double>(r), 0.0});
  }
  std::vector<Face> f;
  for (std::size_t r = 0; r + 1 < n; ++r) {
    for (std::size_t c = 0; c + 1 < n; ++c) {
      const std::size_t a = r * n + c;
      const std::size_t b = a + 1;
      const std::size_t d = a + n;
      const std::size_t e = d + 1;
      f.push_back({a, b, e});
      f.push_back({a, e, d});
    }
  }
  return Mesh(std::move(v), std::move(f));
}

Mesh subdivided_cube(std::size_t cells) {
  std::vector<Vec3> v;
  std::map<std::array<long, 3>, std::size_t> index;  // lattice coordinate -> vertex
  const double h = 2.0 / static_cast<double>(cells);
  auto vertex = [&](const std::array<long, 3>& q) {
    if (auto it = index.find(q); it != index.end()) return it->second;
    v.push_back({-1.0 + h * static_cast<double>(q[0]), -1.0 + h * static_cast<double>(q[1]),
                 -1.0 + h * static_cast<double>(q[2])});
    index.emplace(q, v.size() - 1);
    return v.size() - 1;
  };

  std::vector<Face> f;
  const long n = static_cast<long>(cells);
  // For each axis and side, walk the face lattice with (u, w) chosen so that
  // u x w points along the outward normal.
  for (int axis = 0; axis < 3; ++axis) {
    const int u_axis = (axis + 1) % 3;
    const int w_axis = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (long a = 0; a < n; ++a) {
        for (long b = 0; b < n; ++b) {
          auto at = [&](long du, long dw) {
            std::array<long, 3> q{};
            q[axis] = side == 0 ? 0 : n;
            q[u_axis] = a + du;
            q[w_axis] = b + dw;
            return vertex(q);
          };
          const std::size_t p00 = at(0, 0), p10 = at(1, 0), p11 = at(1, 1), p01 = at(0, 1);
          if (side == 1) {
            f.push_back({p00, p10, p11});
            f.push_back({p00, p11, p01});
          } else {
            f.push_back({p00, p11, p10});
            f.push_back({p00, p01, p11});
          }
        }
      }
    }
  }
  return Mesh(std::move(v), std::move(f));
}

Mesh blob(std::size_t subdivisions) {
  const Mesh base = icosphere(subdivisions);
  std::vector<Vec3> p = base.positions();
  for (Vec3& x : p) {
    const double r = 1.0 + 0.35 * std::sin(3.0 * x[0] + 0.4) * std::cos(2.0 * x[1] - 0.3) +
                     0.2 * std::sin(4.0 * x[2] + 1.1 * x[0]);
    x = r * x;
  }
  return base.with_positions(std::move(p));
}

Mesh jitter(const Mesh& mesh, double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> p = mesh.positions();
  for (Vec3& x : p) {
    for (double& c : x) c += scale * rng.normal();
  }
  return mesh.with_positions(std::move(p));
}

Mesh sphere_or_cube(int label, std::uint64_t seed) {
  if (label == 0) return jitter(icosphere(2), 0.01, seed);
  return jitter(subdivided_cube(5), 0.02, seed);
}

}  // namespace emnn::shapes
