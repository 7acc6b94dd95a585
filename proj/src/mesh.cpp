#include "emnn/mesh.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "emnn/error.hpp"

namespace emnn {

Mesh::Mesh(std::vector<Vec3> positions, std::vector<Face> faces)
    : positions_(std::move(positions)), faces_(std::move(faces)) {
  const std::size_t n = positions_.size();
  edges_.reserve(faces_.size() * 3);
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& face = faces_[f];
    for (std::size_t c = 0; c < 3; ++c) {
      if (face[c] >= n) {
        throw MeshError("face " + std::to_string(f) + ": vertex index " + std::to_string(face[c]) +
                        " out of range (" + std::to_string(n) + " vertices)");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw MeshError("face " + std::to_string(f) + ": repeated vertex index");
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t a = face[c];
      const std::size_t b = face[(c + 1) % 3];
      edges_.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

Mesh Mesh::with_vertex_scalars(std::size_t dim, std::vector<double> values) const {
  if (values.size() != dim * num_vertices()) {
    throw MeshError("vertex scalars: expected " + std::to_string(num_vertices()) + " rows of " +
                    std::to_string(dim) + " values, got " + std::to_string(values.size()) + " values");
  }
  Mesh out = *this;
  out.scalar_dim_ = dim;
  out.vertex_scalars_ = std::move(values);
  return out;
}

Mesh Mesh::with_positions(std::vector<Vec3> positions) const {
  if (positions.size() != num_vertices()) {
    throw MeshError("with_positions: vertex count changed");
  }
  Mesh out = *this;
  out.positions_ = std::move(positions);
  return out;
}

Mesh Mesh::with_reversed_winding() const {
  Mesh out = *this;
  for (Face& f : out.faces_) std::swap(f[1], f[2]);
  return out;
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (const auto& e : bad_edges) {
    os << "edge (" << e.edge[0] << "," << e.edge[1] << ") in " << e.faces << " faces\n";
  }
  for (std::size_t f : degenerate_faces) os << "degenerate face " << f << '\n';
  for (const auto& d : duplicate_faces) os << "face " << d[1] << " duplicates face " << d[0] << '\n';
  return os.str();
}

ValidationReport validate(const Mesh& mesh) {
  ValidationReport report;

  std::map<Edge, std::size_t> edge_count;
  for (const Face& face : mesh.faces()) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t a = face[c];
      const std::size_t b = face[(c + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (const auto& [edge, count] : edge_count) {
    if (count < 1 || count > 2) report.bad_edges.push_back({edge, count});
  }

  // Areas compared in normalized units; a fully collapsed mesh flags every face.
  const double radius = mesh.num_vertices() > 0 ? mean_radius(mesh.positions()) : 0.0;
  const FaceGeometry geo = face_geometry(mesh);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const double normalized = radius > 0.0 ? geo.areas[f] / (radius * radius) : 0.0;
    if (normalized < kDegenerateAreaThreshold) report.degenerate_faces.push_back(f);
  }

  std::map<Face, std::size_t> seen;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    Face key = mesh.faces()[f];
    std::sort(key.begin(), key.end());
    auto [it, inserted] = seen.emplace(key, f);
    if (!inserted) report.duplicate_faces.push_back({it->second, f});
  }
  return report;
}

FaceGeometry face_geometry(const Mesh& mesh) {
  FaceGeometry out;
  out.normals.reserve(mesh.num_faces());
  out.areas.reserve(mesh.num_faces());
  const auto& x = mesh.positions();
  for (const Face& f : mesh.faces()) {
    const Vec3 n = cross(x[f[1]] - x[f[0]], x[f[2]] - x[f[0]]);
    out.normals.push_back(n);
    out.areas.push_back(norm(n) / 2.0);
  }
  return out;
}

VertexGeometry vertex_geometry(const Mesh& mesh, const FaceGeometry& faces) {
  const std::size_t n = mesh.num_vertices();
  std::vector<Vec3> normal_sum(n, Vec3{0.0, 0.0, 0.0});
  std::vector<double> area_sum(n, 0.0);
  std::vector<std::size_t> degree(n, 0);

  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 weighted = faces.areas[f] * faces.normals[f];
    for (std::size_t p : mesh.faces()[f]) {
      normal_sum[p] = normal_sum[p] + weighted;
      area_sum[p] += faces.areas[f];
      ++degree[p];
    }
  }

  VertexGeometry out;
  out.normals.resize(n, Vec3{0.0, 0.0, 0.0});
  out.areas.resize(n, 0.0);
  std::size_t isolated = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (degree[p] == 0) {
      ++isolated;
      continue;
    }
    const double len = norm(normal_sum[p]);
    if (len > 0.0) out.normals[p] = (1.0 / len) * normal_sum[p];
    out.areas[p] = area_sum[p] / static_cast<double>(degree[p]);
  }
  if (isolated > 0) {
    warn(std::to_string(isolated) + " isolated vertices get zero normal and area");
  }
  return out;
}

VertexGeometry vertex_geometry(const Mesh& mesh) { return vertex_geometry(mesh, face_geometry(mesh)); }

Vec3 centroid(const std::vector<Vec3>& points) {
  Vec3 c{0.0, 0.0, 0.0};
  for (const Vec3& p : points) c = c + p;
  return (1.0 / static_cast<double>(points.size())) * c;
}

double mean_radius(const std::vector<Vec3>& points) {
  const Vec3 c = centroid(points);
  double total = 0.0;
  for (const Vec3& p : points) total += norm(p - c);
  return total / static_cast<double>(points.size());
}

Mesh normalize_mesh(const Mesh& mesh) {
  if (mesh.num_vertices() == 0) throw MeshError("normalize_mesh: empty mesh");
  const Vec3 c = centroid(mesh.positions());
  const double s = mean_radius(mesh.positions());
  if (!(s > 0.0) || !std::isfinite(s)) throw MeshError("degenerate mesh extent");
  std::vector<Vec3> out;
  out.reserve(mesh.num_vertices());
  for (const Vec3& p : mesh.positions()) out.push_back((1.0 / s) * (p - c));
  return mesh.with_positions(std::move(out));
}

// ---------------------------------------------------------------------------
// OFF I/O

namespace {

struct LineReader {
  std::istream& in;
  std::size_t line_no = 0;

  // Next non-empty line with comments stripped, split on whitespace.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      tokens.clear();
      for (std::string tok; ss >> tok;) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw MeshError("OFF line " + std::to_string(line_no) + ": " + what);
  }
};

double parse_real(const std::string& tok, const LineReader& r) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE) r.fail("non-numeric token '" + tok + "'");
  return v;
}

std::size_t parse_count(const std::string& tok, const LineReader& r) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    r.fail("non-numeric token '" + tok + "'");
  }
  if (pos != tok.size()) r.fail("non-numeric token '" + tok + "'");
  if (v < 0) r.fail("negative value '" + tok + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

Mesh read_off(std::istream& in) {
  LineReader reader{in};
  std::vector<std::string> tok;
  if (!reader.next(tok)) throw MeshError("OFF: empty file");
  if (tok[0] != "OFF") reader.fail("malformed header (expected 'OFF')");
  tok.erase(tok.begin());
  if (tok.empty() && !reader.next(tok)) reader.fail("missing counts line");
  if (tok.size() < 2) reader.fail("malformed counts line");
  const std::size_t nv = parse_count(tok[0], reader);
  const std::size_t nf = parse_count(tok[1], reader);

  std::vector<Vec3> positions;
  positions.reserve(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    if (!reader.next(tok)) reader.fail("unexpected end of file in vertex list");
    if (tok.size() < 3) reader.fail("vertex line needs 3 coordinates");
    Vec3 p{};
    for (std::size_t k = 0; k < tok.size(); ++k) {
      const double value = parse_real(tok[k], reader);
      if (k < 3) p[k] = value;
    }
    positions.push_back(p);
  }

  std::vector<Face> faces;
  faces.reserve(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    if (!reader.next(tok)) reader.fail("unexpected end of file in face list");
    const std::size_t sides = parse_count(tok[0], reader);
    if (sides != 3) reader.fail("non-triangle polygon (" + std::to_string(sides) + " vertices)");
    if (tok.size() < 4) reader.fail("face line needs 3 indices");
    Face face{};
    for (std::size_t c = 0; c < 3; ++c) {
      face[c] = parse_count(tok[c + 1], reader);
      if (face[c] >= nv) reader.fail("index out of range (" + tok[c + 1] + ")");
    }
    for (std::size_t k = 4; k < tok.size(); ++k) parse_real(tok[k], reader);  // optional colour
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) reader.fail("repeated vertex index in face");
    faces.push_back(face);
  }
  return Mesh(std::move(positions), std::move(faces));
}

Mesh load_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path.string());
  try {
    return read_off(in);
  } catch (const MeshError& e) {
    throw MeshError(path.string() + ": " + e.what());
  }
}

void write_off(std::ostream& out, const Mesh& mesh) {
  out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_faces() << ' ' << mesh.num_edges() << '\n';
  char buf[128];
  for (const Vec3& p : mesh.positions()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  for (const Face& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

void save_off(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path.string());
  write_off(out, mesh);
}

}  // namespace emnn
