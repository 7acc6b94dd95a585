#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "emnn/error.hpp"
#include "emnn/layers.hpp"
#include "emnn/shapes.hpp"
#include "emnn/transforms.hpp"
#include "support.hpp"

using namespace emnn;
using ad::Tensor;

namespace {

using Matrix = std::vector<std::vector<double>>;

const ad::Parameter& find_param(const ParameterSet& ps, const std::string& name) {
  for (const auto& p : ps.all()) {
    if (p.name == name) return p;
  }
  throw std::runtime_error("no parameter " + name);
}

ad::Parameter& find_param(ParameterSet& ps, const std::string& name) {
  for (auto& p : ps.all()) {
    if (p.name == name) return p;
  }
  throw std::runtime_error("no parameter " + name);
}

double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }

// Plain-loop MLP from the stored weights.
std::vector<double> mlp_ref(const ParameterSet& ps, const std::string& name, std::size_t layers, bool act_out,
                            std::vector<double> x) {
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = find_param(ps, name + "." + std::to_string(l) + ".weight");
    const auto& b = find_param(ps, name + "." + std::to_string(l) + ".bias");
    const std::size_t in = w.shape[0], out = w.shape[1];
    REQUIRE(x.size() == in);
    std::vector<double> y(b.value);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) y[o] += x[i] * w.value[i * out + o];
    }
    if (l + 1 < layers || act_out) {
      for (double& v : y) v = silu_ref(v);
    }
    x = std::move(y);
  }
  return x;
}

Vec3 channel(const std::vector<double>& x, std::size_t c, std::size_t v, std::size_t k) {
  const double* p = x.data() + v * 3 * c + 3 * k;
  return {p[0], p[1], p[2]};
}

struct RefOutput {
  std::vector<double> h, x;
};

// Independent EMNN/EGNN layer: messages, sums over neighbours and corners
// taken straight from the mesh, sum aggregation.
RefOutput layer_ref(const ParameterSet& ps, const std::string& name, const LayerDims& dims, bool faces_on,
                    std::size_t n, const std::vector<Edge>& edges, const std::vector<Face>& faces,
                    const std::vector<double>& h, const std::vector<double>& x, double eps) {
  const std::size_t d = dims.message, cin = dims.channels_in, cout = dims.channels_out, hd = dims.h_in;
  Matrix me(n, std::vector<double>(d, 0.0)), mf(n, std::vector<double>(d, 0.0));
  Matrix dx(n, std::vector<double>(3 * cout, 0.0));

  auto hrow = [&](std::size_t v) { return std::vector<double>(h.begin() + v * hd, h.begin() + (v + 1) * hd); };

  std::vector<std::pair<std::size_t, std::size_t>> directed;
  for (const Edge& e : edges) {
    directed.emplace_back(e[0], e[1]);
    directed.emplace_back(e[1], e[0]);
  }
  for (const auto& [i, j] : directed) {
    std::vector<double> in = hrow(i);
    const auto hj = hrow(j);
    in.insert(in.end(), hj.begin(), hj.end());
    for (std::size_t k = 0; k < cin; ++k) {
      const Vec3 diff = channel(x, cin, i, k) - channel(x, cin, j, k);
      in.push_back(std::sqrt(dot(diff, diff) + eps));
    }
    const auto m = mlp_ref(ps, name + ".phi_e", 2, true, in);
    for (std::size_t a = 0; a < d; ++a) me[i][a] += m[a];
    const auto mix = mlp_ref(ps, name + ".phi_x", 2, false, m);
    for (std::size_t a = 0; a < cin; ++a) {
      const Vec3 diff = channel(x, cin, i, a) - channel(x, cin, j, a);
      for (std::size_t b = 0; b < cout; ++b) {
        for (std::size_t r = 0; r < 3; ++r) dx[i][3 * b + r] += diff[r] * mix[a * cout + b];
      }
    }
  }

  if (faces_on) {
    for (const Face& f : faces) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t i = f[c], j = f[(c + 1) % 3], k = f[(c + 2) % 3];
        std::vector<double> in = hrow(i);
        for (std::size_t a = 0; a < hd; ++a) in.push_back(h[j * hd + a] + h[k * hd + a]);
        std::vector<Vec3> crosses;
        for (std::size_t a = 0; a < cin; ++a) {
          const Vec3 xi = channel(x, cin, i, a);
          const Vec3 cr = cross(channel(x, cin, j, a) - xi, channel(x, cin, k, a) - xi);
          crosses.push_back(cr);
          in.push_back(std::sqrt(dot(cr, cr) + eps));
        }
        const auto m = mlp_ref(ps, name + ".phi_s", 2, true, in);
        for (std::size_t a = 0; a < d; ++a) mf[i][a] += m[a];
        const auto mix = mlp_ref(ps, name + ".phi_t", 2, false, m);
        for (std::size_t a = 0; a < cin; ++a) {
          for (std::size_t b = 0; b < cout; ++b) {
            for (std::size_t r = 0; r < 3; ++r) dx[i][3 * b + r] += crosses[a][r] * mix[a * cout + b];
          }
        }
      }
    }
  }

  RefOutput out;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> in = hrow(v);
    in.insert(in.end(), me[v].begin(), me[v].end());
    in.insert(in.end(), mf[v].begin(), mf[v].end());
    const auto hv = mlp_ref(ps, name + ".phi_h", 2, false, in);
    out.h.insert(out.h.end(), hv.begin(), hv.end());
    for (std::size_t b = 0; b < cout; ++b) {
      for (std::size_t r = 0; r < 3; ++r) {
        const double res = b < cin ? x[v * 3 * cin + 3 * b + r] : 0.0;
        out.x.push_back(res + dx[v][3 * b + r]);
      }
    }
  }
  return out;
}

std::vector<double> mesh_x(const Mesh& m, std::size_t channels, Rng& rng) {
  std::vector<double> x;
  for (const Vec3& p : m.positions()) {
    x.insert(x.end(), p.begin(), p.end());
    for (std::size_t c = 1; c < channels; ++c) {
      for (int a = 0; a < 3; ++a) x.push_back(rng.normal());
    }
  }
  return x;
}

LayerDims small_dims(std::size_t h_in, std::size_t cin, std::size_t cout) {
  LayerDims d;
  d.h_in = h_in;
  d.h_out = 5;
  d.channels_in = cin;
  d.channels_out = cout;
  d.message = 6;
  d.hidden = 7;
  return d;
}

struct Fixture {
  ParameterSet params;
  Rng rng{21};
  EquiLayer layer;
  Fixture(LayerDims dims, LayerOptions options = {}) : layer(params, "layer", dims, options, rng) {}
};

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("incidence lists both directions of every edge and three corners per face") {
  const Mesh m = shapes::icosphere(1);
  const Incidence inc = Incidence::from_mesh(m);
  CHECK(inc.num_messages() == 2 * m.num_edges());
  CHECK(inc.num_corners() == 3 * m.num_faces());
  for (std::size_t e = 1; e < inc.num_messages(); ++e) {
    CHECK(std::pair(inc.edge_target[e - 1], inc.edge_source[e - 1]) <
          std::pair(inc.edge_target[e], inc.edge_source[e]));
  }
  // Winding order: each corner triple is a rotation of a stored face.
  std::set<std::array<std::size_t, 3>> rotations;
  for (const Face& f : m.faces()) {
    for (std::size_t c = 0; c < 3; ++c) rotations.insert({f[c], f[(c + 1) % 3], f[(c + 2) % 3]});
  }
  for (std::size_t c = 0; c < inc.num_corners(); ++c) {
    CHECK(rotations.count({inc.corner_i[c], inc.corner_j[c], inc.corner_k[c]}) == 1);
  }
  const Incidence by_index = Incidence::from_mesh(m, CornerOrder::vertex_index);
  for (std::size_t c = 0; c < by_index.num_corners(); ++c) CHECK(by_index.corner_j[c] < by_index.corner_k[c]);
  CHECK_THROWS_AS(Incidence::from_graph(2, {{0, 2}}), MeshError);
}

TEST_CASE("layer matches an independent reference on random meshes") {
  for (std::size_t cin : {1u, 2u}) {
    for (std::size_t cout : {1u, 2u, 3u}) {
      for (bool faces_on : {false, true}) {
        LayerOptions opt;
        opt.face_pathway = faces_on;
        Fixture f(small_dims(4, cin, cout), opt);
        const Mesh m = shapes::jitter(shapes::icosphere(1), 0.1, 4);
        Rng rng(cin * 10 + cout);
        const std::vector<double> h = testing::random_values(rng, m.num_vertices() * 4);
        const std::vector<double> x = mesh_x(m, cin, rng);

        ad::Tape tape;
        BoundParameters p(tape, f.params);
        const NodeState s{tape.constant({m.num_vertices(), 4}, h), tape.constant({m.num_vertices(), 3 * cin}, x)};
        const NodeState out = f.layer.apply(s, Incidence::from_mesh(m), p, faces_on);
        const RefOutput ref = layer_ref(f.params, "layer", f.layer.dims(), faces_on, m.num_vertices(), m.edges(),
                                        m.faces(), h, x, opt.norm_eps);
        CHECK(testing::max_abs_diff(out.h.values(), ref.h) < 1e-11);
        CHECK(testing::max_abs_diff(out.x.values(), ref.x) < 1e-11);
      }
    }
  }
}

TEST_CASE("two-node graph unrolled by hand") {
  Fixture f(small_dims(2, 1, 1), LayerOptions{.face_pathway = false});
  const std::vector<double> h{0.3, -1.0, 0.7, 0.2};
  const std::vector<double> x{0, 0, 0, 1, 2, 2};
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({2, 2}, h), tape.constant({2, 3}, x)};
  const NodeState out = egnn_layer(f.layer, s, Incidence::from_graph(2, {{0, 1}}), p);

  // Distance is 3 in both directions.
  const double dist = std::sqrt(9.0 + 1e-9);
  const auto m01 = mlp_ref(f.params, "layer.phi_e", 2, true, {0.3, -1.0, 0.7, 0.2, dist});
  const auto m10 = mlp_ref(f.params, "layer.phi_e", 2, true, {0.7, 0.2, 0.3, -1.0, dist});
  std::vector<double> in0{0.3, -1.0}, in1{0.7, 0.2};
  in0.insert(in0.end(), m01.begin(), m01.end());
  in1.insert(in1.end(), m10.begin(), m10.end());
  in0.resize(in0.size() + 6, 0.0);
  in1.resize(in1.size() + 6, 0.0);
  const auto h0 = mlp_ref(f.params, "layer.phi_h", 2, false, in0);
  const auto h1 = mlp_ref(f.params, "layer.phi_h", 2, false, in1);
  const double w0 = mlp_ref(f.params, "layer.phi_x", 2, false, m01)[0];
  const double w1 = mlp_ref(f.params, "layer.phi_x", 2, false, m10)[0];
  for (std::size_t a = 0; a < 5; ++a) {
    CHECK(out.h.values()[a] == doctest::Approx(h0[a]).epsilon(1e-13));
    CHECK(out.h.values()[5 + a] == doctest::Approx(h1[a]).epsilon(1e-13));
  }
  const double expect0[3] = {-1 * w0, -2 * w0, -2 * w0};
  const double expect1[3] = {1 + w1, 2 + 2 * w1, 2 + 2 * w1};
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(out.x.values()[a] == doctest::Approx(expect0[a]).epsilon(1e-13));
    CHECK(out.x.values()[3 + a] == doctest::Approx(expect1[a]).epsilon(1e-13));
  }
}

TEST_CASE("coincident nodes give finite values and gradients") {
  Fixture f(small_dims(1, 1, 1));
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const Tensor x = tape.variable({3, 3}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1, 0, 0});
  const NodeState s{tape.constant({3, 1}, {1, 1, 1}), x};
  const NodeState out = emnn_layer(f.layer, s, Incidence::from_graph(3, {{0, 1}, {1, 2}, {0, 2}}, {{0, 1, 2}}), p);
  tape.backward(ad::add(ad::sum(out.h), ad::sum(out.x)));
  for (double g : x.grad()) CHECK(std::isfinite(g));
  for (double v : out.x.values()) CHECK(std::isfinite(v));
}

TEST_CASE("edge messages are invariant to rotation and translation") {
  Fixture f(small_dims(3, 2, 2));
  const Mesh m = shapes::jitter(shapes::icosphere(1), 0.05, 8);
  Rng rng(3);
  const std::vector<double> h = testing::random_values(rng, m.num_vertices() * 3);
  const std::vector<double> x = mesh_x(m, 2, rng);
  const Mat3 q = random_orthogonal(rng, 1);
  const Vec3 t = random_vector(rng, 3.0);
  std::vector<double> y(x.size());
  for (std::size_t v = 0; v < m.num_vertices(); ++v) {
    for (std::size_t c = 0; c < 2; ++c) {
      Vec3 r = mat_vec(q, channel(x, 2, v, c));
      if (c == 0) r = r + t;
      std::copy(r.begin(), r.end(), y.begin() + v * 6 + 3 * c);
    }
  }
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const Incidence inc = Incidence::from_mesh(m);
  const Tensor hh = tape.constant({m.num_vertices(), 3}, h);
  const Tensor a = f.layer.edge_messages({hh, tape.constant({m.num_vertices(), 6}, x)}, inc, p);
  const Tensor b = f.layer.edge_messages({hh, tape.constant({m.num_vertices(), 6}, y)}, inc, p);
  CHECK(testing::max_abs_diff(a.values(), b.values()) < 1e-12);
}

TEST_CASE("per-channel distances") {
  Fixture f(small_dims(1, 2, 2));
  ad::Tape tape;
  // Channel 0 separates by (3, 4, 0), channel 1 by (0, 0, 2).
  const NodeState s{tape.constant({2, 1}, {0, 0}), tape.constant({2, 6}, {0, 0, 0, 1, 1, 1, 3, 4, 0, 1, 1, 3})};
  const Tensor d = f.layer.edge_distances(s, Incidence::from_graph(2, {{0, 1}}));
  REQUIRE(d.shape() == ad::Shape{2, 2});
  CHECK(d.values()[0] == doctest::Approx(std::sqrt(25.0 + 1e-9)).epsilon(1e-15));
  CHECK(d.values()[1] == doctest::Approx(std::sqrt(4.0 + 1e-9)).epsilon(1e-15));
  CHECK(d.values()[2] == d.values()[0]);

  Fixture sq(small_dims(1, 2, 2), LayerOptions{.squared_distance = true});
  const Tensor d2 = sq.layer.edge_distances(s, Incidence::from_graph(2, {{0, 1}}));
  CHECK(d2.values()[0] == doctest::Approx(25.0 + 1e-9).epsilon(1e-15));
}

TEST_CASE("unit right triangle has cross norm one at every corner") {
  Fixture f(small_dims(1, 1, 1));
  const Mesh tri = shapes::triangle();
  ad::Tape tape;
  const NodeState s{tape.constant({3, 1}, {0, 0, 0}), tape.constant({3, 3}, mesh_x(tri, 1, f.rng))};
  const Tensor c = f.layer.corner_cross(s, Incidence::from_mesh(tri));
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(c.values()[3 * r + 0] == 0.0);
    CHECK(c.values()[3 * r + 1] == 0.0);
    CHECK(c.values()[3 * r + 2] == 1.0);
  }
}

TEST_CASE("face messages ignore the order of j and k") {
  Fixture f(small_dims(2, 1, 1));
  const Mesh m = shapes::jitter(shapes::icosphere(1), 0.1, 2);
  Rng rng(9);
  const std::vector<double> h = testing::random_values(rng, m.num_vertices() * 2);
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({m.num_vertices(), 2}, h), tape.constant({m.num_vertices(), 3}, mesh_x(m, 1, rng))};
  const Incidence a = Incidence::from_mesh(m, CornerOrder::winding);
  const Incidence b = Incidence::from_mesh(m, CornerOrder::vertex_index);
  const Tensor fa = f.layer.face_messages(s, a, p);
  const Tensor fb = f.layer.face_messages(s, b, p);
  // Corner lists sort by (i, j, k); compare per (i, {j, k}).
  std::map<std::array<std::size_t, 3>, std::vector<double>> by_key;
  for (std::size_t c = 0; c < a.num_corners(); ++c) {
    const std::size_t j = std::min(a.corner_j[c], a.corner_k[c]), k = std::max(a.corner_j[c], a.corner_k[c]);
    by_key[{a.corner_i[c], j, k}] = {fa.values().begin() + c * 6, fa.values().begin() + (c + 1) * 6};
  }
  for (std::size_t c = 0; c < b.num_corners(); ++c) {
    const auto& want = by_key.at({b.corner_i[c], b.corner_j[c], b.corner_k[c]});
    CHECK(testing::bitwise_equal(std::vector<double>(fb.values().begin() + c * 6, fb.values().begin() + (c + 1) * 6),
                                 want));
  }
}

TEST_CASE("isolated node keeps its position and sees zero messages") {
  Fixture f(small_dims(1, 1, 1));
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({4, 1}, {1, 2, 3, 4}), tape.constant({4, 3}, {0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 5, 5})};
  const NodeState out = emnn_layer(f.layer, s, Incidence::from_graph(4, {{0, 1}, {1, 2}, {0, 2}}, {{0, 1, 2}}), p);
  CHECK(out.x.values()[9] == 5.0);
  CHECK(out.x.values()[10] == 5.0);
  CHECK(out.x.values()[11] == 5.0);
  std::vector<double> in{4.0};
  in.resize(13, 0.0);
  const auto want = mlp_ref(f.params, "layer.phi_h", 2, false, in);
  for (std::size_t a = 0; a < 5; ++a) CHECK(out.h.values()[15 + a] == doctest::Approx(want[a]).epsilon(1e-14));
}

TEST_CASE("without faces the EMNN layer reduces bitwise to EGNN") {
  Fixture f(small_dims(2, 2, 2));
  const Mesh m = shapes::jitter(shapes::icosphere(1), 0.1, 6);
  Rng rng(12);
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({m.num_vertices(), 2}, testing::random_values(rng, m.num_vertices() * 2)),
                    tape.constant({m.num_vertices(), 6}, mesh_x(m, 2, rng))};
  const Incidence edges_only = Incidence::from_graph(m.num_vertices(), m.edges());
  const NodeState a = emnn_layer(f.layer, s, edges_only, p);
  const NodeState b = egnn_layer(f.layer, s, edges_only, p);
  CHECK(testing::bitwise_equal(a.h.values(), b.h.values()));
  CHECK(testing::bitwise_equal(a.x.values(), b.x.values()));
}

TEST_CASE("coincident positions leave a pure residual") {
  Fixture f(small_dims(1, 1, 1));
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const std::vector<double> x{0.2, -0.1, 0.4, 0.2, -0.1, 0.4, 0.2, -0.1, 0.4};
  const NodeState s{tape.constant({3, 1}, {1, -1, 2}), tape.constant({3, 3}, x)};
  const NodeState out = emnn_layer(f.layer, s, Incidence::from_graph(3, {{0, 1}, {1, 2}, {0, 2}}, {{0, 1, 2}}), p);
  CHECK(testing::bitwise_equal(out.x.values(), x));
}

TEST_CASE("triangle with zero edge mixing and unit face mixing moves along the normal") {
  Fixture f(small_dims(1, 1, 1));
  for (auto& w : find_param(f.params, "layer.phi_x.1.weight").value) w = 0.0;
  for (auto& w : find_param(f.params, "layer.phi_x.1.bias").value) w = 0.0;
  for (auto& w : find_param(f.params, "layer.phi_t.1.weight").value) w = 0.0;
  for (auto& w : find_param(f.params, "layer.phi_t.1.bias").value) w = 1.0;
  const Mesh tri({{0.1, 0.2, 0.3}, {1.3, 0.1, -0.2}, {0.4, 1.5, 0.6}}, {{0, 1, 2}});
  const FaceGeometry g = face_geometry(tri);
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({3, 1}, {0, 0, 0}), tape.constant({3, 3}, mesh_x(tri, 1, f.rng))};
  const NodeState out = emnn_layer(f.layer, s, Incidence::from_mesh(tri), p);
  // Every corner's cross product equals the face normal scaled by twice the area.
  for (std::size_t v = 0; v < 3; ++v) {
    const Vec3 want = tri.positions()[v] + g.normals[0];
    for (std::size_t a = 0; a < 3; ++a) CHECK(std::abs(out.x.values()[3 * v + a] - want[a]) < 1e-14);
  }
}

TEST_CASE("tetrahedron layer is E(3) equivariant for proper motions") {
  Fixture f(small_dims(2, 2, 3));
  const Mesh m = shapes::tetrahedron();
  Rng rng(4);
  const std::vector<double> h = testing::random_values(rng, 8);
  const std::vector<double> x = mesh_x(m, 2, rng);
  const Incidence inc = Incidence::from_mesh(m);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 q = random_orthogonal(rng, 1);
    const Vec3 t = random_vector(rng, 2.0);
    std::vector<double> y(x.size());
    for (std::size_t v = 0; v < 4; ++v) {
      for (std::size_t c = 0; c < 2; ++c) {
        Vec3 r = mat_vec(q, channel(x, 2, v, c));
        if (c == 0) r = r + t;
        std::copy(r.begin(), r.end(), y.begin() + v * 6 + 3 * c);
      }
    }
    ad::Tape tape;
    BoundParameters p(tape, f.params);
    const NodeState a = emnn_layer(f.layer, {tape.constant({4, 2}, h), tape.constant({4, 6}, x)}, inc, p);
    const NodeState b = emnn_layer(f.layer, {tape.constant({4, 2}, h), tape.constant({4, 6}, y)}, inc, p);
    CHECK(testing::max_abs_diff(a.h.values(), b.h.values()) < 1e-12);
    const std::vector<double> ax(a.x.values().begin(), a.x.values().end());
    for (std::size_t v = 0; v < 4; ++v) {
      for (std::size_t c = 0; c < 3; ++c) {
        Vec3 want = mat_vec(q, channel(ax, 3, v, c));
        if (c == 0) want = want + t;
        for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(b.x.values()[v * 9 + 3 * c + r] - want[r]) < 1e-12);
      }
    }
  }
}

TEST_CASE("three stacked layers pass a finite-difference check") {
  ParameterSet params;
  Rng rng(31);
  LayerOptions opt;
  EquiLayer l0(params, "l0", small_dims(2, 1, 2), opt, rng);
  LayerDims d1 = small_dims(5, 2, 2);
  EquiLayer l1(params, "l1", d1, opt, rng);
  EquiLayer l2(params, "l2", small_dims(5, 2, 1), opt, rng);
  const Mesh m = shapes::jitter(shapes::tetrahedron(), 0.1, 5);
  const Incidence inc = Incidence::from_mesh(m);
  const std::vector<double> h = testing::random_values(rng, 8);
  const std::vector<double> w = testing::random_values(rng, 4 * 5 + 4 * 3);
  auto f = [&](ad::Tape& t, const Tensor& x) {
    BoundParameters p(t, params);
    NodeState s{t.constant({4, 2}, h), x};
    s = emnn_layer(l0, s, inc, p);
    s = emnn_layer(l1, s, inc, p);
    s = emnn_layer(l2, s, inc, p);
    const Tensor flat = ad::concat({ad::reshape(s.h, {1, 20}), ad::reshape(s.x, {1, 12})});
    return ad::sum(ad::mul(flat, t.constant({1, 32}, w)));
  };
  CHECK(ad::finite_difference_check(f, {4, 3}, mesh_x(m, 1, rng)) < 1e-5);
}

TEST_CASE("mean aggregation divides by the neighbour count") {
  Fixture a(small_dims(1, 1, 1));
  Fixture b(small_dims(1, 1, 1), LayerOptions{.aggregation = Aggregation::mean});
  ad::Tape tape;
  BoundParameters pa(tape, a.params), pb(tape, b.params);
  // Star: node 0 has three neighbours, each leaf has one.
  const NodeState s{tape.constant({4, 1}, {1, 0, 0, 0}),
                    tape.constant({4, 3}, {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1})};
  const Incidence inc = Incidence::from_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  const NodeState sa = egnn_layer(a.layer, s, inc, pa);
  const NodeState sb = egnn_layer(b.layer, s, inc, pb);
  const auto& x0 = s.x.values();
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(sb.x.values()[r] - x0[r] == doctest::Approx((sa.x.values()[r] - x0[r]) / 3.0).epsilon(1e-13));
    CHECK(sb.x.values()[3 + r] == sa.x.values()[3 + r]);
  }
}

TEST_CASE("mismatched channel counts are rejected") {
  Fixture f(small_dims(1, 2, 1));
  ad::Tape tape;
  BoundParameters p(tape, f.params);
  const NodeState s{tape.constant({2, 1}, {0, 0}), tape.constant({2, 3}, {0, 0, 0, 1, 0, 0})};
  CHECK_THROWS_AS(egnn_layer(f.layer, s, Incidence::from_graph(2, {{0, 1}}), p), ShapeError);
  ParameterSet ps;
  Rng rng(1);
  CHECK_THROWS_AS(EquiLayer(ps, "bad", small_dims(1, 0, 1), {}, rng), ConfigError);
  Fixture edge_only(small_dims(1, 1, 1), LayerOptions{.face_pathway = false});
  BoundParameters pe(tape, edge_only.params);
  const NodeState tri{tape.constant({3, 1}, {0, 0, 0}), tape.constant({3, 3}, {0, 0, 0, 1, 0, 0, 0, 1, 0})};
  CHECK_THROWS_AS(emnn_layer(edge_only.layer, tri, Incidence::from_graph(3, {{0, 1}, {1, 2}, {0, 2}}, {{0, 1, 2}}), pe),
                  ConfigError);
}

}  // TEST_SUITE
