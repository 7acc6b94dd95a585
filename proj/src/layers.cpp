#include "emnn/layers.hpp"

#include <algorithm>
#include <tuple>

#include "emnn/error.hpp"

namespace emnn {

using ad::Index;
using ad::Tensor;

namespace {

void append_corners(const Face& f, CornerOrder order, std::vector<std::array<Index, 3>>& out) {
  for (std::size_t c = 0; c < 3; ++c) {
    Index i = f[c], j = f[(c + 1) % 3], k = f[(c + 2) % 3];
    if (order == CornerOrder::vertex_index && j > k) std::swap(j, k);
    out.push_back({i, j, k});
  }
}

Incidence build(std::size_t n, const std::vector<Edge>& edges, const std::vector<Face>& faces, CornerOrder order) {
  Incidence inc;
  inc.num_nodes = n;

  std::vector<std::array<Index, 2>> directed;
  directed.reserve(edges.size() * 2);
  for (const Edge& e : edges) {
    if (e[0] >= n || e[1] >= n) throw MeshError("edge index out of range");
    if (e[0] == e[1]) throw MeshError("self-loop edge");
    directed.push_back({e[0], e[1]});
    directed.push_back({e[1], e[0]});
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  for (const auto& [t, s] : directed) {
    inc.edge_target.push_back(t);
    inc.edge_source.push_back(s);
  }

  std::vector<std::array<Index, 3>> corners;
  corners.reserve(faces.size() * 3);
  for (const Face& f : faces) {
    if (f[0] >= n || f[1] >= n || f[2] >= n) throw MeshError("face index out of range");
    append_corners(f, order, corners);
  }
  std::sort(corners.begin(), corners.end());
  for (const auto& [i, j, k] : corners) {
    inc.corner_i.push_back(i);
    inc.corner_j.push_back(j);
    inc.corner_k.push_back(k);
  }
  return inc;
}

}  // namespace

Incidence Incidence::from_mesh(const Mesh& mesh, CornerOrder order) {
  return build(mesh.num_vertices(), mesh.edges(), mesh.faces(), order);
}

Incidence Incidence::from_graph(std::size_t num_nodes, const std::vector<Edge>& edges, const std::vector<Face>& faces,
                                CornerOrder order) {
  return build(num_nodes, edges, faces, order);
}

// ---------------------------------------------------------------------------

EquiLayer::EquiLayer(ParameterSet& params, const std::string& name, LayerDims dims, LayerOptions options, Rng& rng)
    : dims_(dims), options_(options) {
  const auto act = options.activation;
  const std::size_t cin = dims.channels_in, cout = dims.channels_out;
  if (cin == 0 || cout == 0) throw ConfigError(name + ": channel counts must be positive");
  const std::size_t msg_in = 2 * dims.h_in + cin;
  phi_e_ = Mlp(params, name + ".phi_e", {msg_in, dims.message, dims.message}, act, true, rng);
  phi_x_ = Mlp(params, name + ".phi_x", {dims.message, dims.hidden, cin * cout}, act, false, rng);
  if (options.face_pathway) {
    phi_s_ = Mlp(params, name + ".phi_s", {msg_in, dims.message, dims.message}, act, true, rng);
    phi_t_ = Mlp(params, name + ".phi_t", {dims.message, dims.hidden, cin * cout}, act, false, rng);
    if (phi_t_.out_dim() != phi_x_.out_dim()) {
      throw ConfigError(name + ": phi_x and phi_t disagree on the output channel count");
    }
  }
  phi_h_ = Mlp(params, name + ".phi_h", {dims.h_in + 2 * dims.message, dims.hidden, dims.h_out}, act, false, rng);
}

void EquiLayer::check_input(const NodeState& s, const Incidence& inc) const {
  if (s.h.rank() != 2 || s.x.rank() != 2 || s.h.dim(0) != s.x.dim(0)) {
    throw ShapeError("layer input: h " + ad::to_string(s.h.shape()) + " and x " + ad::to_string(s.x.shape()) +
                     " disagree");
  }
  if (s.h.dim(1) != dims_.h_in || s.x.dim(1) != 3 * dims_.channels_in) {
    throw ShapeError("layer input: expected h width " + std::to_string(dims_.h_in) + " and " +
                     std::to_string(dims_.channels_in) + " channels, got " + ad::to_string(s.h.shape()) + " / " +
                     ad::to_string(s.x.shape()));
  }
  if (inc.num_nodes != s.num_nodes()) throw ShapeError("layer input: incidence built for a different node count");
}

Tensor EquiLayer::aggregate(const Tensor& rows, std::span<const Index> targets, std::size_t n) const {
  Tensor total = ad::segment_sum(rows, targets, n);
  if (options_.aggregation == Aggregation::sum) return total;
  std::vector<double> inv(n, 0.0);
  for (Index t : targets) inv[t] += 1.0;
  for (double& v : inv) v = v > 0.0 ? 1.0 / v : 0.0;
  return ad::scale_rows(total, rows.tape().constant({n}, std::move(inv)));
}

Tensor EquiLayer::edge_distances(const NodeState& s, const Incidence& inc) const {
  const Tensor diff = ad::sub(ad::gather_rows(s.x, inc.edge_target), ad::gather_rows(s.x, inc.edge_source));
  const Tensor d = ad::row_norm(diff, options_.norm_eps, 3);
  return options_.squared_distance ? ad::mul(d, d) : d;
}

Tensor EquiLayer::corner_cross(const NodeState& s, const Incidence& inc) const {
  const Tensor xi = ad::gather_rows(s.x, inc.corner_i);
  const Tensor a = ad::sub(ad::gather_rows(s.x, inc.corner_j), xi);
  const Tensor b = ad::sub(ad::gather_rows(s.x, inc.corner_k), xi);
  return ad::cross_rows(a, b);
}

Tensor EquiLayer::edge_messages(const NodeState& s, const Incidence& inc, const BoundParameters& p) const {
  check_input(s, inc);
  return edge_messages(s, inc, edge_distances(s, inc), p);
}

Tensor EquiLayer::edge_messages(const NodeState& s, const Incidence& inc, const Tensor& distances,
                                const BoundParameters& p) const {
  const Tensor input =
      ad::concat({ad::gather_rows(s.h, inc.edge_target), ad::gather_rows(s.h, inc.edge_source), distances});
  return phi_e_(input, p);
}

Tensor EquiLayer::face_messages(const NodeState& s, const Incidence& inc, const BoundParameters& p) const {
  check_input(s, inc);
  return face_messages(s, inc, corner_cross(s, inc), p);
}

Tensor EquiLayer::face_messages(const NodeState& s, const Incidence& inc, const Tensor& cross,
                                const BoundParameters& p) const {
  if (!has_face_pathway()) throw ConfigError("face_messages: layer was built without a face pathway");
  const Tensor neighbours = ad::add(ad::gather_rows(s.h, inc.corner_j), ad::gather_rows(s.h, inc.corner_k));
  const Tensor areas = ad::row_norm(cross, options_.norm_eps, 3);
  return phi_s_(ad::concat({ad::gather_rows(s.h, inc.corner_i), neighbours, areas}), p);
}

Tensor EquiLayer::update_h(const NodeState& s, const Incidence& inc, const Tensor& edge_msgs, const Tensor* face_msgs,
                           const BoundParameters& p) const {
  const std::size_t n = s.num_nodes();
  const Tensor me = aggregate(edge_msgs, inc.edge_target, n);
  const Tensor mf = face_msgs != nullptr ? aggregate(*face_msgs, inc.corner_i, n)
                                         : s.h.tape().zeros({n, dims_.message});
  return phi_h_(ad::concat({s.h, me, mf}), p);
}

Tensor EquiLayer::update_x(const NodeState& s, const Incidence& inc, const Tensor& edge_msgs, const Tensor* face_msgs,
                           const Tensor* cross, const BoundParameters& p) const {
  const std::size_t n = s.num_nodes();
  const std::size_t cin = dims_.channels_in, cout = dims_.channels_out;

  Tensor residual = s.x;
  if (cin != cout) {
    std::vector<double> embed(3 * cin * 3 * cout, 0.0);
    for (std::size_t k = 0; k < std::min(cin, cout) * 3; ++k) embed[k * 3 * cout + k] = 1.0;
    residual = ad::matmul(s.x, s.x.tape().constant({3 * cin, 3 * cout}, std::move(embed)));
  }

  const Tensor diff = ad::sub(ad::gather_rows(s.x, inc.edge_target), ad::gather_rows(s.x, inc.edge_source));
  const Tensor edge_mix = phi_x_(edge_msgs, p);
  Tensor out = ad::add(residual, aggregate(ad::channel_mix(diff, edge_mix, cout), inc.edge_target, n));

  if (face_msgs != nullptr && cross != nullptr) {
    const Tensor face_mix = phi_t_(*face_msgs, p);
    if (face_mix.dim(1) != edge_mix.dim(1)) {
      throw ConfigError("update_x: phi_x emits " + std::to_string(edge_mix.dim(1)) + " mixing weights, phi_t " +
                        std::to_string(face_mix.dim(1)));
    }
    out = ad::add(out, aggregate(ad::channel_mix(*cross, face_mix, cout), inc.corner_i, n));
  }
  return out;
}

NodeState EquiLayer::apply(const NodeState& s, const Incidence& inc, const BoundParameters& p, bool use_faces) const {
  check_input(s, inc);
  const Tensor me = edge_messages(s, inc, edge_distances(s, inc), p);
  const bool faces = use_faces && inc.num_corners() > 0;
  if (use_faces && !has_face_pathway()) throw ConfigError("emnn layer requested on an EGNN-only layer");
  if (!faces) {
    return {update_h(s, inc, me, nullptr, p), update_x(s, inc, me, nullptr, nullptr, p)};
  }
  const Tensor cross = corner_cross(s, inc);
  const Tensor mf = face_messages(s, inc, cross, p);
  return {update_h(s, inc, me, &mf, p), update_x(s, inc, me, &mf, &cross, p)};
}

NodeState egnn_layer(const EquiLayer& layer, const NodeState& s, const Incidence& inc, const BoundParameters& p) {
  return layer.apply(s, inc, p, false);
}

NodeState emnn_layer(const EquiLayer& layer, const NodeState& s, const Incidence& inc, const BoundParameters& p) {
  return layer.apply(s, inc, p, true);
}

}  // namespace emnn
