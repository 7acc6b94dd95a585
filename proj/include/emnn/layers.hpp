#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "emnn/mesh.hpp"
#include "emnn/nn.hpp"
#include "emnn/tensor.hpp"

namespace emnn {

/// Per-node features carried between layers.
///
/// h is (n, d_h) and invariant. x holds c vector channels per node as an
/// (n, 3c) tensor laid out channel-major: columns [3k, 3k+3) are channel k.
/// Channel 0 is the position channel and the only one that translates;
/// the others (normals, learned directions) only rotate.
struct NodeState {
  ad::Tensor h;
  ad::Tensor x;

  std::size_t num_nodes() const { return h.dim(0); }
  std::size_t channels() const { return x.dim(1) / 3; }
};

/// How the (j, k) pair of a face corner is ordered.
enum class CornerOrder {
  winding,       // stored face winding, rotated so the corner comes first
  vertex_index,  // ascending vertex index; ignores orientation (fault injection only)
};

/// Edge and face-corner index lists driving message passing. Both lists are
/// sorted ((target, source) and (i, j, k)) so reductions run in a canonical order.
struct Incidence {
  std::size_t num_nodes = 0;
  // Message m_ij flows from source j into target i; each undirected edge appears twice.
  std::vector<ad::Index> edge_target;
  std::vector<ad::Index> edge_source;
  // One entry per (face, corner): i is the corner, (j, k) the other two vertices.
  std::vector<ad::Index> corner_i;
  std::vector<ad::Index> corner_j;
  std::vector<ad::Index> corner_k;

  std::size_t num_messages() const { return edge_target.size(); }
  std::size_t num_corners() const { return corner_i.size(); }

  static Incidence from_mesh(const Mesh& mesh, CornerOrder order = CornerOrder::winding);
  /// Graph with explicit edges and (possibly no) faces. Throws MeshError on
  /// out-of-range indices.
  static Incidence from_graph(std::size_t num_nodes, const std::vector<Edge>& edges, const std::vector<Face>& faces = {},
                              CornerOrder order = CornerOrder::winding);
};

enum class Aggregation { sum, mean };

struct LayerDims {
  std::size_t h_in = 1;
  std::size_t h_out = 64;
  std::size_t channels_in = 1;
  std::size_t channels_out = 1;
  std::size_t message = 64;  // width d of m_ij and m_ijk
  std::size_t hidden = 64;   // hidden width of phi_h, phi_x, phi_t
};

struct LayerOptions {
  bool face_pathway = true;  // false builds an EGNN layer without phi_s / phi_t
  ad::Activation activation = ad::Activation::silu;
  bool squared_distance = false;
  Aggregation aggregation = Aggregation::sum;
  double norm_eps = 1e-9;
};

/// Learnable functions of one message-passing layer: phi_e and phi_s produce
/// messages, phi_h updates h, phi_x and phi_t emit c_in x c_out channel
/// mixing matrices for the edge and face vector terms.
class EquiLayer {
 public:
  EquiLayer(ParameterSet& params, const std::string& name, LayerDims dims, LayerOptions options, Rng& rng);

  const LayerDims& dims() const { return dims_; }
  const LayerOptions& options() const { return options_; }
  bool has_face_pathway() const { return !phi_s_.empty(); }

  /// ||x_i - x_j||_r per channel, (E, c). Squared when configured.
  ad::Tensor edge_distances(const NodeState& s, const Incidence& inc) const;
  /// Channel-wise (x_j - x_i) x (x_k - x_i) per corner, (F3, 3c).
  ad::Tensor corner_cross(const NodeState& s, const Incidence& inc) const;

  /// m_ij = phi_e(h_i, h_j, ||x_i - x_j||_r), (E, d).
  ad::Tensor edge_messages(const NodeState& s, const Incidence& inc, const BoundParameters& p) const;
  ad::Tensor edge_messages(const NodeState& s, const Incidence& inc, const ad::Tensor& distances,
                           const BoundParameters& p) const;

  /// m_ijk = phi_s(h_i, h_j + h_k, ||(x_j - x_i) x (x_k - x_i)||_r), (F3, d).
  ad::Tensor face_messages(const NodeState& s, const Incidence& inc, const BoundParameters& p) const;
  ad::Tensor face_messages(const NodeState& s, const Incidence& inc, const ad::Tensor& cross,
                           const BoundParameters& p) const;

  /// h' = phi_h(h, sum m_ij, sum m_ijk). A null face_messages aggregates to zero.
  ad::Tensor update_h(const NodeState& s, const Incidence& inc, const ad::Tensor& edge_msgs,
                      const ad::Tensor* face_msgs, const BoundParameters& p) const;

  /// x' = x + sum (x_i - x_j) phi_x(m_ij) + sum ((x_j - x_i) x (x_k - x_i)) phi_t(m_ijk).
  /// The residual keeps the first min(c_in, c_out) channels and zero-fills the rest.
  ad::Tensor update_x(const NodeState& s, const Incidence& inc, const ad::Tensor& edge_msgs,
                      const ad::Tensor* face_msgs, const ad::Tensor* cross, const BoundParameters& p) const;

  /// Full layer; use_faces selects EMNN (true) or EGNN (false) behaviour.
  NodeState apply(const NodeState& s, const Incidence& inc, const BoundParameters& p, bool use_faces) const;

 private:
  void check_input(const NodeState& s, const Incidence& inc) const;
  ad::Tensor aggregate(const ad::Tensor& rows, std::span<const ad::Index> targets, std::size_t n) const;

  LayerDims dims_;
  LayerOptions options_;
  Mlp phi_e_, phi_s_, phi_h_, phi_x_, phi_t_;
};

NodeState egnn_layer(const EquiLayer& layer, const NodeState& s, const Incidence& inc, const BoundParameters& p);
NodeState emnn_layer(const EquiLayer& layer, const NodeState& s, const Incidence& inc, const BoundParameters& p);

}  // namespace emnn
