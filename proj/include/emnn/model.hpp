#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "emnn/hierarchy.hpp"
#include "emnn/layers.hpp"
#include "emnn/mesh.hpp"
#include "emnn/nn.hpp"

namespace emnn {

enum class Task { classification, segmentation };
enum class Readout { mean, max };

Task parse_task(std::string_view name);
std::string_view to_string(Task t);
Readout parse_readout(std::string_view name);
std::string_view to_string(Readout r);
Aggregation parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation a);

struct ModelConfig {
  Task task = Task::classification;
  std::size_t num_layers = 3;
  std::size_t num_channels = 2;  // vector channels per layer when multi_channel is set
  std::size_t feature_dim = 64;  // d_h
  std::size_t message_dim = 64;  // d
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 2;
  std::size_t input_scalars = 0;  // user per-vertex scalars appended to the area feature
  bool egnn_only = false;
  bool multi_channel = true;
  bool use_hierarchy = true;
  ad::Activation activation = ad::Activation::silu;
  bool squared_distance = false;
  Aggregation aggregation = Aggregation::sum;
  Readout readout = Readout::mean;
  double norm_eps = 1e-9;
  HierarchyOptions hierarchy;

  /// Throws ConfigError on out-of-range values.
  void check() const;

  /// Vector channels of the input state: [position] or [position, normal].
  std::size_t input_channels() const { return multi_channel ? 2 : 1; }
  std::size_t layer_channels() const { return multi_channel ? num_channels : 1; }
  std::size_t input_dim() const { return 1 + input_scalars; }
  /// Pooling levels actually used by the network.
  std::size_t effective_depth() const { return use_hierarchy ? hierarchy.depth : 1; }
  /// A reflection without winding swap changes the output for these configurations.
  bool orientation_sensitive() const { return !egnn_only || multi_channel; }
};

/// The six baseline variants: egnn, egnn+mc, egnn+mc+hier, emnn, emnn+mc, emnn+mc+hier.
const std::vector<std::string>& variant_names();
/// `base` with the variant switches applied.
ModelConfig variant_config(std::string_view name, ModelConfig base = {});

/// A mesh turned into network inputs: the (normalized) mesh, its incidence
/// lists, the pooling hierarchy and the initial node features.
struct Sample {
  Mesh mesh;
  Incidence incidence;
  Hierarchy hierarchy;
  std::size_t num_nodes = 0;
  std::size_t h_dim = 0;
  std::size_t channels = 0;
  std::vector<double> h0;  // (n, h_dim) row-major
  std::vector<double> x0;  // (n, 3 * channels) row-major
  int label = -1;
  std::vector<int> labels;

  NodeState state(ad::Tape& tape, bool differentiable = false) const;
};

struct PrepareOptions {
  bool normalize = true;
  CornerOrder corner_order = CornerOrder::winding;
};

/// Builds the network inputs for `mesh` under `config`. Initial features are
/// h = [a_p, vertex scalars] and X = [x_p] or [x_p, n_p].
Sample prepare_sample(const Mesh& mesh, const ModelConfig& config, PrepareOptions options = {});

/// Initial features only, as a Sample without incidence or hierarchy.
void init_features(const Mesh& mesh, const ModelConfig& config, Sample& out);

struct ForwardResult {
  ad::Tensor logits;   // (1, C) or (n, C)
  NodeState encoded;   // output of the last message-passing layer
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  NodeState encode(const NodeState& input, const Incidence& inc, const BoundParameters& p) const;
  ForwardResult forward(const NodeState& input, const Sample& sample, const BoundParameters& p) const;
  ForwardResult forward(const Sample& sample, const BoundParameters& p) const;

  /// Mean softmax cross-entropy against the sample's label(s).
  ad::Tensor loss(const ad::Tensor& logits, const Sample& sample) const;

  /// Predicted class per graph (one entry) or per vertex.
  static std::vector<int> predictions(const ad::Tensor& logits);

 private:
  ad::Tensor classify(const ad::Tensor& h, const Sample& sample, const BoundParameters& p) const;
  ad::Tensor segment(const ad::Tensor& h, const Sample& sample, const BoundParameters& p) const;

  ModelConfig config_;
  ParameterSet params_;
  std::vector<EquiLayer> layers_;
  std::vector<Mlp> pool_mlps_;
  std::vector<Mlp> unpool_mlps_;
  Mlp head_;
};

}  // namespace emnn
