#include "emnn/model.hpp"

#include <algorithm>

#include "emnn/error.hpp"

namespace emnn {

Task parse_task(std::string_view name) {
  if (name == "classification") return Task::classification;
  if (name == "segmentation") return Task::segmentation;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected classification or segmentation)");
}

std::string_view to_string(Task t) { return t == Task::classification ? "classification" : "segmentation"; }

Readout parse_readout(std::string_view name) {
  if (name == "mean") return Readout::mean;
  if (name == "max") return Readout::max;
  throw ConfigError("unknown readout '" + std::string(name) + "' (expected mean or max)");
}

std::string_view to_string(Readout r) { return r == Readout::mean ? "mean" : "max"; }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "sum") return Aggregation::sum;
  if (name == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected sum or mean)");
}

std::string_view to_string(Aggregation a) { return a == Aggregation::sum ? "sum" : "mean"; }

void ModelConfig::check() const {
  if (num_layers == 0) throw ConfigError("model.num_layers must be at least 1");
  if (multi_channel && num_channels < 2) throw ConfigError("model.num_channels must be at least 2 with multi_channel");
  if (feature_dim == 0 || message_dim == 0 || hidden_dim == 0) throw ConfigError("model widths must be positive");
  if (num_classes < 2) throw ConfigError("model.num_classes must be at least 2");
  if (!(norm_eps > 0.0)) throw ConfigError("model.norm_eps must be positive");
  if (hierarchy.depth == 0) throw ConfigError("hierarchy.depth must be at least 1");
  if (hierarchy.k == 0) throw ConfigError("hierarchy.k must be at least 1");
  if (!(hierarchy.radius_factor > 0.0)) throw ConfigError("hierarchy.radius_factor must be positive");
  for (double r : hierarchy.ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("hierarchy.ratios must lie in (0, 1]");
  }
  for (double r : hierarchy.radii) {
    if (!(r > 0.0)) throw ConfigError("hierarchy.radii must be positive");
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"egnn", "egnn+mc", "egnn+mc+hier", "emnn", "emnn+mc", "emnn+mc+hier"};
  return names;
}

ModelConfig variant_config(std::string_view name, ModelConfig base) {
  const std::string n(name);
  if (std::find(variant_names().begin(), variant_names().end(), n) == variant_names().end()) {
    throw ConfigError("unknown model variant '" + n + "'");
  }
  base.egnn_only = n.rfind("egnn", 0) == 0;
  base.multi_channel = n.find("+mc") != std::string::npos;
  base.use_hierarchy = n.find("+hier") != std::string::npos;
  if (base.multi_channel && base.num_channels < 2) base.num_channels = 2;
  return base;
}

// ---------------------------------------------------------------------------

NodeState Sample::state(ad::Tape& tape, bool differentiable) const {
  if (differentiable) {
    return {tape.variable({num_nodes, h_dim}, h0), tape.variable({num_nodes, 3 * channels}, x0)};
  }
  return {tape.constant({num_nodes, h_dim}, h0), tape.constant({num_nodes, 3 * channels}, x0)};
}

void init_features(const Mesh& mesh, const ModelConfig& config, Sample& out) {
  const std::size_t n = mesh.num_vertices();
  if (mesh.scalar_dim() != config.input_scalars) {
    throw ConfigError("mesh carries " + std::to_string(mesh.scalar_dim()) + " vertex scalars, model expects " +
                      std::to_string(config.input_scalars));
  }
  if (mesh.vertex_scalars().size() != n * mesh.scalar_dim()) {
    throw MeshError("vertex scalars have the wrong row count");
  }
  const VertexGeometry geo = vertex_geometry(mesh);

  out.num_nodes = n;
  out.h_dim = config.input_dim();
  out.channels = config.input_channels();
  out.h0.assign(n * out.h_dim, 0.0);
  out.x0.assign(n * 3 * out.channels, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double* h = out.h0.data() + v * out.h_dim;
    h[0] = geo.areas[v];
    for (std::size_t s = 0; s < mesh.scalar_dim(); ++s) h[1 + s] = mesh.vertex_scalars()[v * mesh.scalar_dim() + s];
    double* x = out.x0.data() + v * 3 * out.channels;
    for (std::size_t a = 0; a < 3; ++a) x[a] = mesh.positions()[v][a];
    if (out.channels > 1) {
      for (std::size_t a = 0; a < 3; ++a) x[3 + a] = geo.normals[v][a];
    }
  }
}

Sample prepare_sample(const Mesh& mesh, const ModelConfig& config, PrepareOptions options) {
  config.check();
  if (mesh.num_vertices() == 0) throw MeshError("mesh has no vertices");
  Sample s;
  s.mesh = options.normalize ? normalize_mesh(mesh) : mesh;
  s.incidence = Incidence::from_mesh(s.mesh, options.corner_order);
  HierarchyOptions ho = config.hierarchy;
  ho.depth = config.effective_depth();
  s.hierarchy = build_hierarchy(s.mesh.positions(), ho);
  init_features(s.mesh, config, s);
  return s;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.check();
  Rng rng(seed);
  const auto act = config_.activation;
  const LayerOptions lopt{!config_.egnn_only, act, config_.squared_distance, config_.aggregation, config_.norm_eps};
  const std::size_t d = config_.feature_dim;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    LayerDims dims;
    dims.h_in = l == 0 ? config_.input_dim() : d;
    dims.h_out = d;
    dims.channels_in = l == 0 ? config_.input_channels() : config_.layer_channels();
    dims.channels_out = config_.layer_channels();
    dims.message = config_.message_dim;
    dims.hidden = config_.hidden_dim;
    layers_.emplace_back(params_, "layer" + std::to_string(l), dims, lopt, rng);
  }
  const std::size_t steps = config_.effective_depth() - 1;
  for (std::size_t l = 0; l < steps; ++l) {
    pool_mlps_.emplace_back(params_, "pool" + std::to_string(l), std::vector<std::size_t>{d, d}, act, true, rng);
  }
  if (config_.task == Task::segmentation) {
    for (std::size_t l = 0; l < steps; ++l) {
      unpool_mlps_.emplace_back(params_, "unpool" + std::to_string(l), std::vector<std::size_t>{2 * d, d, d}, act,
                                true, rng);
    }
  }
  head_ = Mlp(params_, "head", {d, config_.hidden_dim, config_.num_classes}, act, false, rng);
}

NodeState Model::encode(const NodeState& input, const Incidence& inc, const BoundParameters& p) const {
  NodeState s = input;
  for (const EquiLayer& layer : layers_) s = layer.apply(s, inc, p, !config_.egnn_only);
  return s;
}

ForwardResult Model::forward(const Sample& sample, const BoundParameters& p) const {
  return forward(sample.state(p.tape()), sample, p);
}

ForwardResult Model::forward(const NodeState& input, const Sample& sample, const BoundParameters& p) const {
  if (sample.hierarchy.depth() != config_.effective_depth()) {
    throw ConfigError("sample hierarchy has depth " + std::to_string(sample.hierarchy.depth()) + ", model expects " +
                      std::to_string(config_.effective_depth()));
  }
  ForwardResult out;
  out.encoded = encode(input, sample.incidence, p);
  out.logits = config_.task == Task::classification ? classify(out.encoded.h, sample, p)
                                                    : segment(out.encoded.h, sample, p);
  return out;
}

ad::Tensor Model::classify(const ad::Tensor& h, const Sample& sample, const BoundParameters& p) const {
  ad::Tensor x = h;
  for (std::size_t l = 0; l < pool_mlps_.size(); ++l) x = pool(x, sample.hierarchy.levels[l], pool_mlps_[l], p);
  const ad::Tensor g = config_.readout == Readout::mean ? ad::mean(x, 0) : ad::max(x, 0);
  return head_(ad::reshape(g, {1, config_.feature_dim}), p);
}

ad::Tensor Model::segment(const ad::Tensor& h, const Sample& sample, const BoundParameters& p) const {
  std::vector<ad::Tensor> skips{h};
  ad::Tensor x = h;
  for (std::size_t l = 0; l < pool_mlps_.size(); ++l) {
    x = pool(x, sample.hierarchy.levels[l], pool_mlps_[l], p);
    skips.push_back(x);
  }
  for (std::size_t l = pool_mlps_.size(); l-- > 0;) {
    x = unpool(x, skips[l], sample.hierarchy.levels[l], unpool_mlps_[l], p);
  }
  return head_(x, p);
}

ad::Tensor Model::loss(const ad::Tensor& logits, const Sample& sample) const {
  if (config_.task == Task::classification) {
    if (sample.label < 0) throw ConfigError("sample has no class label");
    const int label = sample.label;
    return ad::softmax_cross_entropy(logits, std::span<const int>(&label, 1));
  }
  if (sample.labels.size() != sample.num_nodes) {
    throw ConfigError("segmentation labels: " + std::to_string(sample.labels.size()) + " entries for " +
                      std::to_string(sample.num_nodes) + " vertices");
  }
  return ad::softmax_cross_entropy(logits, sample.labels);
}

std::vector<int> Model::predictions(const ad::Tensor& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const auto v = logits.values();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace emnn
