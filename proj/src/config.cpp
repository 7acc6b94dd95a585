#include "emnn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "emnn/error.hpp"

namespace emnn {

using nlohmann::json;

void TrainConfig::check() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (num_seeds == 0) throw ConfigError("train.num_seeds must be at least 1");
}

namespace {

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": invalid value " + v.dump());
  }
}

std::vector<double> get_list(const json& v, const std::string& key) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError("config key " + key + ": expected a number or an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(get<double>(e, key));
  return out;
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.task", [](RunConfig& c, const json& v, const std::string& k) { c.model.task = parse_task(get<std::string>(v, k)); }},
      {"model.num_layers", [](RunConfig& c, const json& v, const std::string& k) { c.model.num_layers = get<std::size_t>(v, k); }},
      {"model.num_channels", [](RunConfig& c, const json& v, const std::string& k) { c.model.num_channels = get<std::size_t>(v, k); }},
      {"model.feature_dim", [](RunConfig& c, const json& v, const std::string& k) { c.model.feature_dim = get<std::size_t>(v, k); }},
      {"model.message_dim", [](RunConfig& c, const json& v, const std::string& k) { c.model.message_dim = get<std::size_t>(v, k); }},
      {"model.hidden_dim", [](RunConfig& c, const json& v, const std::string& k) { c.model.hidden_dim = get<std::size_t>(v, k); }},
      {"model.num_classes", [](RunConfig& c, const json& v, const std::string& k) { c.model.num_classes = get<std::size_t>(v, k); }},
      {"model.input_scalars", [](RunConfig& c, const json& v, const std::string& k) { c.model.input_scalars = get<std::size_t>(v, k); }},
      {"model.egnn_only", [](RunConfig& c, const json& v, const std::string& k) { c.model.egnn_only = get<bool>(v, k); }},
      {"model.multi_channel", [](RunConfig& c, const json& v, const std::string& k) { c.model.multi_channel = get<bool>(v, k); }},
      {"model.use_hierarchy", [](RunConfig& c, const json& v, const std::string& k) { c.model.use_hierarchy = get<bool>(v, k); }},
      {"model.activation", [](RunConfig& c, const json& v, const std::string& k) { c.model.activation = ad::parse_activation(get<std::string>(v, k)); }},
      {"model.squared_distance", [](RunConfig& c, const json& v, const std::string& k) { c.model.squared_distance = get<bool>(v, k); }},
      {"model.aggregation", [](RunConfig& c, const json& v, const std::string& k) { c.model.aggregation = parse_aggregation(get<std::string>(v, k)); }},
      {"model.readout", [](RunConfig& c, const json& v, const std::string& k) { c.model.readout = parse_readout(get<std::string>(v, k)); }},
      {"model.norm_eps", [](RunConfig& c, const json& v, const std::string& k) { c.model.norm_eps = get<double>(v, k); }},
      {"hierarchy.depth", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.depth = get<std::size_t>(v, k); }},
      {"hierarchy.ratios", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.ratios = get_list(v, k); }},
      {"hierarchy.radii", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.radii = get_list(v, k); }},
      {"hierarchy.k", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.k = get<std::size_t>(v, k); }},
      {"hierarchy.fps_start", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.fps_start = get<std::size_t>(v, k); }},
      {"hierarchy.radius_factor", [](RunConfig& c, const json& v, const std::string& k) { c.model.hierarchy.radius_factor = get<double>(v, k); }},
      {"train.epochs", [](RunConfig& c, const json& v, const std::string& k) { c.train.epochs = get<std::size_t>(v, k); }},
      {"train.lr", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr = get<double>(v, k); }},
      {"train.beta1", [](RunConfig& c, const json& v, const std::string& k) { c.train.beta1 = get<double>(v, k); }},
      {"train.beta2", [](RunConfig& c, const json& v, const std::string& k) { c.train.beta2 = get<double>(v, k); }},
      {"train.adam_eps", [](RunConfig& c, const json& v, const std::string& k) { c.train.adam_eps = get<double>(v, k); }},
      {"train.batch_size", [](RunConfig& c, const json& v, const std::string& k) { c.train.batch_size = get<std::size_t>(v, k); }},
      {"train.seed", [](RunConfig& c, const json& v, const std::string& k) { c.train.seed = get<std::uint64_t>(v, k); }},
      {"train.early_stop", [](RunConfig& c, const json& v, const std::string& k) { c.train.early_stop = get<bool>(v, k); }},
      {"train.log_timing", [](RunConfig& c, const json& v, const std::string& k) { c.train.log_timing = get<bool>(v, k); }},
      {"train.num_seeds", [](RunConfig& c, const json& v, const std::string& k) { c.train.num_seeds = get<std::size_t>(v, k); }},
      {"train.dataset", [](RunConfig& c, const json& v, const std::string& k) { c.train.dataset = get<std::string>(v, k); }},
      {"train.test_dataset", [](RunConfig& c, const json& v, const std::string& k) { c.train.test_dataset = get<std::string>(v, k); }},
      {"train.checkpoint", [](RunConfig& c, const json& v, const std::string& k) { c.train.checkpoint = get<std::string>(v, k); }},
      {"train.output", [](RunConfig& c, const json& v, const std::string& k) { c.train.output = get<std::string>(v, k); }},
      {"check.mesh", [](RunConfig& c, const json& v, const std::string& k) { c.check.mesh = get<std::string>(v, k); }},
      {"check.variant", [](RunConfig& c, const json& v, const std::string& k) { c.check.variant = get<std::string>(v, k); }},
      {"check.trials", [](RunConfig& c, const json& v, const std::string& k) { c.check.trials = get<std::size_t>(v, k); }},
      {"check.tolerance", [](RunConfig& c, const json& v, const std::string& k) { c.check.tolerance = get<double>(v, k); }},
      {"check.inject_fault", [](RunConfig& c, const json& v, const std::string& k) { c.check.inject_fault = get<bool>(v, k); }},
  };
  return table;
}

json parse_object(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object of flat keys");
  return j;
}

}  // namespace

void apply_config_json(RunConfig& config, const std::string& json_text) {
  const json j = parse_object(json_text);
  // The variant sets several switches at once; explicit keys refine it.
  if (j.contains("model.variant")) {
    config.model = variant_config(get<std::string>(j["model.variant"], "model.variant"), config.model);
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "model.variant") continue;
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, value, key);
  }
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_json(base, ss.str());
  return base;
}

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["model.task"] = std::string(to_string(c.task));
  j["model.num_layers"] = c.num_layers;
  j["model.num_channels"] = c.num_channels;
  j["model.feature_dim"] = c.feature_dim;
  j["model.message_dim"] = c.message_dim;
  j["model.hidden_dim"] = c.hidden_dim;
  j["model.num_classes"] = c.num_classes;
  j["model.input_scalars"] = c.input_scalars;
  j["model.egnn_only"] = c.egnn_only;
  j["model.multi_channel"] = c.multi_channel;
  j["model.use_hierarchy"] = c.use_hierarchy;
  j["model.activation"] = std::string(ad::to_string(c.activation));
  j["model.squared_distance"] = c.squared_distance;
  j["model.aggregation"] = std::string(to_string(c.aggregation));
  j["model.readout"] = std::string(to_string(c.readout));
  j["model.norm_eps"] = c.norm_eps;
  j["hierarchy.depth"] = c.hierarchy.depth;
  j["hierarchy.ratios"] = c.hierarchy.ratios;
  j["hierarchy.radii"] = c.hierarchy.radii;
  j["hierarchy.k"] = c.hierarchy.k;
  j["hierarchy.fps_start"] = c.hierarchy.fps_start;
  j["hierarchy.radius_factor"] = c.hierarchy.radius_factor;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
  RunConfig rc;
  const json j = parse_object(json_text);
  for (const auto& [key, value] : j.items()) {
    if (key.rfind("model.", 0) != 0 && key.rfind("hierarchy.", 0) != 0) {
      throw ConfigError("unexpected key '" + key + "' in stored model config");
    }
  }
  apply_config_json(rc, json_text);
  return rc.model;
}

}  // namespace emnn
