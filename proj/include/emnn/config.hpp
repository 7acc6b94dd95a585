#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "emnn/model.hpp"

namespace emnn {

struct TrainConfig {
  std::optional<std::size_t> epochs;  // unset: 100 for classification, 200 for segmentation
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  bool early_stop = true;     // stop once the training split is classified perfectly
  bool log_timing = true;     // false writes zeros to the timing columns so logs compare bitwise
  std::size_t num_seeds = 1;  // consecutive seeds starting at `seed`
  std::string dataset;
  std::string test_dataset;
  std::string checkpoint;
  std::string output = ".";

  std::size_t resolved_epochs(Task task) const { return epochs.value_or(task == Task::classification ? 100 : 200); }
  void check() const;
};

struct HarnessConfig {
  std::string mesh;
  std::string variant;  // empty: use the model section as given; "all": the six baseline variants
  std::size_t trials = 20;
  double tolerance = 1e-7;
  bool inject_fault = false;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  HarnessConfig check;
};

/// Applies a flat JSON object ({"model.num_layers": 4, "train.lr": 1e-3, ...})
/// on top of `config`. Unknown keys and ill-typed values throw ConfigError.
void apply_config_json(RunConfig& config, const std::string& json_text);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

/// Flat JSON of the model section (including hierarchy.*), as stored in checkpoints.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace emnn
