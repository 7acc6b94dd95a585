#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emnn/config.hpp"
#include "emnn/model.hpp"

namespace emnn {

struct DatasetItem {
  std::filesystem::path mesh;
  int label = -1;                     // classification
  std::filesystem::path labels_file;  // segmentation: whitespace-separated ints, one per vertex
};

struct Dataset {
  std::filesystem::path source;
  std::vector<DatasetItem> items;
};

/// Reads a manifest: a JSON array (or {"items": [...]}) of {"mesh": path,
/// "label": int} or {"mesh": path, "labels": path}. Relative paths resolve
/// against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);

/// Worker count for preprocessing: EMNN_THREADS if set, else the hardware concurrency.
std::size_t loader_threads();

/// Loads, validates and prepares every mesh. Labels are range-checked
/// against the config. Work is spread over `threads` workers; the result
/// order always follows the manifest.
std::vector<Sample> load_samples(const Dataset& dataset, const ModelConfig& config, std::size_t threads = 0);

/// Attaches labels to meshes generated in memory.
Sample labeled_sample(const Mesh& mesh, const ModelConfig& config, int label);

class Adam {
 public:
  Adam(ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies the gradients currently stored in the parameters.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterSet* params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // graph-level for classification, vertex-level for segmentation
  std::vector<double> per_class;  // NaN for classes that never occur
  std::size_t correct = 0;
  std::size_t total = 0;
};

EvalResult evaluate(Model& model, const std::vector<Sample>& samples);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  double wall_seconds = 0.0;
  std::size_t peak_bytes = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::size_t steps = 0;
};

/// Adam on the mean cross-entropy, shuffling the training split every epoch
/// with a generator seeded from config.seed. No augmentation is applied.
/// Writes one CSV row per epoch to `metrics` when given (header included).
/// Throws NumericalError with epoch and step context on a non-finite loss.
TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                  const TrainConfig& config, std::ostream* metrics = nullptr);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

struct BenchmarkResult {
  std::size_t steps = 0;
  double seconds_per_epoch = 0.0;
  std::size_t peak_bytes = 0;
};

/// Times `epochs` training epochs at batch size 1.
BenchmarkResult benchmark(Model& model, const std::vector<Sample>& samples, std::size_t epochs = 1, double lr = 1e-3);

/// Peak resident set size of the process (VmHWM), 0 where unavailable.
std::size_t peak_memory_bytes();

}  // namespace emnn
