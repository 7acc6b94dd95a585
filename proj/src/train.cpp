#include "emnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "emnn/error.hpp"

namespace emnn {

namespace fs = std::filesystem;

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("items")) j = j["items"];
  if (!j.is_array()) throw IoError("manifest " + path.string() + " must be an array of entries");

  Dataset ds;
  ds.source = path;
  const fs::path dir = path.parent_path();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string where = "manifest " + path.string() + " entry " + std::to_string(i);
    if (!e.is_object() || !e.contains("mesh") || !e["mesh"].is_string()) throw IoError(where + ": missing \"mesh\"");
    DatasetItem item;
    item.mesh = dir / e["mesh"].get<std::string>();
    const bool has_label = e.contains("label"), has_labels = e.contains("labels");
    if (has_label == has_labels) throw IoError(where + ": needs exactly one of \"label\" and \"labels\"");
    if (has_label) {
      if (!e["label"].is_number_integer()) throw IoError(where + ": \"label\" must be an integer");
      item.label = e["label"].get<int>();
    } else {
      if (!e["labels"].is_string()) throw IoError(where + ": \"labels\" must be a path");
      item.labels_file = dir / e["labels"].get<std::string>();
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::size_t loader_threads() {
  if (const char* env = std::getenv("EMNN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    warn("ignoring invalid EMNN_THREADS value '" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read labels " + path.string());
  std::vector<int> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw IoError("labels " + path.string() + ": non-integer token '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

void check_label(int label, const ModelConfig& config, const std::string& where) {
  if (label < 0 || static_cast<std::size_t>(label) >= config.num_classes) {
    throw ConfigError(where + ": label " + std::to_string(label) + " outside [0, " +
                      std::to_string(config.num_classes) + ")");
  }
}

Sample load_one(const DatasetItem& item, const ModelConfig& config) {
  const std::string where = item.mesh.string();
  const Mesh mesh = load_off(item.mesh);
  const ValidationReport report = validate(mesh);
  if (!report.ok()) {
    std::string summary = report.summary();
    while (!summary.empty() && summary.back() == '\n') summary.pop_back();
    std::replace(summary.begin(), summary.end(), '\n', ';');
    throw MeshError(where + ": invalid mesh: " + summary);
  }
  Sample s = prepare_sample(mesh, config);
  if (config.task == Task::classification) {
    if (item.label < 0 && !item.labels_file.empty()) throw ConfigError(where + ": classification needs \"label\"");
    check_label(item.label, config, where);
    s.label = item.label;
  } else {
    if (item.labels_file.empty()) throw ConfigError(where + ": segmentation needs a \"labels\" file");
    s.labels = read_labels(item.labels_file);
    if (s.labels.size() != s.num_nodes) {
      throw ConfigError(item.labels_file.string() + ": " + std::to_string(s.labels.size()) + " labels for " +
                        std::to_string(s.num_nodes) + " vertices");
    }
    for (int l : s.labels) check_label(l, config, item.labels_file.string());
  }
  return s;
}

}  // namespace

std::vector<Sample> load_samples(const Dataset& dataset, const ModelConfig& config, std::size_t threads) {
  const std::size_t n = dataset.items.size();
  if (threads == 0) threads = loader_threads();
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<Sample> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = load_one(dataset.items[i], config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Sample labeled_sample(const Mesh& mesh, const ModelConfig& config, int label) {
  check_label(label, config, "sample");
  Sample s = prepare_sample(mesh, config);
  if (config.task == Task::classification) {
    s.label = label;
  } else {
    s.labels.assign(s.num_nodes, label);
  }
  return s;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& params = params_->all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.size() != p.value.size()) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      p.value[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

EvalResult evaluate(Model& model, const std::vector<Sample>& samples) {
  EvalResult r;
  const std::size_t classes = model.config().num_classes;
  std::vector<std::size_t> hit(classes, 0), seen(classes, 0);
  for (const Sample& s : samples) {
    ad::Tape tape;
    BoundParameters p(tape, model.parameters());
    const ForwardResult f = model.forward(s, p);
    r.loss += model.loss(f.logits, s).item();
    const std::vector<int> pred = Model::predictions(f.logits);
    const std::vector<int> truth = model.config().task == Task::classification ? std::vector<int>{s.label} : s.labels;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      ++seen[truth[i]];
      if (pred[i] == truth[i]) {
        ++hit[truth[i]];
        ++r.correct;
      }
      ++r.total;
    }
  }
  if (!samples.empty()) r.loss /= static_cast<double>(samples.size());
  r.accuracy = r.total > 0 ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    r.per_class.push_back(seen[c] > 0 ? static_cast<double>(hit[c]) / static_cast<double>(seen[c]) : std::nan(""));
  }
  return r;
}

void write_metrics_header(std::ostream& out) {
  out << "epoch,train_loss,train_acc,test_acc,wall_seconds,peak_bytes\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,", m.epoch, m.train_loss, m.train_acc);
  out << buf;
  if (m.test_acc) {
    std::snprintf(buf, sizeof buf, "%.17g", *m.test_acc);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, ",%.6f,%zu\n", m.wall_seconds, m.peak_bytes);
  out << buf << std::flush;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// One forward/backward pass; gradients accumulate into the parameters.
double accumulate_gradient(Model& model, const Sample& sample) {
  ad::Tape tape;
  BoundParameters p(tape, model.parameters());
  const ad::Tensor loss = model.loss(model.forward(sample, p).logits, sample);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericalError("non-finite loss " + std::to_string(value));
  tape.backward(loss);
  return value;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                  const TrainConfig& config, std::ostream* metrics) {
  config.check();
  if (train_set.empty()) throw ConfigError("training split is empty");
  const std::size_t epochs = config.resolved_epochs(model.config().task);
  ParameterSet& params = model.parameters();
  Adam opt(params, config.lr, config.beta1, config.beta2, config.adam_eps);
  Rng order_rng(config.seed ^ 0x5851f42d4c957f2dULL);

  TrainResult result;
  if (metrics) write_metrics_header(*metrics);
  const auto start = Clock::now();

  auto record = [&](std::size_t epoch) {
    const EvalResult tr = evaluate(model, train_set);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = tr.loss;
    m.train_acc = tr.accuracy;
    if (!test_set.empty()) m.test_acc = evaluate(model, test_set).accuracy;
    if (config.log_timing) {
      m.wall_seconds = seconds_since(start);
      m.peak_bytes = peak_memory_bytes();
    }
    if (metrics) write_metrics_row(*metrics, m);
    result.history.push_back(m);
    return m;
  };

  if (epochs == 0) {
    record(0);
    return result;
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      params.zero_grad();
      for (std::size_t i = b; i < end; ++i) {
        try {
          accumulate_gradient(model, train_set[order[i]]);
        } catch (const NumericalError& e) {
          throw NumericalError("epoch " + std::to_string(epoch) + " step " + std::to_string(result.steps + 1) +
                               " (sample " + std::to_string(order[i]) + "): " + e.what());
        }
      }
      if (end - b > 1) {
        const double inv = 1.0 / static_cast<double>(end - b);
        for (auto& p : params.all()) {
          for (double& g : p.grad) g *= inv;
        }
      }
      opt.step();
      ++result.steps;
    }
    const EpochMetrics m = record(epoch);
    if (config.early_stop && m.train_acc >= 1.0) break;
  }
  return result;
}

BenchmarkResult benchmark(Model& model, const std::vector<Sample>& samples, std::size_t epochs, double lr) {
  BenchmarkResult r;
  if (epochs == 0) return r;
  Adam opt(model.parameters(), lr);
  const auto start = Clock::now();
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const Sample& s : samples) {
      model.parameters().zero_grad();
      accumulate_gradient(model, s);
      opt.step();
      ++r.steps;
    }
  }
  r.seconds_per_epoch = seconds_since(start) / static_cast<double>(epochs);
  r.peak_bytes = peak_memory_bytes();
  return r;
}

std::size_t peak_memory_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::size_t kb = 0;
      ss >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

}  // namespace emnn
