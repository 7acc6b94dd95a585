// emnn: train, evaluate, benchmark and verify equivariant mesh networks.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emnn/checkpoint.hpp"
#include "emnn/config.hpp"
#include "emnn/equivariance.hpp"
#include "emnn/error.hpp"
#include "emnn/train.hpp"

namespace fs = std::filesystem;
using namespace emnn;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string output;
  std::size_t trials = 0;
  double tolerance = 0.0;
  std::string dataset;
  std::string test_dataset;
  std::string checkpoint;
  std::string mesh;
  std::string variant;
  std::size_t depth = 0;
  bool inject_fault = false;
  std::size_t epochs = 0;
};

// Flags given on the command line win over the config file.
RunConfig resolve(const Flags& f, const CLI::App& cmd) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_config_file(f.config);
  auto given = [&](const char* name) { return cmd.get_option_no_throw(name) && cmd.count(name) > 0; };
  if (given("--seed")) rc.train.seed = f.seed;
  if (given("--output")) rc.train.output = f.output;
  if (given("--trials")) rc.check.trials = f.trials;
  if (given("--tolerance")) rc.check.tolerance = f.tolerance;
  if (given("--dataset")) rc.train.dataset = f.dataset;
  if (given("--test-dataset")) rc.train.test_dataset = f.test_dataset;
  if (given("--checkpoint")) rc.train.checkpoint = f.checkpoint;
  if (given("--mesh")) rc.check.mesh = f.mesh;
  if (given("--variant")) rc.check.variant = f.variant;
  if (given("--depth")) rc.model.hierarchy.depth = f.depth;
  if (given("--inject-fault")) rc.check.inject_fault = f.inject_fault;
  if (given("--epochs")) rc.train.epochs = f.epochs;
  return rc;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
}

std::vector<Sample> load_split(const std::string& manifest, const ModelConfig& model) {
  return load_samples(load_manifest(manifest), model);
}

std::string percent(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * acc);
  return buf;
}

int cmd_train(const RunConfig& rc) {
  require(rc.train.dataset, "--dataset (train.dataset)");
  rc.model.check();
  rc.train.check();
  const std::vector<Sample> train_set = load_split(rc.train.dataset, rc.model);
  const std::vector<Sample> test_set =
      rc.train.test_dataset.empty() ? std::vector<Sample>{} : load_split(rc.train.test_dataset, rc.model);
  const fs::path out = rc.train.output;
  fs::create_directories(out);

  std::vector<double> finals;
  for (std::size_t k = 0; k < rc.train.num_seeds; ++k) {
    TrainConfig tc = rc.train;
    tc.seed = rc.train.seed + k;
    const std::string suffix = rc.train.num_seeds > 1 ? "_seed" + std::to_string(tc.seed) : "";
    Model model(rc.model, tc.seed);
    std::ofstream metrics(out / ("metrics" + suffix + ".csv"));
    if (!metrics) throw IoError("cannot write metrics in " + out.string());
    const TrainResult r = train(model, train_set, test_set, tc, &metrics);
    save_checkpoint(out / ("model" + suffix + ".bin"), model);
    const EpochMetrics& last = r.history.back();
    std::cout << "seed " << tc.seed << ": epochs " << last.epoch << ", train accuracy " << percent(last.train_acc);
    if (last.test_acc) {
      std::cout << ", test accuracy " << percent(*last.test_acc);
      finals.push_back(*last.test_acc);
    }
    std::cout << "\n";
  }
  if (finals.size() > 1) {
    const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / static_cast<double>(finals.size());
    double var = 0.0;
    for (double a : finals) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(finals.size()));
    std::cout << "test accuracy over " << finals.size() << " seeds: " << percent(mean) << " (" << percent(sd) << ")\n";
  }
  return kOk;
}

int cmd_eval(const RunConfig& rc) {
  require(rc.train.checkpoint, "--checkpoint (train.checkpoint)");
  require(rc.train.dataset, "--dataset (train.dataset)");
  if (!fs::exists(rc.train.checkpoint)) throw IoError("checkpoint not found: " + rc.train.checkpoint);
  Model model = load_checkpoint(rc.train.checkpoint);
  const std::vector<Sample> samples = load_split(rc.train.dataset, model.config());
  const EvalResult r = evaluate(model, samples);
  std::cout << "accuracy " << percent(r.accuracy) << " (" << r.correct << "/" << r.total << "), loss " << r.loss
            << "\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    std::cout << "  class " << c << ": " << (std::isnan(r.per_class[c]) ? std::string("n/a") : percent(r.per_class[c]))
              << "\n";
  }
  return kOk;
}

int cmd_benchmark(const RunConfig& rc) {
  require(rc.train.dataset, "--dataset (train.dataset)");
  rc.model.check();
  const std::vector<Sample> samples = load_split(rc.train.dataset, rc.model);
  Model model(rc.model, rc.train.seed);
  const std::size_t epochs = rc.train.epochs.value_or(1);
  const BenchmarkResult r = benchmark(model, samples, epochs, rc.train.lr);
  std::size_t vertices = 0, edges = 0;
  for (const Sample& s : samples) {
    vertices += s.num_nodes;
    edges += s.mesh.num_edges();
  }
  char row[256];
  std::snprintf(row, sizeof row, "%zu,%zu,%zu,%zu,%zu,%.6f,%zu", samples.size(), vertices, edges, epochs, r.steps,
                r.seconds_per_epoch, r.peak_bytes);
  const std::string header = "meshes,vertices,edges,epochs,steps,seconds_per_epoch,peak_bytes";
  std::cout << header << "\n" << row << "\n";
  if (!rc.train.output.empty() && rc.train.output != ".") {
    fs::create_directories(rc.train.output);
    std::ofstream f(fs::path(rc.train.output) / "benchmark.csv");
    f << header << "\n" << row << "\n";
  }
  return kOk;
}

int cmd_check(const RunConfig& rc) {
  require(rc.check.mesh, "--mesh (check.mesh)");
  const Mesh mesh = load_off(rc.check.mesh);
  std::vector<std::pair<std::string, ModelConfig>> configs;
  if (rc.check.variant.empty()) {
    configs.emplace_back("configured", rc.model);
  } else if (rc.check.variant == "all") {
    for (const auto& v : variant_names()) configs.emplace_back(v, variant_config(v, rc.model));
  } else {
    configs.emplace_back(rc.check.variant, variant_config(rc.check.variant, rc.model));
  }

  CheckOptions opt;
  opt.trials = rc.check.trials;
  opt.tolerance = rc.check.tolerance;
  opt.seed = rc.train.seed;
  opt.inject_fault = rc.check.inject_fault;
  bool all_passed = true;
  for (const auto& [name, cfg] : configs) {
    Model model(cfg, rc.train.seed);
    const EquivarianceReport r = check_equivariance(model, mesh, opt);
    std::cout << "model " << name << ": " << r.to_text();
    all_passed = all_passed && r.passed;
  }
  return all_passed ? kOk : kRuntimeFailure;
}

int cmd_info(const RunConfig& rc) {
  require(rc.check.mesh, "--mesh");
  const Mesh mesh = load_off(rc.check.mesh);
  const ValidationReport report = validate(mesh);
  const bool manifold = report.bad_edges.empty();
  std::cout << mesh.num_vertices() << " vertices, " << mesh.num_edges() << " edges, " << mesh.num_faces()
            << " faces, manifold: " << (manifold ? "yes" : "no") << "\n";
  if (!report.ok()) std::cout << report.summary();

  const FaceGeometry fg = face_geometry(mesh);
  if (!fg.areas.empty()) {
    double lo = fg.areas[0], hi = fg.areas[0], total = 0.0;
    for (double a : fg.areas) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      total += a;
    }
    std::cout << "face area: min " << lo << ", max " << hi << ", total " << total << "\n";
    const VertexGeometry vg = vertex_geometry(mesh, fg);
    std::size_t unit = 0;
    for (const Vec3& n : vg.normals) unit += std::abs(norm(n) - 1.0) < 1e-12 ? 1 : 0;
    std::cout << "vertex normals: " << unit << " of " << mesh.num_vertices() << " unit length\n";
  }
  if (mesh.num_vertices() > 0) {
    const Mesh normalized = normalize_mesh(mesh);
    HierarchyOptions ho = rc.model.hierarchy;
    const Hierarchy h = build_hierarchy(normalized.positions(), ho);
    std::cout << "hierarchy (depth " << h.depth() << "): " << h.level_size(0);
    for (const auto& level : h.levels) std::cout << " -> " << level.size() << " (r=" << level.radius << ")";
    std::cout << "\n";
  }
  return kOk;
}

bool is_input_error(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
         dynamic_cast<const MeshError*>(&e) || dynamic_cast<const ShapeError*>(&e);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant mesh neural networks"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", f.config, "flat JSON config file")->check(CLI::ExistingFile);
    c->add_option("--seed", f.seed, "random seed");
    c->add_option("--output", f.output, "output directory");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset manifest");
  common(train_cmd);
  train_cmd->add_option("--dataset", f.dataset, "training manifest");
  train_cmd->add_option("--test-dataset", f.test_dataset, "test manifest evaluated every epoch");
  train_cmd->add_option("--depth", f.depth, "hierarchy depth");
  train_cmd->add_option("--epochs", f.epochs, "number of epochs");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset manifest");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint");
  eval_cmd->add_option("--dataset", f.dataset, "manifest to evaluate");

  CLI::App* bench_cmd = app.add_subcommand("benchmark", "time training epochs at batch size 1");
  common(bench_cmd);
  bench_cmd->add_option("--dataset", f.dataset, "manifest to train on");
  bench_cmd->add_option("--depth", f.depth, "hierarchy depth");
  bench_cmd->add_option("--epochs", f.epochs, "number of timed epochs");

  CLI::App* check_cmd = app.add_subcommand("check-equivariance", "randomized equivariance checks on a mesh");
  common(check_cmd);
  check_cmd->add_option("--mesh", f.mesh, "OFF mesh");
  check_cmd->add_option("--trials", f.trials, "random trials");
  check_cmd->add_option("--tolerance", f.tolerance, "maximum allowed deviation");
  check_cmd->add_option("--variant", f.variant, "model variant, or 'all' for the six baselines");
  check_cmd->add_option("--depth", f.depth, "hierarchy depth");
  check_cmd->add_flag("--inject-fault", f.inject_fault, "order face corners by vertex index (should fail)");

  CLI::App* info_cmd = app.add_subcommand("info", "print mesh statistics and a hierarchy preview");
  common(info_cmd);
  info_cmd->add_option("--mesh", f.mesh, "OFF mesh");
  info_cmd->add_option("--depth", f.depth, "hierarchy depth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return kUsageError;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig rc = resolve(f, *cmd);
    if (cmd == train_cmd) return cmd_train(rc);
    if (cmd == eval_cmd) return cmd_eval(rc);
    if (cmd == bench_cmd) return cmd_benchmark(rc);
    if (cmd == check_cmd) return cmd_check(rc);
    return cmd_info(rc);
  } catch (const Error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return is_input_error(e) ? kUsageError : kRuntimeFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return kRuntimeFailure;
  }
}
