#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "emnn/error.hpp"
#include "emnn/shapes.hpp"
#include "emnn/train.hpp"
#include "support.hpp"

using namespace emnn;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(Task task = Task::classification) {
  ModelConfig c;
  c.task = task;
  c.feature_dim = 8;
  c.message_dim = 8;
  c.hidden_dim = 8;
  c.num_layers = 2;
  return variant_config("emnn+mc+hier", c);
}

std::vector<Sample> toy_set(const ModelConfig& c, std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const Mesh m = label == 0 ? shapes::jitter(shapes::icosphere(1), 0.02, i) : shapes::jitter(shapes::subdivided_cube(2), 0.02, i);
    out.push_back(labeled_sample(m, c, label));
  }
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("emnn_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = path / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
    return p;
  }
};

std::string off_text(const Mesh& m) {
  std::ostringstream os;
  write_off(os, m);
  return os.str();
}

template <typename E>
std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("Adam applies bias-corrected moments") {
  ParameterSet ps;
  ps.add("w", {2}, {1.0, -2.0});
  Adam opt(ps, 0.1, 0.9, 0.999, 1e-8);
  ps.zero_grad();
  ps[0].grad = {0.5, -4.0};
  opt.step();
  // First step: m_hat = g and v_hat = g^2.
  CHECK(ps[0].value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
  CHECK(ps[0].value[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-15));

  ps[0].grad = {1.5, 0.0};
  const double before = ps[0].value[0];
  opt.step();
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 1.5, v = 0.999 * 0.001 * 0.25 + 0.001 * 2.25;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  CHECK(ps[0].value[0] == doctest::Approx(before - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-13));
  CHECK(opt.steps() == 2);

  // Minimises a quadratic.
  ParameterSet q;
  q.add("x", {1}, {3.0});
  Adam o2(q, 0.05);
  for (int i = 0; i < 2000; ++i) {
    q[0].grad = {2.0 * (q[0].value[0] - 1.0)};
    o2.step();
  }
  CHECK(std::abs(q[0].value[0] - 1.0) < 1e-3);
}

TEST_CASE("training logs are bitwise reproducible") {
  const ModelConfig c = tiny();
  const auto train_set = toy_set(c, 4);
  const auto test_set = toy_set(c, 2);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 5;
  tc.log_timing = false;
  tc.early_stop = false;
  std::string logs[2];
  std::vector<double> weights[2];
  for (int run = 0; run < 2; ++run) {
    Model m(c, 9);
    std::ostringstream os;
    const TrainResult r = train(m, train_set, test_set, tc, &os);
    CHECK(r.steps == 12);
    CHECK(r.history.size() == 3);
    logs[run] = os.str();
    weights[run] = m.parameters()[0].value;
  }
  CHECK(logs[0] == logs[1]);
  CHECK(testing::bitwise_equal(weights[0], weights[1]));
  CHECK(logs[0].rfind("epoch,train_loss,train_acc,test_acc,wall_seconds,peak_bytes\n", 0) == 0);
  CHECK(logs[0].find(",0.000000,0\n") != std::string::npos);

  // A different seed shuffles differently.
  tc.seed = 6;
  Model m(c, 9);
  std::ostringstream os;
  train(m, train_set, test_set, tc, &os);
  CHECK(os.str() != logs[0]);
}

TEST_CASE("batched gradients are averaged") {
  const ModelConfig c = tiny();
  const auto set = toy_set(c, 2);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.early_stop = false;
  Model m(c, 1);
  const TrainResult r = train(m, set, {}, tc);
  CHECK(r.steps == 1);
}

TEST_CASE("zero epochs records the untrained model once") {
  const ModelConfig c = tiny();
  const auto set = toy_set(c, 2);
  TrainConfig tc;
  tc.epochs = 0;
  tc.log_timing = false;
  Model m(c, 3);
  const std::vector<double> before = m.parameters()[0].value;
  std::ostringstream os;
  const TrainResult r = train(m, set, {}, tc, &os);
  CHECK(r.steps == 0);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].epoch == 0);
  CHECK(!r.history[0].test_acc);
  CHECK(testing::bitwise_equal(m.parameters()[0].value, before));
  const std::string text = os.str();
  const std::string row = text.substr(text.find('\n') + 1);
  CHECK(row.rfind("0,", 0) == 0);
  CHECK(row.find(",,0.000000,0") != std::string::npos);
}

TEST_CASE("metrics rows use round-trip precision") {
  std::ostringstream os;
  EpochMetrics m;
  m.epoch = 4;
  m.train_loss = 0.1;
  m.train_acc = 2.0 / 3.0;
  m.test_acc = 0.5;
  write_metrics_row(os, m);
  std::istringstream in(os.str());
  std::string field;
  std::getline(in, field, ',');
  CHECK(field == "4");
  std::getline(in, field, ',');
  CHECK(std::stod(field) == 0.1);
  std::getline(in, field, ',');
  CHECK(std::stod(field) == 2.0 / 3.0);
  std::getline(in, field, ',');
  CHECK(field == "0.5");
}

TEST_CASE("a non-finite loss reports epoch, step and sample") {
  const ModelConfig c = tiny();
  const auto set = toy_set(c, 3);
  Model m(c, 2);
  auto& params = m.parameters().all();
  params.back().value[0] = std::nan("");
  TrainConfig tc;
  tc.epochs = 1;
  const std::string msg = error_of<NumericalError>([&] { train(m, set, {}, tc); });
  CHECK(msg.rfind("epoch 1 step 1 (sample ", 0) == 0);
}

TEST_CASE("evaluation reports per-class accuracy with NaN for absent classes") {
  ModelConfig c = tiny();
  c.num_classes = 3;
  const auto set = toy_set(c, 4);
  Model m(c, 2);
  const EvalResult r = evaluate(m, set);
  CHECK(r.total == 4);
  REQUIRE(r.per_class.size() == 3);
  CHECK(std::isnan(r.per_class[2]));
  CHECK(std::isfinite(r.loss));
  CHECK(r.accuracy == static_cast<double>(r.correct) / 4.0);
}

TEST_CASE("manifests resolve paths and validate entries") {
  TempDir dir("manifest");
  dir.write("meshes/a.off", off_text(shapes::tetrahedron()));
  dir.write("meshes/b.off", off_text(shapes::icosphere(1)));
  const Mesh ico = shapes::icosphere(1);
  std::string labels;
  for (std::size_t v = 0; v < ico.num_vertices(); ++v) labels += (v % 2 ? "1 " : "0\n");
  dir.write("meshes/b.labels", labels);

  const Dataset a = load_manifest(dir.write("cls.json", R"([{"mesh": "meshes/a.off", "label": 1},
                                                             {"mesh": "meshes/b.off", "label": 0}])"));
  REQUIRE(a.items.size() == 2);
  CHECK(a.items[0].mesh == dir.path / "meshes/a.off");
  CHECK(a.items[0].label == 1);

  const Dataset b = load_manifest(dir.write("seg.json", R"({"items": [{"mesh": "meshes/b.off", "labels": "meshes/b.labels"}]})"));
  const std::vector<Sample> seg = load_samples(b, tiny(Task::segmentation), 2);
  REQUIRE(seg.size() == 1);
  CHECK(seg[0].labels.size() == ico.num_vertices());
  CHECK(seg[0].labels[1] == 1);

  // Manifest order survives the worker pool.
  std::string many = "[";
  for (int i = 0; i < 9; ++i) many += std::string(i ? "," : "") + R"({"mesh": "meshes/)" + (i % 3 ? "a" : "b") + ".off\", \"label\": " + std::to_string(i % 2) + "}";
  const std::vector<Sample> loaded = load_samples(load_manifest(dir.write("many.json", many + "]")), tiny(), 3);
  for (int i = 0; i < 9; ++i) {
    CHECK(loaded[i].label == i % 2);
    CHECK(loaded[i].num_nodes == (i % 3 ? 4u : ico.num_vertices()));
  }

  CHECK_THROWS_AS(load_manifest(dir.path / "missing.json"), IoError);
  CHECK_THROWS_AS(load_manifest(dir.write("bad.json", "{not json")), IoError);
  CHECK(error_of<IoError>([&] { load_manifest(dir.write("both.json", R"([{"mesh": "x.off", "label": 0, "labels": "y"}])")); })
            .find("exactly one") != std::string::npos);
  CHECK_THROWS_AS(load_manifest(dir.write("nomesh.json", R"([{"label": 0}])")), IoError);

  const Dataset out_of_range = load_manifest(dir.write("range.json", R"([{"mesh": "meshes/a.off", "label": 7}])"));
  CHECK_THROWS_AS(load_samples(out_of_range, tiny(), 1), ConfigError);
  const Dataset wrong_task = load_manifest(dir.write("task.json", R"([{"mesh": "meshes/a.off", "label": 0}])"));
  CHECK_THROWS_AS(load_samples(wrong_task, tiny(Task::segmentation), 1), ConfigError);
}

TEST_CASE("invalid meshes are reported on one line") {
  TempDir dir("badmesh");
  dir.write("fin.off", "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n");
  const Dataset d = load_manifest(dir.write("m.json", R"([{"mesh": "fin.off", "label": 0}])"));
  const std::string msg = error_of<MeshError>([&] { load_samples(d, tiny(), 1); });
  CHECK(msg.find("invalid mesh") != std::string::npos);
  CHECK(msg.find('\n') == std::string::npos);
}

TEST_CASE("EMNN_THREADS sets the loader worker count") {
  ::setenv("EMNN_THREADS", "3", 1);
  CHECK(loader_threads() == 3);
  testing::WarningCapture w;
  ::setenv("EMNN_THREADS", "many", 1);
  CHECK(loader_threads() >= 1);
  CHECK(w.messages.size() == 1);
  ::unsetenv("EMNN_THREADS");
  CHECK(loader_threads() >= 1);
}

TEST_CASE("benchmark counts steps and handles empty input") {
  const ModelConfig c = tiny();
  Model m(c, 1);
  const BenchmarkResult empty = benchmark(m, {}, 1);
  CHECK(empty.steps == 0);
  CHECK(benchmark(m, toy_set(c, 1), 0).steps == 0);
  const BenchmarkResult r = benchmark(m, toy_set(c, 2), 2);
  CHECK(r.steps == 4);
  CHECK(r.seconds_per_epoch > 0.0);
  CHECK(peak_memory_bytes() > 0);
}

}  // TEST_SUITE
