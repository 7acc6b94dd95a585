// emnn-data: writes the bundled fixture meshes and the synthetic sphere/cube dataset.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "emnn/error.hpp"
#include "emnn/mesh.hpp"
#include "emnn/shapes.hpp"

namespace fs = std::filesystem;
using namespace emnn;

namespace {

void write_fixtures(const fs::path& dir) {
  fs::create_directories(dir);
  save_off(dir / "triangle.off", shapes::triangle());
  save_off(dir / "tetrahedron.off", shapes::tetrahedron());
  save_off(dir / "icosphere2.off", shapes::icosphere(2));
  save_off(dir / "grid9.off", shapes::grid(9));
  save_off(dir / "blob.off", shapes::blob());
  // Three triangles on one edge.
  save_off(dir / "nonmanifold.off",
           Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}}, {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}}));
}

// 20 spheres and 20 cubes; every fourth mesh of each class goes to the test split.
void write_synthetic(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir / "meshes");
  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  for (int i = 0; i < 20; ++i) {
    for (int label = 0; label < 2; ++label) {
      const std::string name = std::string(label == 0 ? "sphere" : "cube") + "_" + std::to_string(i) + ".off";
      save_off(dir / "meshes" / name, shapes::sphere_or_cube(label, seed + 2 * i + label));
      nlohmann::json e = {{"mesh", "meshes/" + name}, {"label", label}};
      (i % 4 == 3 ? test : train).push_back(e);
    }
  }
  std::ofstream(dir / "train.json") << train.dump(2) << "\n";
  std::ofstream(dir / "test.json") << test.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write fixture meshes and synthetic datasets"};
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 0;
  auto* fix = app.add_subcommand("fixtures", "write the fixture meshes");
  fix->add_option("dir", out, "output directory")->required();
  auto* syn = app.add_subcommand("synthetic", "write the sphere/cube classification dataset");
  syn->add_option("dir", out, "output directory")->required();
  syn->add_option("--seed", seed, "noise seed");
  CLI11_PARSE(app, argc, argv);
  try {
    if (fix->parsed()) write_fixtures(out);
    if (syn->parsed()) write_synthetic(out, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
