#include "emnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "emnn/config.hpp"
#include "emnn/error.hpp"

namespace emnn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(std::string("checkpoint truncated reading ") + what);
  return v;
}

std::string take_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ull << 32)) throw IoError(std::string("checkpoint: implausible length for ") + what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError(std::string("checkpoint truncated reading ") + what);
  }
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  out.write("EMNN", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = model_config_to_json(model.config());
  put<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = model.parameters().all();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
}

Model read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EMNN", 4) != 0) throw IoError("not an EMNN checkpoint (bad magic)");
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  const std::string cfg = take_bytes(in, take<std::uint64_t>(in, "config length"), "config");
  Model model(model_config_from_json(cfg), 0);
  auto& params = model.parameters().all();
  const auto count = take<std::uint64_t>(in, "tensor count");
  if (count != params.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, model has " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = take_bytes(in, take<std::uint32_t>(in, "name length"), "name");
    if (name != p.name) throw IoError("checkpoint tensor '" + name + "' where '" + p.name + "' was expected");
    const auto rank = take<std::uint32_t>(in, "rank");
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(take<std::uint64_t>(in, "dims"));
    if (shape != p.shape) {
      throw IoError("checkpoint tensor " + name + " has shape " + ad::to_string(shape) + ", model expects " +
                    ad::to_string(p.shape));
    }
    if (!in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)))) {
      throw IoError("checkpoint truncated reading values of " + name);
    }
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  return read_checkpoint(in);
}

}  // namespace emnn
