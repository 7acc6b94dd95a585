#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "emnn/model.hpp"

namespace emnn {

// Binary layout, all integers and doubles little-endian:
//   "EMNN"                     4-byte magic
//   u32 version                kCheckpointVersion
//   u64 length, bytes          model config as flat JSON
//   u64 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Model& model);
void save_checkpoint(const std::filesystem::path& path, const Model& model);

/// Rebuilds the model from the stored config and overwrites every parameter.
/// Throws IoError on a bad magic, version mismatch, truncation or a tensor
/// that does not match the rebuilt model.
Model read_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace emnn
