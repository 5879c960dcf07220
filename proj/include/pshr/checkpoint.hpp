#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pshr/parameters.hpp"
#include "pshr/tensor.hpp"

namespace pshr {

/// Malformed or unreadable checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Named single-precision tensors. On disk: "PSHR", version byte, u32 LE
/// count, then per tensor u32 name length, name bytes, u32 rank, u32
/// extents, LE float32 values.
struct Checkpoint {
  static constexpr std::uint8_t kVersion = 1;

  std::vector<CheckpointEntry> entries;

  /// Appends every parameter, names prefixed by `prefix`.
  void add(const ParameterList& params, const std::string& prefix = "");
  /// Copies values into `params` looked up as prefix + name.
  void apply_to(ParameterList& params, const std::string& prefix = "") const;
  const CheckpointEntry* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;
};

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
Checkpoint decode(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pshr
