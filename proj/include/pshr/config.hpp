#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pshr/data.hpp"
#include "pshr/trainer.hpp"

namespace pshr::cli {

/// Malformed configuration text; the message starts with "source:line:".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string root = "data";  // relative paths resolve against the output directory
  std::size_t identities = 16;
  std::size_t images_per_identity = 12;
  data::ToyGeometry geometry;
  std::size_t queries_per_identity = 3;
  data::MlrPolicy mlr{{2}, true};
};

struct RunConfig {
  train::ModelConfig model;
  train::TrainRunConfig train;
  DataConfig data;

  void validate() const;
};

/// INI text: [backbone] [head] [sr] [losses] [train] [data] sections with
/// key = value lines and # comments. Unset keys keep their defaults.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical INI rendering; parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& config);

}  // namespace pshr::cli
