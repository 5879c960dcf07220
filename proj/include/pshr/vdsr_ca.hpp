#pragma once

#include <cstddef>
#include <string>

#include "pshr/parameters.hpp"
#include "pshr/tensor.hpp"

namespace pshr::sr {

/// Squeeze-and-excitation style channel gate: per-channel spatial mean,
/// 1x1 bottleneck down by `reduction`, ReLU, 1x1 back up, sigmoid, then a
/// per-channel rescale of the input. No biases.
struct CABlock {
  std::size_t channels = 0;
  std::size_t reduction = 0;
  Tensor down;  // [C/r, C, 1, 1]
  Tensor up;    // [C, C/r, 1, 1]

  static CABlock create(std::size_t channels, std::size_t reduction, Rng& rng);

  /// Gate values s, shape [N, C, 1, 1], each in (0, 1).
  Tensor scaling(const Tensor& features) const;
  Tensor forward(const Tensor& features) const;
  void append_parameters(const std::string& prefix, ParameterList& out) const;
};

enum class Upscale { Bilinear, Nearest };

struct VdsrCaConfig {
  std::size_t depth = 8;  // conv layers, including the first and last
  std::size_t width = 32;
  std::size_t reduction = 4;
  bool global_residual = true;
  Upscale upscale = Upscale::Bilinear;
};

/// VDSR-style same-size restorer: conv-relu-CA repeated depth-1 times, a
/// final 3-channel reconstruction conv, and a global skip from the input.
class VdsrCaNet {
 public:
  VdsrCaNet(const VdsrCaConfig& config, Rng& rng);

  /// `lr_up` is an LR batch already resized to the target geometry.
  Tensor forward(const Tensor& lr_up) const;

  const VdsrCaConfig& config() const { return config_; }
  ParameterList parameters() const;
  std::size_t block_count() const { return attention_.size(); }
  const CABlock& attention(std::size_t i) const { return attention_.at(i); }
  CABlock& attention(std::size_t i) { return attention_.at(i); }

  struct Conv {
    Tensor weight;
    Tensor bias;
  };
  const Conv& conv(std::size_t i) const { return convs_.at(i); }

 private:
  VdsrCaConfig config_;
  std::vector<Conv> convs_;
  std::vector<CABlock> attention_;
};

/// Resizes an NCHW LR batch to the target size with the configured kernel.
Tensor upscale(const Tensor& lr, std::size_t height, std::size_t width, Upscale kind);

/// Sum over the batch of per-image mean absolute error.
Tensor sr_loss(const Tensor& restored, const Tensor& target);

/// Analytic parameter count for a configuration.
std::size_t parameter_count(const VdsrCaConfig& config);

}  // namespace pshr::sr
