#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "pshr/parameters.hpp"
#include "pshr/tensor.hpp"

namespace pshr::reid {

inline constexpr std::size_t kStreams = 4;
/// Seq(1..5) followed by the class logits.
inline constexpr std::size_t kBundleElements = 6;
inline constexpr std::size_t kLogitsElement = 5;

struct BackboneConfig {
  std::array<std::size_t, kStreams> widths{8, 16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t stem_stride = 4;
  std::size_t input_h = 64;
  std::size_t input_w = 32;

  /// Spatial extent of stream `n` (0-based): input / 2^(n+2).
  std::size_t stream_h(std::size_t n) const;
  std::size_t stream_w(std::size_t n) const;
  void validate() const;
};

enum class PoolSizeRule {
  Table,        // pool_sizes as configured
  BranchIndex,  // p_n = n, the branch index
};

struct HeadConfig {
  std::array<std::size_t, kStreams> pool_sizes{4, 2, 2, 1};
  std::array<double, kStreams> amp_weights{1.0, 1.0, 1.0, 1.0};
  std::size_t embedding_dim = 64;
  std::size_t num_classes = 16;
  PoolSizeRule rule = PoolSizeRule::Table;

  std::size_t pool_size(std::size_t branch) const;
};

/// Per-branch sequence lengths w_n * p_n^2 followed by their sum.
std::array<std::size_t, 5> sequence_lengths(const BackboneConfig& backbone, const HeadConfig& head);
std::size_t test_feature_dim(const BackboneConfig& backbone, const HeadConfig& head);

/// Batched head outputs; every tensor has the batch as its leading axis.
struct SequenceBundle {
  std::array<Tensor, 5> seq;
  Tensor embedding;  // l_f
  Tensor logits;     // l_c

  /// Element i of the ordered set {Seq(1),...,Seq(5), l_c}.
  const Tensor& element(std::size_t i) const;
  std::size_t batch() const { return logits.dim(0); }
};

/// Replaces the input of one stream at one stage with zeros; used to probe
/// the cross-stream fusion paths.
struct StreamMask {
  std::size_t stage;   // 1..4
  std::size_t stream;  // 0-based, < stage
};

class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng);

  std::array<Tensor, kStreams> forward(const Tensor& image, const std::optional<StreamMask>& mask = {}) const;
  void append_parameters(ParameterList& out) const;
  const BackboneConfig& config() const { return config_; }

 private:
  // Bias-free conv followed by group normalization.
  struct Conv {
    Tensor weight, gamma, beta;
    std::size_t stride = 1;
    Tensor apply(const Tensor& x) const;
  };
  struct Block {
    Conv first, second;
  };
  // One path of a fusion: strided chain (source finer than target), 1x1 +
  // upsample (source coarser), or identity.
  struct FusePath {
    std::vector<Conv> convs;
  };

  Tensor run_block(const Block& block, const Tensor& x) const;
  std::vector<Tensor> fuse(std::size_t junction, const std::vector<Tensor>& streams) const;

  BackboneConfig config_;
  std::vector<Conv> stem_;
  // stages_[s][stream][block]
  std::vector<std::vector<std::vector<Block>>> stages_;
  // fusions_[j][target][source] for junction j between stage j+1 and j+2
  std::vector<std::vector<std::vector<FusePath>>> fusions_;
};

/// Seq(n) = flatten(AAP(f, p, p) + lambda_n * AMP(f, p, p)), shape [N, w_n p^2].
Tensor head_map(const Tensor& features, std::size_t branch, const HeadConfig& config);

struct HeadParameters {
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

SequenceBundle head_forward(const std::array<Tensor, kStreams>& maps, const HeadConfig& config,
                            const HeadParameters& params);

/// concat(Seq(5), l_f): the matching feature.
Tensor test_feature(const SequenceBundle& bundle);

/// Backbone plus representation head.
class ReIdNet {
 public:
  ReIdNet(const BackboneConfig& backbone, const HeadConfig& head, Rng& rng);

  SequenceBundle forward(const Tensor& images) const;
  ParameterList parameters() const;
  const BackboneConfig& backbone_config() const { return backbone_.config(); }
  const HeadConfig& head_config() const { return head_config_; }
  const Backbone& backbone() const { return backbone_; }

 private:
  Backbone backbone_;
  HeadConfig head_config_;
  HeadParameters head_;
};

/// Analytic parameter count, derived from the configs alone.
std::size_t parameter_count(const BackboneConfig& backbone, const HeadConfig& head);

}  // namespace pshr::reid
