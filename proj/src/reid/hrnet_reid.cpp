#include "pshr/hrnet_reid.hpp"

#include <string>

#include "pshr/ops.hpp"

namespace pshr::reid {

namespace {

constexpr std::size_t kStemStride = 4;
constexpr std::size_t kTotalStride = 32;  // stem stride times 2^3

// Largest group count <= 4 dividing the channel count.
std::size_t norm_groups(std::size_t channels) {
  for (std::size_t g = 4; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

Tensor scaled_he(Shape shape, std::size_t fan_in, double factor, Rng& rng) {
  Tensor t = he_normal(std::move(shape), fan_in, rng);
  for (auto& v : t.mutable_data()) v *= factor;
  return t;
}

}  // namespace

std::size_t BackboneConfig::stream_h(std::size_t n) const { return input_h >> (n + 2); }
std::size_t BackboneConfig::stream_w(std::size_t n) const { return input_w >> (n + 2); }

void BackboneConfig::validate() const {
  if (stem_stride != kStemStride) {
    throw ContractError("stem stride must be 4, got " + std::to_string(stem_stride));
  }
  if (blocks_per_stage == 0) throw ContractError("blocks per stage must be positive");
  for (std::size_t w : widths)
    if (w == 0) throw ContractError("stream widths must be positive");
  if (input_h == 0 || input_w == 0 || input_h % kTotalStride != 0 || input_w % kTotalStride != 0) {
    throw ShapeError("input size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                     " must be a positive multiple of 32 in both axes");
  }
}

std::size_t HeadConfig::pool_size(std::size_t branch) const {
  if (branch >= kStreams) throw ContractError("branch index out of range: " + std::to_string(branch + 1));
  return rule == PoolSizeRule::BranchIndex ? branch + 1 : pool_sizes[branch];
}

std::array<std::size_t, 5> sequence_lengths(const BackboneConfig& backbone, const HeadConfig& head) {
  std::array<std::size_t, 5> out{};
  for (std::size_t n = 0; n < kStreams; ++n) {
    const std::size_t p = head.pool_size(n);
    out[n] = backbone.widths[n] * p * p;
    out[4] += out[n];
  }
  return out;
}

std::size_t test_feature_dim(const BackboneConfig& backbone, const HeadConfig& head) {
  return sequence_lengths(backbone, head)[4] + head.embedding_dim;
}

const Tensor& SequenceBundle::element(std::size_t i) const {
  if (i < 5) return seq[i];
  if (i == kLogitsElement) return logits;
  throw ContractError("sequence bundle element index out of range: " + std::to_string(i));
}

Tensor Backbone::Conv::apply(const Tensor& x) const {
  const std::size_t k = weight.dim(2);
  return group_norm(conv2d(x, weight, nullptr, stride, k / 2), norm_groups(weight.dim(0)), gamma, beta);
}

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const auto& w = config.widths;
  auto conv = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t stride) {
    return Conv{he_normal({out, in, k, k}, in * k * k, rng), ones_param({out}), zeros_param({out}), stride};
  };

  stem_.push_back(conv(3, w[0], 3, 2));
  stem_.push_back(conv(w[0], w[0], 3, 2));

  for (std::size_t stage = 1; stage <= kStreams; ++stage) {
    std::vector<std::vector<Block>> streams(stage);
    for (std::size_t s = 0; s < stage; ++s)
      for (std::size_t b = 0; b < config.blocks_per_stage; ++b)
        streams[s].push_back({conv(w[s], w[s], 3, 1), conv(w[s], w[s], 3, 1)});
    stages_.push_back(std::move(streams));
  }

  // Junction 0 is the transition opening stream 2; junctions 1 and 2 fuse
  // every stream into every stream of the next stage.
  for (std::size_t j = 0; j + 1 < kStreams; ++j) {
    const std::size_t sources = j + 1, targets = j + 2;
    std::vector<std::vector<FusePath>> paths(targets, std::vector<FusePath>(sources));
    for (std::size_t t = 0; t < targets; ++t) {
      for (std::size_t s = 0; s < sources; ++s) {
        if (j == 0 && t == 0) continue;  // transition keeps stream 1 as is
        auto& path = paths[t][s].convs;
        if (s > t) {
          path.push_back(conv(w[s], w[t], 1, 1));
        } else if (s < t) {
          for (std::size_t hop = s; hop < t; ++hop) path.push_back(conv(w[s], hop + 1 == t ? w[t] : w[s], 3, 2));
        }
      }
    }
    fusions_.push_back(std::move(paths));
  }
}

Tensor Backbone::run_block(const Block& block, const Tensor& x) const {
  const Tensor h = relu(block.first.apply(x));
  return relu(add(x, block.second.apply(h)));
}

std::vector<Tensor> Backbone::fuse(std::size_t junction, const std::vector<Tensor>& streams) const {
  const auto& paths = fusions_[junction];
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < paths.size(); ++t) {
    if (junction == 0 && t == 0) {
      out.push_back(streams[0]);
      continue;
    }
    Tensor acc;
    for (std::size_t s = 0; s < streams.size(); ++s) {
      const auto& convs = paths[t][s].convs;
      Tensor contribution = streams[s];
      if (s > t) {
        contribution = resize_bilinear(convs[0].apply(contribution), config_.stream_h(t), config_.stream_w(t));
      } else if (s < t) {
        for (std::size_t k = 0; k < convs.size(); ++k) {
          contribution = convs[k].apply(contribution);
          if (k + 1 < convs.size()) contribution = relu(contribution);
        }
      }
      acc = acc.defined() ? add(acc, contribution) : contribution;
    }
    out.push_back(relu(acc));
  }
  return out;
}

std::array<Tensor, kStreams> Backbone::forward(const Tensor& image, const std::optional<StreamMask>& mask) const {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != config_.input_h || image.dim(3) != config_.input_w) {
    throw ShapeError("backbone expects N x 3 x " + std::to_string(config_.input_h) + " x " +
                     std::to_string(config_.input_w) + ", got " + to_string(image.shape()));
  }
  if (mask && (mask->stage < 1 || mask->stage > kStreams || mask->stream >= mask->stage)) {
    throw ContractError("stream mask out of range");
  }
  Tensor x = relu(stem_[0].apply(image));
  x = relu(stem_[1].apply(x));

  std::vector<Tensor> streams{x};
  for (std::size_t stage = 1; stage <= kStreams; ++stage) {
    if (stage > 1) streams = fuse(stage - 2, streams);
    if (mask && mask->stage == stage) streams[mask->stream] = Tensor::zeros(streams[mask->stream].shape());
    for (std::size_t s = 0; s < stage; ++s)
      for (const auto& block : stages_[stage - 1][s]) streams[s] = run_block(block, streams[s]);
  }
  return {streams[0], streams[1], streams[2], streams[3]};
}

void Backbone::append_parameters(ParameterList& out) const {
  auto push = [&](const std::string& prefix, const Conv& c) {
    out.push_back({prefix + ".weight", c.weight});
    out.push_back({prefix + ".gamma", c.gamma});
    out.push_back({prefix + ".beta", c.beta});
  };
  for (std::size_t i = 0; i < stem_.size(); ++i) push("stem.conv" + std::to_string(i + 1), stem_[i]);
  for (std::size_t st = 0; st < stages_.size(); ++st)
    for (std::size_t s = 0; s < stages_[st].size(); ++s)
      for (std::size_t b = 0; b < stages_[st][s].size(); ++b) {
        const std::string prefix =
            "stage" + std::to_string(st + 1) + ".stream" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        push(prefix + ".conv1", stages_[st][s][b].first);
        push(prefix + ".conv2", stages_[st][s][b].second);
      }
  for (std::size_t j = 0; j < fusions_.size(); ++j)
    for (std::size_t t = 0; t < fusions_[j].size(); ++t)
      for (std::size_t s = 0; s < fusions_[j][t].size(); ++s) {
        const auto& convs = fusions_[j][t][s].convs;
        for (std::size_t k = 0; k < convs.size(); ++k)
          push("fuse" + std::to_string(j + 1) + ".to" + std::to_string(t + 1) + ".from" + std::to_string(s + 1) +
                   ".conv" + std::to_string(k + 1),
               convs[k]);
      }
}

Tensor head_map(const Tensor& features, std::size_t branch, const HeadConfig& config) {
  if (features.rank() != 4) throw ShapeError("head_map expects NCHW, got " + to_string(features.shape()));
  const std::size_t p = config.pool_size(branch);
  if (p > features.dim(2) || p > features.dim(3)) {
    throw ShapeError("pool size " + std::to_string(p) + " exceeds branch " + std::to_string(branch + 1) +
                     " extent " + to_string(features.shape()));
  }
  const Tensor avg = adaptive_pool(features, p, p, PoolMode::Avg);
  const double lambda = config.amp_weights[branch];
  Tensor pooled = avg;
  if (lambda != 0.0) pooled = add(avg, scale(adaptive_pool(features, p, p, PoolMode::Max), lambda));
  return reshape(pooled, {features.dim(0), features.dim(1) * p * p});
}

SequenceBundle head_forward(const std::array<Tensor, kStreams>& maps, const HeadConfig& config,
                            const HeadParameters& params) {
  SequenceBundle bundle;
  std::vector<Tensor> parts;
  for (std::size_t n = 0; n < kStreams; ++n) {
    bundle.seq[n] = head_map(maps[n], n, config);
    parts.push_back(bundle.seq[n]);
  }
  bundle.seq[4] = concat(parts, 1);
  bundle.embedding = linear(bundle.seq[4], params.fc1_weight, &params.fc1_bias);
  bundle.logits = linear(bundle.embedding, params.fc2_weight, &params.fc2_bias);
  return bundle;
}

Tensor test_feature(const SequenceBundle& bundle) { return concat({bundle.seq[4], bundle.embedding}, 1); }

ReIdNet::ReIdNet(const BackboneConfig& backbone, const HeadConfig& head, Rng& rng)
    : backbone_(backbone, rng), head_config_(head) {
  if (head.embedding_dim == 0 || head.num_classes == 0) {
    throw ContractError("embedding dimension and class count must be positive");
  }
  for (std::size_t n = 0; n < kStreams; ++n) {
    const std::size_t p = head.pool_size(n);
    if (p == 0 || p > backbone.stream_h(n) || p > backbone.stream_w(n)) {
      throw ShapeError("pool size " + std::to_string(p) + " does not fit branch " + std::to_string(n + 1) + " (" +
                       std::to_string(backbone.stream_h(n)) + "x" + std::to_string(backbone.stream_w(n)) + ")");
    }
  }
  const std::size_t seq5 = sequence_lengths(backbone, head)[4];
  head_.fc1_weight = he_normal({seq5, head.embedding_dim}, seq5, rng);
  head_.fc1_bias = zeros_param({head.embedding_dim});
  head_.fc2_weight = scaled_he({head.embedding_dim, head.num_classes}, head.embedding_dim, 0.1, rng);
  head_.fc2_bias = zeros_param({head.num_classes});
}

SequenceBundle ReIdNet::forward(const Tensor& images) const {
  // Images arrive in [0, 1]; centre them.
  return head_forward(backbone_.forward(add_scalar(images, -0.5)), head_config_, head_);
}

ParameterList ReIdNet::parameters() const {
  ParameterList out;
  backbone_.append_parameters(out);
  out.push_back({"head.fc1.weight", head_.fc1_weight});
  out.push_back({"head.fc1.bias", head_.fc1_bias});
  out.push_back({"head.fc2.weight", head_.fc2_weight});
  out.push_back({"head.fc2.bias", head_.fc2_bias});
  return out;
}

std::size_t parameter_count(const BackboneConfig& b, const HeadConfig& h) {
  const auto& w = b.widths;
  // Bias-free conv plus the normalization's scale and shift.
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + 2 * out; };
  std::size_t total = conv(3, w[0], 3) + conv(w[0], w[0], 3);
  for (std::size_t stage = 1; stage <= kStreams; ++stage)
    for (std::size_t s = 0; s < stage; ++s) total += b.blocks_per_stage * 2 * conv(w[s], w[s], 3);
  total += conv(w[0], w[1], 3);  // transition
  for (std::size_t sources = 2; sources <= 3; ++sources)
    for (std::size_t t = 0; t <= sources; ++t)
      for (std::size_t s = 0; s < sources; ++s) {
        if (s > t) total += conv(w[s], w[t], 1);
        if (s < t) total += (t - s - 1) * conv(w[s], w[s], 3) + conv(w[s], w[t], 3);
      }
  const std::size_t seq5 = sequence_lengths(b, h)[4];
  return total + seq5 * h.embedding_dim + h.embedding_dim + h.embedding_dim * h.num_classes + h.num_classes;
}

}  // namespace pshr::reid
