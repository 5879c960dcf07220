#include "pshr/vdsr_ca.hpp"

#include "pshr/ops.hpp"

namespace pshr::sr {

CABlock CABlock::create(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ContractError("CA channel count " + std::to_string(channels) + " is not divisible by reduction " +
                        std::to_string(reduction));
  }
  CABlock block;
  block.channels = channels;
  block.reduction = reduction;
  const std::size_t squeezed = channels / reduction;
  block.down = he_normal({squeezed, channels, 1, 1}, channels, rng);
  block.up = he_normal({channels, squeezed, 1, 1}, squeezed, rng);
  return block;
}

Tensor CABlock::scaling(const Tensor& features) const {
  if (features.rank() != 4 || features.dim(1) != channels) {
    throw ShapeError("CA block expects " + std::to_string(channels) + " channels, got " + to_string(features.shape()));
  }
  const Tensor z = global_avg_pool(features);
  const Tensor hidden = relu(conv2d(z, down, nullptr, 1, 0));
  return sigmoid(conv2d(hidden, up, nullptr, 1, 0));
}

Tensor CABlock::forward(const Tensor& features) const { return mul(features, scaling(features)); }

void CABlock::append_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".down", down});
  out.push_back({prefix + ".up", up});
}

VdsrCaNet::VdsrCaNet(const VdsrCaConfig& config, Rng& rng) : config_(config) {
  if (config.depth < 2) throw ContractError("VDSR-CA depth must be at least 2");
  if (config.width == 0) throw ContractError("VDSR-CA width must be positive");
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::size_t in = i == 0 ? 3 : config.width;
    const std::size_t out = i + 1 == config.depth ? 3 : config.width;
    // The reconstruction conv starts at zero: an untrained net returns its input.
    Tensor weight = i + 1 == config.depth ? zeros_param({out, in, 3, 3}) : he_normal({out, in, 3, 3}, in * 9, rng);
    // Gates start near 0.5; doubling convs fed by a gate keeps activations from shrinking with depth.
    if (i > 0 && i + 1 < config.depth)
      for (auto& v : weight.mutable_data()) v *= 2.0;
    convs_.push_back({weight, zeros_param({out})});
    if (i + 1 < config.depth) attention_.push_back(CABlock::create(config.width, config.reduction, rng));
  }
}

Tensor VdsrCaNet::forward(const Tensor& lr_up) const {
  if (lr_up.rank() != 4 || lr_up.dim(1) != 3) {
    throw ShapeError("VDSR-CA expects an N x 3 x H x W batch, got " + to_string(lr_up.shape()));
  }
  Tensor x = lr_up;
  for (std::size_t i = 0; i + 1 < convs_.size(); ++i) {
    x = relu(conv2d(x, convs_[i].weight, &convs_[i].bias, 1, 1));
    x = attention_[i].forward(x);
  }
  const Tensor residual = conv2d(x, convs_.back().weight, &convs_.back().bias, 1, 1);
  return config_.global_residual ? add(lr_up, residual) : residual;
}

ParameterList VdsrCaNet::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i);
    out.push_back({prefix + ".weight", convs_[i].weight});
    out.push_back({prefix + ".bias", convs_[i].bias});
    if (i < attention_.size()) attention_[i].append_parameters("ca" + std::to_string(i), out);
  }
  return out;
}

Tensor upscale(const Tensor& lr, std::size_t height, std::size_t width, Upscale kind) {
  if (kind == Upscale::Bilinear) return resize_bilinear(lr, height, width);
  if (lr.rank() != 4) throw ShapeError("upscale expects NCHW, got " + to_string(lr.shape()));
  const std::size_t planes = lr.dim(0) * lr.dim(1), h = lr.dim(2), w = lr.dim(3);
  std::vector<double> out(planes * height * width);
  const auto src = lr.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        out[(p * height + i) * width + j] = src[(p * h + i * h / height) * w + j * w / width];
  return Tensor::from({lr.dim(0), lr.dim(1), height, width}, std::move(out));
}

Tensor sr_loss(const Tensor& restored, const Tensor& target) {
  if (restored.rank() != 4 || target.rank() != 4 || restored.dim(0) != target.dim(0)) {
    throw ContractError("sr_loss needs equally sized batches, got " + to_string(restored.shape()) + " and " +
                        to_string(target.shape()));
  }
  if (restored.shape() != target.shape()) {
    throw ShapeError("sr_loss image shapes differ: " + to_string(restored.shape()) + " vs " + to_string(target.shape()));
  }
  const double per_image = static_cast<double>(restored.numel() / restored.dim(0));
  return scale(sum(abs(sub(restored, target))), 1.0 / per_image);
}

std::size_t parameter_count(const VdsrCaConfig& c) {
  const std::size_t w = c.width, squeezed = c.width / c.reduction;
  const std::size_t first = 3 * w * 9 + w;
  const std::size_t middle = (c.depth - 2) * (w * w * 9 + w);
  const std::size_t last = w * 3 * 9 + 3;
  const std::size_t attention = (c.depth - 1) * 2 * w * squeezed;
  return first + middle + last + attention;
}

}  // namespace pshr::sr
