#include <png.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pshr/data.hpp"
#include "pshr/ops.hpp"

namespace pshr::data {

Image Image::blank(std::size_t height, std::size_t width, double value) {
  return {height, width, std::vector<double>(3 * height * width, value)};
}

double Image::mean() const {
  if (pixels.empty()) throw ContractError("mean of an empty image");
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

Tensor to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractError("cannot batch zero images");
  const std::size_t h = images[0]->height, w = images[0]->width;
  std::vector<double> values;
  values.reserve(images.size() * 3 * h * w);
  for (const Image* im : images) {
    if (im->height != h || im->width != w) throw ShapeError("batched images must share one size");
    values.insert(values.end(), im->pixels.begin(), im->pixels.end());
  }
  return Tensor::from({images.size(), 3, h, w}, std::move(values));
}

Tensor to_batch(const Image& image) { return to_batch(std::vector<const Image*>{&image}); }

Image from_batch(const Tensor& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || index >= batch.dim(0)) {
    throw ShapeError("cannot take image " + std::to_string(index) + " from " + pshr::to_string(batch.shape()));
  }
  const std::size_t h = batch.dim(2), w = batch.dim(3), n = 3 * h * w;
  const auto d = batch.data();
  return {h, w, std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(index * n),
                                    d.begin() + static_cast<std::ptrdiff_t>((index + 1) * n))};
}

void quantize(Image& image) {
  for (auto& v : image.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Image decimate(const Image& image, std::size_t rate) {
  NoGradGuard guard;
  return from_batch(downsample_decimate(to_batch(image), rate), 0);
}

Image upscale(const Image& image, std::size_t height, std::size_t width, sr::Upscale kind) {
  NoGradGuard guard;
  return from_batch(sr::upscale(to_batch(image), height, width, kind), 0);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw DataError("cannot write an empty image to " + path.string());
  std::vector<png_byte> rgb(3 * image.height * image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        rgb[(y * image.width + x) * 3 + c] =
            static_cast<png_byte>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw DataError("cannot write " + path.string() + ": " + msg);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str())) {
    throw DataError("cannot read " + path.string() + ": " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw DataError("cannot decode " + path.string() + ": " + msg);
  }
  Image image = Image::blank(desc.height, desc.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) image.at(c, y, x) = rgb[(y * image.width + x) * 3 + c] / 255.0;
  return image;
}

std::size_t pad_extent(std::size_t extent) { return static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(extent))); }

AugmentParams draw_augment(std::size_t height, std::size_t width, Rng& rng) {
  AugmentParams p;
  p.flip = std::bernoulli_distribution(0.5)(rng);
  p.offset_y = std::uniform_int_distribution<std::size_t>(0, 2 * pad_extent(height))(rng);
  p.offset_x = std::uniform_int_distribution<std::size_t>(0, 2 * pad_extent(width))(rng);
  return p;
}

Image apply_augment(const Image& image, const AugmentParams& params) {
  const std::size_t h = image.height, w = image.width, ph = pad_extent(h), pw = pad_extent(w);
  if (params.offset_y > 2 * ph || params.offset_x > 2 * pw) throw ContractError("crop offset outside the padded canvas");
  Image out = Image::blank(h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        // Canvas coordinates relative to the original image.
        const auto sy = static_cast<std::ptrdiff_t>(y + params.offset_y) - static_cast<std::ptrdiff_t>(ph);
        auto sx = static_cast<std::ptrdiff_t>(x + params.offset_x) - static_cast<std::ptrdiff_t>(pw);
        if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        if (params.flip) sx = static_cast<std::ptrdiff_t>(w) - 1 - sx;
        out.at(c, y, x) = image.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
  return out;
}

Image augment(const Image& image, Rng& rng) { return apply_augment(image, draw_augment(image.height, image.width, rng)); }

}  // namespace pshr::data
