#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pshr/parameters.hpp"
#include "pshr/tensor.hpp"
#include "pshr/vdsr_ca.hpp"

namespace pshr::data {

/// File or format problem while reading or writing dataset artifacts.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Three-channel image, channel-major, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  static Image blank(std::size_t height, std::size_t width, double value = 0.0);
  bool empty() const { return pixels.empty(); }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  double mean() const;
};

Tensor to_batch(const std::vector<const Image*>& images);
Tensor to_batch(const Image& image);
Image from_batch(const Tensor& batch, std::size_t index);

/// Rounds to the 8-bit grid and clamps to [0, 1].
void quantize(Image& image);

Image decimate(const Image& image, std::size_t rate);
Image upscale(const Image& image, std::size_t height, std::size_t width, sr::Upscale kind = sr::Upscale::Bilinear);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

enum class Split { Train, Query, Gallery };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct SampleRecord {
  std::string path;  // relative to the manifest directory; may be empty
  Image image;       // inline pixels; empty until loaded
  int id = 0;
  int camera = 0;
  Split split = Split::Train;
  std::size_t rate = 1;  // 1 for HR, otherwise the LR down-sampling rate

  bool is_lr() const { return rate > 1; }
};

/// Procedural person-like images. Identities differ in torso and leg colours
/// and in one of two garment details; images vary in pose, lighting,
/// background and noise. Camera 2 adds a colour cast.
struct ToyGeometry {
  std::size_t height = 64;
  std::size_t width = 32;
  double color_gap = 0.25;  // minimum L-inf distance between identity palettes
  double noise = 0.02;
};

struct IdentityPalette {
  std::array<double, 3> torso;
  std::array<double, 3> legs;
  int detail = 0;  // 0 stripes, 1 bag
};

std::vector<IdentityPalette> identity_palettes(std::size_t n_ids, const ToyGeometry& geometry, std::uint64_t seed);

/// n_per_id images per identity, labels 1..n_ids; the first half of each
/// identity's images come from camera 1, the rest from camera 2.
std::vector<SampleRecord> toy_dataset(std::size_t n_ids, std::size_t n_per_id, const ToyGeometry& geometry,
                                      std::uint64_t seed);

/// Per identity: one camera-1 gallery image, `queries_per_id` camera-2
/// queries, the rest training. Selection is seeded.
void assign_single_shot_split(std::vector<SampleRecord>& records, std::size_t queries_per_id, std::uint64_t seed);

struct MlrPolicy {
  std::vector<int> cameras;  // cameras whose images get decimated
  bool queries_only = true;  // restrict to the query split
};

/// Decimates every selected HR image by a random r in {2,3,4}.
std::vector<SampleRecord> synthesize_mlr(std::vector<SampleRecord> records, const MlrPolicy& policy,
                                         std::uint64_t seed);

/// Manifest CSV with header path,id,camera,split,res_tag,r.
void write_manifest(const std::filesystem::path& manifest, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_manifest(const std::filesystem::path& manifest, bool load_pixels = true);

/// Writes every record's image as PNG under `dir` and the manifest next to
/// them. Record paths are set relative to `dir`.
void write_dataset(const std::filesystem::path& dir, std::vector<SampleRecord>& records);

std::vector<SampleRecord> select(const std::vector<SampleRecord>& records, Split split);

struct AugmentParams {
  bool flip = false;
  std::size_t offset_y = 0;  // crop origin inside the padded canvas
  std::size_t offset_x = 0;
};

std::size_t pad_extent(std::size_t extent);
AugmentParams draw_augment(std::size_t height, std::size_t width, Rng& rng);
/// Flip, zero-pad by 10% per side, crop back to the original size.
Image apply_augment(const Image& image, const AugmentParams& params);
Image augment(const Image& image, Rng& rng);

struct Batch {
  Tensor hr;     // [PK, 3, H, W]
  Tensor lr_up;  // decimated then resized back to H x W, [PK, 3, H, W]
  std::vector<int> labels;
  std::vector<std::size_t> rates;
  std::vector<std::size_t> records;  // indices into the sampler's records
  std::size_t identities = 0;
  std::size_t instances = 0;
};

struct SamplerOptions {
  std::size_t identities = 4;  // P
  std::size_t instances = 6;   // K
  bool augment = true;
  sr::Upscale upscale = sr::Upscale::Bilinear;
};

/// P x K sampler over HR training records. Each epoch visits every identity
/// at least once; order depends only on (records, P, K, seed).
class PkSampler {
 public:
  PkSampler(std::vector<SampleRecord> records, const SamplerOptions& options, std::uint64_t seed);

  std::vector<Batch> next_epoch();
  std::size_t batches_per_epoch() const;
  std::size_t identity_count() const { return by_id_.size(); }
  const std::vector<SampleRecord>& records() const { return records_; }

 private:
  Batch build(const std::vector<int>& ids);

  std::vector<SampleRecord> records_;
  SamplerOptions options_;
  Rng rng_;
  std::vector<std::pair<int, std::vector<std::size_t>>> by_id_;
};

}  // namespace pshr::data
