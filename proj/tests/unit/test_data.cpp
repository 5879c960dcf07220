#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "pshr/data.hpp"

using namespace pshr;
using namespace pshr::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pshr_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im = Image::blank(h, w);
  for (auto& v : im.pixels) v = u(rng);
  return im;
}

std::vector<SampleRecord> small_split(std::uint64_t seed) {
  auto recs = toy_dataset(6, 8, {}, seed);
  assign_single_shot_split(recs, 2, seed);
  return recs;
}

}  // namespace

TEST_CASE("toy dataset counts and labels") {
  auto recs = toy_dataset(16, 12, {}, 7);
  CHECK(recs.size() == 192);
  std::map<int, int> per_id;
  std::map<int, int> per_cam;
  for (const auto& r : recs) {
    ++per_id[r.id];
    ++per_cam[r.camera];
    CHECK(r.image.height == 64);
    CHECK(r.image.width == 32);
    CHECK(!r.is_lr());
    CHECK(std::all_of(r.image.pixels.begin(), r.image.pixels.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
  }
  CHECK(per_id.size() == 16);
  CHECK(per_id.begin()->first == 1);
  CHECK(per_id.rbegin()->first == 16);
  for (const auto& [id, n] : per_id) CHECK(n == 12);
  CHECK(per_cam == std::map<int, int>{{1, 96}, {2, 96}});
  CHECK_THROWS_AS(toy_dataset(1, 4, {}, 7), ContractError);
}

TEST_CASE("toy dataset replays bitwise under one seed") {
  auto a = toy_dataset(4, 3, {}, 11);
  auto b = toy_dataset(4, 3, {}, 11);
  auto c = toy_dataset(4, 3, {}, 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.pixels == b[i].image.pixels);
    any_diff |= a[i].image.pixels != c[i].image.pixels;
  }
  CHECK(any_diff);
}

TEST_CASE("identity palettes respect the colour gap") {
  ToyGeometry g;
  for (std::uint64_t seed : {1u, 7u, 99u}) {
    auto pal = identity_palettes(16, g, seed);
    for (std::size_t i = 0; i < pal.size(); ++i)
      for (std::size_t j = i + 1; j < pal.size(); ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
          d = std::max({d, std::fabs(pal[i].torso[c] - pal[j].torso[c]), std::fabs(pal[i].legs[c] - pal[j].legs[c])});
        CHECK(d > g.color_gap);
      }
  }
}

TEST_CASE("single-shot split") {
  auto recs = toy_dataset(16, 12, {}, 7);
  assign_single_shot_split(recs, 3, 7);
  std::map<int, std::map<Split, int>> counts;
  for (const auto& r : recs) {
    ++counts[r.id][r.split];
    if (r.split == Split::Gallery) CHECK(r.camera == 1);
    if (r.split == Split::Query) CHECK(r.camera == 2);
  }
  for (auto& [id, c] : counts) {
    CHECK(c[Split::Gallery] == 1);
    CHECK(c[Split::Query] == 3);
    CHECK(c[Split::Train] == 8);
  }
  auto again = toy_dataset(16, 12, {}, 7);
  assign_single_shot_split(again, 3, 7);
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].split == again[i].split);
  auto few = toy_dataset(2, 2, {}, 7);
  CHECK_THROWS_AS(assign_single_shot_split(few, 2, 7), ContractError);
}

TEST_CASE("MLR synthesis") {
  auto recs = small_split(3);
  auto same = synthesize_mlr(recs, {}, 5);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(same[i].image.pixels == recs[i].image.pixels);
    CHECK(same[i].rate == 1);
  }

  auto a = synthesize_mlr(recs, {{2}, true}, 5);
  auto b = synthesize_mlr(recs, {{2}, true}, 5);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(a[i].id == recs[i].id);
    CHECK(a[i].camera == recs[i].camera);
    CHECK(a[i].split == recs[i].split);
    CHECK(a[i].rate == b[i].rate);
    CHECK(a[i].image.pixels == b[i].image.pixels);
    if (recs[i].split == Split::Query) {
      REQUIRE(a[i].is_lr());
      seen.insert(a[i].rate);
      CHECK(a[i].image.height == 64 / a[i].rate);
      CHECK(a[i].image.width == 32 / a[i].rate);
    } else {
      CHECK(!a[i].is_lr());
    }
  }
  CHECK(seen.size() >= 2);

  auto all_cam2 = synthesize_mlr(recs, {{2}, false}, 5);
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(all_cam2[i].is_lr() == (recs[i].camera == 2));

  // r=2 on 64x32 gives 32x16.
  Image im = Image::blank(64, 32, 0.5);
  CHECK(decimate(im, 2).height == 32);
  CHECK(decimate(im, 2).width == 16);

  CHECK_THROWS_AS(synthesize_mlr(recs, {{3}, true}, 5), ContractError);
}

TEST_CASE("decimate then upscale keeps the mean") {
  for (std::size_t r : {2u, 3u, 4u}) {
    Image flat = Image::blank(64, 32, 0.37);
    CHECK(std::fabs(upscale(decimate(flat, r), 64, 32).mean() - 0.37) < 1e-6);
  }
  for (const auto& rec : toy_dataset(4, 6, {}, 21))
    for (std::size_t r : {2u, 3u, 4u})
      CHECK(std::fabs(upscale(decimate(rec.image, r), 64, 32).mean() - rec.image.mean()) < 0.05);
}

TEST_CASE("PNG round trip on the 8-bit grid") {
  Rng rng(1);
  auto dir = scratch("png");
  Image im = random_image(7, 5, rng);
  quantize(im);
  write_png(dir / "a.png", im);
  Image back = read_png(dir / "a.png");
  CHECK(back.height == 7);
  CHECK(back.width == 5);
  CHECK(back.pixels == im.pixels);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), DataError);
  CHECK_THROWS_AS(write_png(dir / "nodir" / "x.png", im), DataError);
}

TEST_CASE("manifest round trip and errors") {
  auto dir = scratch("manifest");
  auto recs = synthesize_mlr(small_split(4), {{2}, true}, 4);
  write_dataset(dir, recs);
  auto back = read_manifest(dir / "manifest.csv");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].path == recs[i].path);
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].camera == recs[i].camera);
    CHECK(back[i].split == recs[i].split);
    CHECK(back[i].rate == recs[i].rate);
    CHECK(back[i].image.pixels == recs[i].image.pixels);
  }
  std::ifstream in(dir / "manifest.csv");
  std::string header, first;
  std::getline(in, header);
  CHECK(header == "path,id,camera,split,res_tag,r");

  auto write = [&](const std::string& body) {
    std::ofstream out(dir / "bad.csv");
    out << body;
  };
  write("path,id,camera,split,res_tag,r\nx.png,1,1,train,LR,\n");
  CHECK_THROWS_WITH_AS(read_manifest(dir / "bad.csv", false), doctest::Contains("bad.csv:2"), DataError);
  write("path,id,camera,split,res_tag,r\nx.png,1,1,train,HR,2\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv", false), DataError);
  write("path,id,camera,split,res_tag,r\nx.png,1,1,elsewhere,HR,\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv", false), DataError);
  write("path,id,cam\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv", false), DataError);
  write("path,id,camera,split,res_tag,r\nx.png,one,1,train,HR,\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv", false), DataError);
  write("path,id,camera,split,res_tag,r\nx.png,1,1,query,LR,3\n");
  auto ok = read_manifest(dir / "bad.csv", false);
  CHECK(ok[0].rate == 3);
}

TEST_CASE("augmentation") {
  Rng rng(2);
  Image im = random_image(20, 10, rng);
  CHECK(pad_extent(64) == 6);
  CHECK(pad_extent(32) == 3);
  AugmentParams centred{false, pad_extent(20), pad_extent(10)};
  CHECK(apply_augment(im, centred).pixels == im.pixels);
  AugmentParams flip{true, pad_extent(20), pad_extent(10)};
  CHECK(apply_augment(apply_augment(im, flip), flip).pixels == im.pixels);
  auto flipped = apply_augment(im, flip);
  CHECK(flipped.at(1, 3, 0) == im.at(1, 3, 9));

  // Crop from the corner: the top-left pad region is zero.
  auto corner = apply_augment(im, {false, 0, 0});
  CHECK(corner.at(0, 0, 0) == 0.0);
  CHECK(corner.at(0, 2, 1) == im.at(0, 0, 0));
  CHECK_THROWS_AS(apply_augment(im, {false, 5, 0}), ContractError);

  for (int i = 0; i < 50; ++i) {
    auto out = augment(im, rng);
    CHECK(out.height == im.height);
    CHECK(out.width == im.width);
  }
}

TEST_CASE("P x K sampler") {
  auto train = select(small_split(5), Split::Train);  // 6 ids x 4 images
  SamplerOptions opt;
  opt.identities = 4;
  opt.instances = 6;  // more than available: resampled with replacement
  PkSampler sampler(train, opt, 9);
  CHECK(sampler.batches_per_epoch() == 2);
  auto epoch = sampler.next_epoch();
  REQUIRE(epoch.size() == 2);
  std::set<int> covered;
  for (const auto& b : epoch) {
    CHECK(b.hr.shape() == Shape{24, 3, 64, 32});
    CHECK(b.lr_up.shape() == Shape{24, 3, 64, 32});
    CHECK(b.labels.size() == 24);
    std::map<int, int> counts;
    for (int l : b.labels) ++counts[l];
    CHECK(counts.size() == 4);
    for (auto& [l, c] : counts) CHECK(c == 6);
    for (std::size_t i = 0; i < 24; ++i) {
      CHECK(train[b.records[i]].id == b.labels[i]);
      CHECK(b.rates[i] >= 2);
      CHECK(b.rates[i] <= 4);
    }
    covered.insert(b.labels.begin(), b.labels.end());
  }
  CHECK(covered.size() == 6);

  // All identities in one batch.
  opt.identities = 6;
  opt.instances = 2;
  PkSampler whole(train, opt, 3);
  for (int e = 0; e < 3; ++e)
    for (const auto& b : whole.next_epoch())
      CHECK(std::set<int>(b.labels.begin(), b.labels.end()).size() == 6);

  opt.identities = 7;
  CHECK_THROWS_AS(PkSampler(train, opt, 3), ContractError);
}

TEST_CASE("sampler without augmentation pairs HR with its decimated copy") {
  auto train = select(small_split(6), Split::Train);
  SamplerOptions opt{2, 3, false};
  PkSampler sampler(train, opt, 1);
  auto b = sampler.next_epoch().front();
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    const auto& hr = train[b.records[i]].image;
    CHECK(from_batch(b.hr, i).pixels == hr.pixels);
    CHECK(from_batch(b.lr_up, i).pixels == upscale(decimate(hr, b.rates[i]), 64, 32).pixels);
  }
}

TEST_CASE("sampler batch order replays under one seed") {
  auto train = select(small_split(7), Split::Train);
  SamplerOptions opt{3, 2, true};
  PkSampler a(train, opt, 42), b(train, opt, 42);
  for (int e = 0; e < 3; ++e) {
    auto ea = a.next_epoch(), eb = b.next_epoch();
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
      CHECK(ea[i].labels == eb[i].labels);
      CHECK(ea[i].records == eb[i].records);
      CHECK(ea[i].rates == eb[i].rates);
      CHECK(std::equal(ea[i].hr.data().begin(), ea[i].hr.data().end(), eb[i].hr.data().begin()));
      CHECK(std::equal(ea[i].lr_up.data().begin(), ea[i].lr_up.data().end(), eb[i].lr_up.data().begin()));
    }
  }
  auto lr = synthesize_mlr(small_split(7), {{2}, false}, 1);
  CHECK_THROWS_AS(PkSampler(lr, opt, 1), ContractError);
}
