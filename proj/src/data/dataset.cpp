#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pshr/data.hpp"

namespace pshr::data {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  throw ContractError("unknown split");
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "query") return Split::Query;
  if (text == "gallery") return Split::Gallery;
  throw DataError("unknown split tag '" + text + "'");
}

namespace {

using Color = std::array<double, 3>;

double linf(const IdentityPalette& a, const IdentityPalette& b) {
  double d = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    d = std::max(d, std::fabs(a.torso[c] - b.torso[c]));
    d = std::max(d, std::fabs(a.legs[c] - b.legs[c]));
  }
  return d;
}

void fill_rect(Image& im, double y0, double y1, double x0, double x1, const Color& color) {
  const auto clampi = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(std::lround(v), 0L, static_cast<long>(hi)));
  };
  const std::size_t ya = clampi(y0, im.height), yb = clampi(y1, im.height);
  const std::size_t xa = clampi(x0, im.width), xb = clampi(x1, im.width);
  for (std::size_t y = ya; y < yb; ++y)
    for (std::size_t x = xa; x < xb; ++x)
      for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) = color[c];
}

Image draw_person(const IdentityPalette& who, int camera, const ToyGeometry& g, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double H = static_cast<double>(g.height), W = static_cast<double>(g.width);
  Image im = Image::blank(g.height, g.width);

  // Background: tinted grey with a vertical ramp.
  const double grey = 0.3 + 0.4 * u(rng);
  Color tint{0.16 * u(rng) - 0.08, 0.16 * u(rng) - 0.08, 0.16 * u(rng) - 0.08};
  const double ramp = 0.2 * u(rng) - 0.1;
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) = grey + tint[c] + ramp * (static_cast<double>(y) / H - 0.5);

  const double dy = (4.0 * u(rng) - 2.0) * H / 64.0;
  const double dx = (4.0 * u(rng) - 2.0) * W / 32.0;
  const double half = (0.26 + 0.06 * u(rng)) * W;  // torso half-width
  const double cx = 0.5 * W + dx;

  const Color skin{0.8 + 0.1 * u(rng), 0.6 + 0.1 * u(rng), 0.45 + 0.1 * u(rng)};
  fill_rect(im, 0.06 * H + dy, 0.2 * H + dy, cx - 0.13 * W, cx + 0.13 * W, skin);

  const double torso_top = 0.22 * H + dy, torso_bottom = 0.55 * H + dy;
  fill_rect(im, torso_top, torso_bottom, cx - half, cx + half, who.torso);
  if (who.detail == 0) {
    const Color dark{0.5 * who.torso[0], 0.5 * who.torso[1], 0.5 * who.torso[2]};
    const double band = std::max(1.0, H / 32.0);
    for (double y = torso_top + band; y + band <= torso_bottom; y += 3.0 * band)
      fill_rect(im, y, y + band, cx - half, cx + half, dark);
  } else {
    const Color bag{1.0 - who.torso[0], 1.0 - who.torso[1], 1.0 - who.torso[2]};
    fill_rect(im, 0.34 * H + dy, 0.5 * H + dy, cx + half - 0.04 * W, cx + half + 0.16 * W, bag);
  }

  const double gap = 0.03 * W, leg = 0.18 * W;
  fill_rect(im, torso_bottom, 0.93 * H + dy, cx - gap - leg, cx - gap, who.legs);
  fill_rect(im, torso_bottom, 0.93 * H + dy, cx + gap, cx + gap + leg, who.legs);

  // Occasional occluder of random colour.
  if (u(rng) < 0.3) {
    const double oy = (0.3 + 0.5 * u(rng)) * H, ox = u(rng) * W;
    fill_rect(im, oy, oy + 0.12 * H, ox - 0.15 * W, ox + 0.15 * W, {u(rng), u(rng), u(rng)});
  }

  const double light = 0.8 + 0.35 * u(rng);
  const Color cast = camera == 2 ? Color{1.08, 0.97, 0.88} : Color{1.0, 1.0, 1.0};
  std::normal_distribution<double> noise(0.0, g.noise);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        double& v = im.at(c, y, x);
        v = v * light * cast[c] + noise(rng);
      }
  quantize(im);
  return im;
}

}  // namespace

std::vector<IdentityPalette> identity_palettes(std::size_t n_ids, const ToyGeometry& g, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<IdentityPalette> out;
  std::size_t attempts = 0;
  while (out.size() < n_ids) {
    if (++attempts > 100000) throw ContractError("cannot place " + std::to_string(n_ids) + " palettes with the colour gap");
    IdentityPalette p{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, static_cast<int>(rng() % 2)};
    if (std::all_of(out.begin(), out.end(), [&](const IdentityPalette& q) { return linf(p, q) > g.color_gap; }))
      out.push_back(p);
  }
  return out;
}

std::vector<SampleRecord> toy_dataset(std::size_t n_ids, std::size_t n_per_id, const ToyGeometry& geometry,
                                      std::uint64_t seed) {
  if (n_ids < 2) throw ContractError("toy dataset needs at least 2 identities");
  if (n_per_id < 1) throw ContractError("toy dataset needs at least 1 image per identity");
  const auto palettes = identity_palettes(n_ids, geometry, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<SampleRecord> out;
  for (std::size_t id = 0; id < n_ids; ++id)
    for (std::size_t k = 0; k < n_per_id; ++k) {
      SampleRecord r;
      r.id = static_cast<int>(id + 1);
      r.camera = k < (n_per_id + 1) / 2 ? 1 : 2;
      r.image = draw_person(palettes[id], r.camera, geometry, rng);
      out.push_back(std::move(r));
    }
  return out;
}

void assign_single_shot_split(std::vector<SampleRecord>& records, std::size_t queries_per_id, std::uint64_t seed) {
  Rng rng(seed);
  std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& slot = by_id[records[i].id];
    (records[i].camera == 1 ? slot.first : slot.second).push_back(i);
  }
  for (auto& [id, cams] : by_id) {
    auto& [cam1, cam2] = cams;
    if (cam1.empty() || cam2.size() < queries_per_id) {
      throw ContractError("identity " + std::to_string(id) + " lacks images for a single-shot split");
    }
    std::shuffle(cam1.begin(), cam1.end(), rng);
    std::shuffle(cam2.begin(), cam2.end(), rng);
    for (std::size_t i : cam1) records[i].split = Split::Train;
    for (std::size_t i : cam2) records[i].split = Split::Train;
    records[cam1[0]].split = Split::Gallery;
    for (std::size_t q = 0; q < queries_per_id; ++q) records[cam2[q]].split = Split::Query;
  }
}

std::vector<SampleRecord> synthesize_mlr(std::vector<SampleRecord> records, const MlrPolicy& policy,
                                         std::uint64_t seed) {
  std::set<int> known;
  for (const auto& r : records) known.insert(r.camera);
  for (int cam : policy.cameras)
    if (!known.count(cam)) throw ContractError("unknown camera " + std::to_string(cam));
  const std::set<int> chosen(policy.cameras.begin(), policy.cameras.end());
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> rate(2, 4);
  for (auto& r : records) {
    if (!chosen.count(r.camera) || r.is_lr()) continue;
    if (policy.queries_only && r.split != Split::Query) continue;
    if (r.image.empty()) throw ContractError("record " + r.path + " has no pixels to decimate");
    r.rate = rate(rng);
    r.image = decimate(r.image, r.rate);
    quantize(r.image);
  }
  return records;
}

std::vector<SampleRecord> select(const std::vector<SampleRecord>& records, Split split) {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const SampleRecord& r) { return r.split == split; });
  return out;
}

namespace {
const char* kManifestHeader = "path,id,camera,split,res_tag,r";
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<SampleRecord>& records) {
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + manifest.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    if (r.path.empty() || r.path.find(',') != std::string::npos) {
      throw DataError("record path '" + r.path + "' cannot be written to a manifest");
    }
    out << r.path << ',' << r.id << ',' << r.camera << ',' << to_string(r.split) << ',' << (r.is_lr() ? "LR" : "HR")
        << ',';
    if (r.is_lr()) out << r.rate;
    out << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + manifest.string());
}

std::vector<SampleRecord> read_manifest(const std::filesystem::path& manifest, bool load_pixels) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  std::vector<SampleRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kManifestHeader) fail("expected header '" + std::string(kManifestHeader) + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 6) fail("expected 6 columns, got " + std::to_string(cols.size()));
    SampleRecord r;
    r.path = cols[0];
    try {
      std::size_t used = 0;
      r.id = std::stoi(cols[1], &used);
      if (used != cols[1].size()) fail("bad id");
      r.camera = std::stoi(cols[2], &used);
      if (used != cols[2].size()) fail("bad camera");
    } catch (const std::logic_error&) {
      fail("non-numeric id or camera");
    }
    try {
      r.split = parse_split(cols[3]);
    } catch (const DataError& e) {
      fail(e.what());
    }
    if (cols[4] == "HR") {
      if (!cols[5].empty()) fail("HR rows must leave r empty");
    } else if (cols[4] == "LR") {
      if (cols[5] != "2" && cols[5] != "3" && cols[5] != "4") fail("LR rate must be 2, 3 or 4");
      r.rate = static_cast<std::size_t>(cols[5][0] - '0');
    } else {
      fail("resolution tag must be HR or LR");
    }
    if (load_pixels) r.image = read_png(base / r.path);
    out.push_back(std::move(r));
  }
  if (line_no == 0) throw DataError("manifest " + manifest.string() + " is empty");
  return out;
}

void write_dataset(const std::filesystem::path& dir, std::vector<SampleRecord>& records) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw DataError("cannot create " + (dir / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    char name[96];
    std::snprintf(name, sizeof name, "images/%04zu_id%03d_c%d_%s.png", i, r.id, r.camera, to_string(r.split).c_str());
    r.path = name;
    write_png(dir / r.path, r.image);
  }
  write_manifest(dir / "manifest.csv", records);
}

}  // namespace pshr::data
