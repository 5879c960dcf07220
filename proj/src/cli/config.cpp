#include "pshr/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pshr::cli {

namespace {

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

using Section = std::vector<std::pair<std::string, Binding>>;
using Schema = std::vector<std::pair<std::string, Section>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected a non-negative integer");
  return v;
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected a number");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("expected true or false");
}

std::string show(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

template <class T, std::size_t N, class F>
void parse_array(const std::string& s, std::array<T, N>& out, F convert) {
  const auto items = split_list(s);
  if (items.size() != N) throw std::invalid_argument("expected " + std::to_string(N) + " comma-separated values");
  for (std::size_t i = 0; i < N; ++i) out[i] = convert(items[i]);
}

template <class T, std::size_t N>
std::string show_array(const std::array<T, N>& a) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) out += (i ? "," : "") + show(a[i]);
  return out;
}

Binding size_key(std::size_t& v) {
  return {[&v](const std::string& s) { v = to_size(s); }, [&v] { return show(v); }};
}
Binding double_key(double& v) {
  return {[&v](const std::string& s) { v = to_double(s); }, [&v] { return show(v); }};
}
Binding bool_key(bool& v) {
  return {[&v](const std::string& s) { v = to_bool(s); }, [&v] { return show(v); }};
}

const std::vector<std::string> kElementNames{"seq1", "seq2", "seq3", "seq4", "seq5", "logits"};

Schema schema(RunConfig& c) {
  auto& b = c.model.backbone;
  auto& h = c.model.head;
  auto& s = c.model.sr;
  auto& l = c.train.losses;
  auto& t = c.train;
  auto& d = c.data;
  return {
      {"backbone",
       {{"widths", {[&b](const std::string& v) { parse_array(v, b.widths, to_size); }, [&b] { return show_array(b.widths); }}},
        {"blocks_per_stage", size_key(b.blocks_per_stage)},
        {"stem_stride", size_key(b.stem_stride)},
        {"input_height", size_key(b.input_h)},
        {"input_width", size_key(b.input_w)}}},
      {"head",
       {{"pool_sizes",
         {[&h](const std::string& v) { parse_array(v, h.pool_sizes, to_size); }, [&h] { return show_array(h.pool_sizes); }}},
        {"amp_weights",
         {[&h](const std::string& v) { parse_array(v, h.amp_weights, to_double); },
          [&h] { return show_array(h.amp_weights); }}},
        {"embedding_dim", size_key(h.embedding_dim)},
        {"num_classes", size_key(h.num_classes)},
        {"pool_size_rule",
         {[&h](const std::string& v) {
            if (v == "table") h.rule = reid::PoolSizeRule::Table;
            else if (v == "branch_index") h.rule = reid::PoolSizeRule::BranchIndex;
            else throw std::invalid_argument("expected table or branch_index");
          },
          [&h] { return std::string(h.rule == reid::PoolSizeRule::Table ? "table" : "branch_index"); }}}}},
      {"sr",
       {{"depth", size_key(s.depth)},
        {"width", size_key(s.width)},
        {"reduction", size_key(s.reduction)},
        {"global_residual", bool_key(s.global_residual)},
        {"upscale",
         {[&s](const std::string& v) {
            if (v == "bilinear") s.upscale = sr::Upscale::Bilinear;
            else if (v == "nearest") s.upscale = sr::Upscale::Nearest;
            else throw std::invalid_argument("expected bilinear or nearest");
          },
          [&s] { return std::string(s.upscale == sr::Upscale::Bilinear ? "bilinear" : "nearest"); }}}}},
      {"losses",
       {{"margin", double_key(l.margin)},
        {"smoothing", double_key(l.smoothing)},
        {"ce_weight", double_key(l.ce)},
        {"bh_weight", double_key(l.bh)},
        {"sr_weight", double_key(l.sr)},
        {"ps_weight", double_key(l.ps)},
        {"ps_combination",
         {[&l](const std::string& v) {
            l.ps_combination.clear();
            for (const auto& item : split_list(v)) {
              auto it = std::find(kElementNames.begin(), kElementNames.end(), item);
              if (it == kElementNames.end()) throw std::invalid_argument("unknown bundle element '" + item + "'");
              l.ps_combination.push_back(static_cast<std::size_t>(it - kElementNames.begin()));
            }
          },
          [&l] {
            std::string out;
            for (std::size_t i : l.ps_combination) out += (out.empty() ? "" : ",") + kElementNames.at(i);
            return out;
          }}},
        {"mean_normalize", bool_key(l.mean_normalize)},
        {"ps_element_mean", bool_key(l.ps_element_mean)}}},
      {"train",
       {{"phase1_epochs", size_key(t.phase1_epochs)},
        {"phase2_epochs", size_key(t.phase2_epochs)},
        {"identities", size_key(t.identities)},
        {"instances", size_key(t.instances)},
        {"reid_lr", double_key(t.reid_optimizer.lr)},
        {"sr_lr", double_key(t.sr_optimizer.lr)},
        {"momentum",
         {[&t](const std::string& v) { t.reid_optimizer.momentum = t.sr_optimizer.momentum = to_double(v); },
          [&t] { return show(t.reid_optimizer.momentum); }}},
        {"weight_decay",
         {[&t](const std::string& v) { t.reid_optimizer.weight_decay = t.sr_optimizer.weight_decay = to_double(v); },
          [&t] { return show(t.reid_optimizer.weight_decay); }}},
        {"lr_decay_factor",
         {[&t](const std::string& v) { t.reid_optimizer.decay_factor = t.sr_optimizer.decay_factor = to_double(v); },
          [&t] { return show(t.reid_optimizer.decay_factor); }}},
        {"lr_decay_every",
         {[&t](const std::string& v) { t.reid_optimizer.decay_every = t.sr_optimizer.decay_every = to_size(v); },
          [&t] { return show(t.reid_optimizer.decay_every); }}},
        {"seed",
         {[&t](const std::string& v) { t.seed = to_size(v); }, [&t] { return std::to_string(t.seed); }}},
        {"checkpoint_every", size_key(t.checkpoint_every)},
        {"freeze_hr", bool_key(t.freeze_hr)},
        {"literal_route", bool_key(t.literal_route)},
        {"augment", bool_key(t.augment)}}},
      {"data",
       {{"root", {[&d](const std::string& v) { d.root = v; }, [&d] { return d.root; }}},
        {"identities", size_key(d.identities)},
        {"images_per_identity", size_key(d.images_per_identity)},
        {"height", size_key(d.geometry.height)},
        {"width", size_key(d.geometry.width)},
        {"color_gap", double_key(d.geometry.color_gap)},
        {"noise", double_key(d.geometry.noise)},
        {"queries_per_identity", size_key(d.queries_per_identity)},
        {"lr_cameras",
         {[&d](const std::string& v) {
            d.mlr.cameras.clear();
            if (v.empty()) return;
            for (const auto& item : split_list(v)) d.mlr.cameras.push_back(static_cast<int>(to_size(item)));
          },
          [&d] {
            std::string out;
            for (int cam : d.mlr.cameras) out += (out.empty() ? "" : ",") + std::to_string(cam);
            return out;
          }}},
        {"lr_queries_only", bool_key(d.mlr.queries_only)}}},
  };
}

}  // namespace

void RunConfig::validate() const {
  model.backbone.validate();
  train.validate();
  if (data.identities < 2) throw ContractError("the toy dataset needs at least two identities");
  if (data.geometry.height != model.backbone.input_h || data.geometry.width != model.backbone.input_w) {
    throw ContractError("toy image size " + std::to_string(data.geometry.height) + "x" +
                        std::to_string(data.geometry.width) + " differs from the backbone input " +
                        std::to_string(model.backbone.input_h) + "x" + std::to_string(model.backbone.input_w));
  }
  if (data.queries_per_identity + 2 > data.images_per_identity) {
    throw ContractError("each identity needs a gallery image, its queries and at least one training image");
  }
  if (model.head.num_classes != data.identities) {
    throw ContractError("head.num_classes (" + std::to_string(model.head.num_classes) +
                        ") must equal data.identities (" + std::to_string(data.identities) + ")");
  }
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  const Schema table = schema(config);
  const Section* section = nullptr;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line

  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& message) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + message);
  };
  std::string section_name;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section_name = trim(line.substr(1, line.size() - 2));
      section = nullptr;
      for (const auto& [name, keys] : table)
        if (name == section_name) section = &keys;
      if (!section) fail("unknown section [" + section_name + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
    if (!section) fail("key outside of any section");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const Binding* binding = nullptr;
    for (const auto& [name, b] : *section)
      if (name == key) binding = &b;
    if (!binding) fail("unknown key '" + key + "' in [" + section_name + "]");
    const std::string full = section_name + "." + key;
    if (auto it = seen.find(full); it != seen.end()) {
      fail("duplicate key '" + full + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen[full] = line_no;
    try {
      binding->set(value);
    } catch (const std::invalid_argument& e) {
      fail(full + " = '" + value + "': " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

std::string render_config(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  for (const auto& [name, keys] : schema(copy)) {
    out += (out.empty() ? "[" : "\n[") + name + "]\n";
    for (const auto& [key, binding] : keys) out += key + " = " + binding.get() + "\n";
  }
  return out;
}

}  // namespace pshr::cli
