#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>

#include "pshr/commands.hpp"
#include "pshr/losses.hpp"
#include "pshr/ops.hpp"
#include "pshr/vdsr_ca.hpp"

namespace pshr::cli {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Distinct upstream weight per element.
Tensor weighted_sum(const Tensor& t) {
  std::vector<double> w(t.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.7 * std::sin(1.0 + static_cast<double>(i));
  return sum(mul(t, Tensor::from(t.shape(), w)));
}

reid::SequenceBundle random_bundle(std::size_t n, std::size_t classes, Rng& rng) {
  reid::SequenceBundle b;
  const std::size_t widths[5] = {6, 4, 4, 3, 17};
  for (std::size_t i = 0; i < 5; ++i) b.seq[i] = uniform({n, widths[i]}, rng);
  b.embedding = uniform({n, 5}, rng);
  b.logits = uniform({n, classes}, rng, -2.0, 2.0);
  return b;
}

std::vector<Tensor> bundle_tensors(const reid::SequenceBundle& b) {
  std::vector<Tensor> out(b.seq.begin(), b.seq.end());
  out.push_back(b.embedding);
  out.push_back(b.logits);
  return out;
}

struct Case {
  std::string op;
  // Draws fresh inputs, returns the loss closure and its probes.
  std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(Rng&)> draw;
  GradCheckOptions options{};
};

template <class F>
Case unary(std::string name, F f, double lo = -1.0, double hi = 1.0) {
  return {name, [f, lo, hi](Rng& rng) {
            auto a = uniform({2, 3, 4, 5}, rng, lo, hi);
            return std::pair{std::function<Tensor()>([a, f] { return weighted_sum(f(a)); }), std::vector{a}};
          }};
}

template <class F>
Case binary(std::string name, F f) {
  return {name, [f](Rng& rng) {
            auto a = uniform({2, 3, 4, 5}, rng);
            auto b = uniform({1, 3, 1, 5}, rng);
            return std::pair{std::function<Tensor()>([a, b, f] { return weighted_sum(f(a, b)); }), std::vector{a, b}};
          }};
}

using Probe = std::pair<std::function<Tensor()>, std::vector<Tensor>>;

std::vector<Case> cases() {
  const std::vector<int> labels{1, 1, 2, 2};
  std::vector<Case> out{
      binary("add", [](auto& a, auto& b) { return add(a, b); }),
      binary("sub", [](auto& a, auto& b) { return sub(a, b); }),
      binary("mul", [](auto& a, auto& b) { return mul(a, b); }),
      unary("scale", [](auto& a) { return scale(a, -1.7); }),
      unary("add_scalar", [](auto& a) { return mul(add_scalar(a, 0.4), a); }),
      unary("relu", [](auto& a) { return relu(a); }),
      unary("sigmoid", [](auto& a) { return sigmoid(a); }, -3.0, 3.0),
      unary("abs", [](auto& a) { return abs(a); }),
      unary("adaptive_pool_avg", [](auto& a) { return adaptive_pool(a, 3, 2, PoolMode::Avg); }),
      unary("adaptive_pool_max", [](auto& a) { return adaptive_pool(a, 3, 2, PoolMode::Max); }),
      unary("resize_bilinear", [](auto& a) { return resize_bilinear(a, 7, 3); }),
      unary("downsample_decimate", [](auto& a) { return downsample_decimate(a, 2); }),
      unary("sum", [](auto& a) { return mul(sum(a, {1, 3}), sum(a, {1, 3})); }),
      unary("mean", [](auto& a) { return mul(mean(a, {0, 2}), mean(a, {0, 2})); }),
      unary("global_avg_pool", [](auto& a) { return global_avg_pool(a); }),
      unary("concat", [](auto& a) { return concat({a, scale(a, 2.0)}, 1); }),
      unary("reshape", [](auto& a) { return log_softmax(reshape(a, {6, 20})); }),
      unary("stack", [](auto& a) { return stack({a, relu(a)}); }),
      unary("slice_rows", [](auto& a) { return slice_rows(a, 1, 2); }),
      unary("gather", [](auto& a) { return gather(a, {0, 7, 7, 119}); }),
      {"matmul",
       [](Rng& rng) {
         auto a = uniform({3, 4}, rng), b = uniform({4, 5}, rng);
         return Probe{[a, b] { return weighted_sum(matmul(a, b)); }, {a, b}};
       }},
      {"linear",
       [](Rng& rng) {
         auto x = uniform({3, 4}, rng), w = uniform({4, 5}, rng), b = uniform({5}, rng);
         return Probe{[x, w, b] { return weighted_sum(linear(x, w, &b)); }, {x, w, b}};
       }},
      {"conv2d",
       [](Rng& rng) {
         auto x = uniform({2, 3, 5, 6}, rng), k = uniform({4, 3, 3, 3}, rng), b = uniform({4}, rng);
         return Probe{[x, k, b] { return weighted_sum(conv2d(x, k, &b, 2, 1)); }, {x, k, b}};
       }},
      {"group_norm",
       [](Rng& rng) {
         auto x = uniform({2, 4, 3, 3}, rng), g = uniform({4}, rng, 0.5, 1.5), b = uniform({4}, rng);
         return Probe{[x, g, b] { return weighted_sum(group_norm(x, 2, g, b)); }, {x, g, b}};
       }},
      {"pairwise_distance",
       [](Rng& rng) {
         auto x = uniform({4, 3}, rng);
         return Probe{[x] { return weighted_sum(pairwise_distance(x)); }, {x}};
       }},
      {"log_softmax",
       [](Rng& rng) {
         auto x = uniform({3, 5}, rng, -3.0, 3.0);
         return Probe{[x] { return weighted_sum(log_softmax(x)); }, {x}};
       }},
      {"head_map",
       [](Rng& rng) {
         auto f = uniform({2, 3, 5, 4}, rng);
         reid::HeadConfig h;
         h.amp_weights = {0.7, 1.3, 1.0, 1.0};
         return Probe{[f, h] { return add(weighted_sum(head_map(f, 0, h)), weighted_sum(head_map(f, 1, h))); }, {f}};
       }},
      {"ca_block",
       [](Rng& rng) {
         auto block = sr::CABlock::create(8, 4, rng);
         auto x = uniform({2, 8, 3, 3}, rng);
         return Probe{[block, x] { return weighted_sum(block.forward(x)); }, {x, block.down, block.up}};
       }},
      {"vdsr_ca",
       [](Rng& rng) {
         auto net = std::make_shared<sr::VdsrCaNet>(sr::VdsrCaConfig{.depth = 3, .width = 8, .reduction = 4}, rng);
         // The zero reconstruction tail would hide everything upstream of it.
         for (auto& p : net->parameters())
           if (p.name.rfind("conv2", 0) == 0)
             for (auto& v : p.tensor.mutable_data()) v = std::normal_distribution<double>(0.0, 0.3)(rng);
         auto x = uniform({1, 3, 5, 4}, rng, 0.0, 1.0);
         std::vector<Tensor> probes{x};
         for (const auto& p : net->parameters()) probes.push_back(p.tensor);
         return Probe{[net, x] { return weighted_sum(net->forward(x)); }, probes};
       }},
      {"sr_loss",
       [](Rng& rng) {
         auto r = uniform({2, 3, 4, 4}, rng), t = uniform({2, 3, 4, 4}, rng);
         return Probe{[r, t] { return sr::sr_loss(r, t); }, {r, t}};
       }},
      {"triplet_bh",
       [labels](Rng& rng) {
         auto b = random_bundle(4, 3, rng);
         return Probe{[b, labels] { return loss::triplet_bh(b, labels, 0.3); }, bundle_tensors(b)};
       }},
      {"ce_label_smooth",
       [labels](Rng& rng) {
         auto x = uniform({4, 3}, rng, -2.0, 2.0);
         return Probe{[x, labels] { return loss::ce_label_smooth(x, labels, 0.1); }, {x}};
       }},
      {"id_loss",
       [labels](Rng& rng) {
         auto b = random_bundle(4, 3, rng);
         return Probe{[b, labels] { return loss::id_loss(b, labels, {}); }, bundle_tensors(b)};
       }},
      {"ps_loss",
       [](Rng& rng) {
         auto hr = random_bundle(4, 3, rng), lr = random_bundle(4, 3, rng);
         auto probes = bundle_tensors(hr);
         for (auto& t : bundle_tensors(lr)) probes.push_back(t);
         return Probe{[hr, lr] { return loss::ps_loss(hr, lr, {0, 3, 4, 5}); }, probes};
       }},
      {"total_loss",
       [](Rng& rng) {
         auto id = uniform({1}, rng), sr = uniform({1}, rng), ps = uniform({1}, rng);
         return Probe{[id, sr, ps] { return loss::total_loss(id, sr, ps, {}); }, {id, sr, ps}};
       }},
  };
  return out;
}

}  // namespace

std::vector<GradCheckRow> gradcheck_suite(std::uint64_t seed, std::size_t probes) {
  std::vector<GradCheckRow> rows;
  Rng rng(seed);
  for (const auto& c : cases()) {
    GradCheckRow row{c.op, probes, 0.0, 0, 0, true};
    for (std::size_t p = 0; p < probes; ++p) {
      auto [fn, inputs] = c.draw(rng);
      const auto report = grad_check(c.op, fn, inputs, c.options);
      row.max_rel_error = std::max(row.max_rel_error, report.max_rel_error);
      row.checked += report.checked;
      row.skipped += report.skipped;
      row.pass = row.pass && report.pass;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string gradcheck_table(const std::vector<GradCheckRow>& rows) {
  std::string out = "op                     probes  checked  skipped  max_rel_error  result\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %6zu  %7zu  %7zu  %13.3e  %s\n", r.op.c_str(), r.probes, r.checked,
                  r.skipped, r.max_rel_error, r.pass ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace pshr::cli
