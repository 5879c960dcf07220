#include <algorithm>
#include <cmath>

#include "pshr/ops.hpp"

namespace pshr {

using detail::make_result;
using detail::Node;

namespace {

void require_nchw(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + " expects an NCHW tensor, got " + to_string(t.shape()));
}

struct Bin {
  std::size_t begin, end;
};

std::vector<Bin> adaptive_bins(std::size_t in, std::size_t out) {
  std::vector<Bin> bins(out);
  for (std::size_t i = 0; i < out; ++i) {
    bins[i].begin = (i * in) / out;
    bins[i].end = ((i + 1) * in + out - 1) / out;
  }
  return bins;
}

struct LerpTap {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    taps[i] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor adaptive_pool(const Tensor& input, std::size_t out_h, std::size_t out_w, PoolMode mode) {
  require_nchw(input, "adaptive_pool");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h == 0 || out_w == 0) throw ShapeError("adaptive_pool output extents must be positive");
  if (out_h > h || out_w > w) {
    throw ShapeError("adaptive_pool target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " exceeds input " + to_string(input.shape()));
  }
  const auto rows = adaptive_bins(h, out_h);
  const auto cols = adaptive_bins(w, out_w);
  const std::size_t planes = n * c;
  std::vector<double> value(planes * out_h * out_w);
  std::vector<std::size_t> argmax(mode == PoolMode::Max ? value.size() : 0);
  const auto x = input.data();

  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = x.data() + p * h * w;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t o = (p * out_h + i) * out_w + j;
        if (mode == PoolMode::Avg) {
          double acc = 0.0;
          for (std::size_t y = rows[i].begin; y < rows[i].end; ++y)
            for (std::size_t xx = cols[j].begin; xx < cols[j].end; ++xx) acc += plane[y * w + xx];
          value[o] = acc / static_cast<double>((rows[i].end - rows[i].begin) * (cols[j].end - cols[j].begin));
        } else {
          std::size_t best = rows[i].begin * w + cols[j].begin;
          for (std::size_t y = rows[i].begin; y < rows[i].end; ++y)
            for (std::size_t xx = cols[j].begin; xx < cols[j].end; ++xx)
              if (plane[y * w + xx] > plane[best]) best = y * w + xx;
          value[o] = plane[best];
          argmax[o] = p * h * w + best;
        }
      }
    }
  }

  const char* name = mode == PoolMode::Avg ? "adaptive_avg_pool" : "adaptive_max_pool";
  return make_result(name, {n, c, out_h, out_w}, std::move(value), {input},
                     [mode, rows, cols, planes, h, w, out_h, out_w, argmax = std::move(argmax)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       const auto& g = self.grad;
                       if (mode == PoolMode::Max) {
                         for (std::size_t o = 0; o < g.size(); ++o) gi[argmax[o]] += g[o];
                         return;
                       }
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* plane = gi.data() + p * h * w;
                         for (std::size_t i = 0; i < out_h; ++i) {
                           for (std::size_t j = 0; j < out_w; ++j) {
                             const double share =
                                 g[(p * out_h + i) * out_w + j] /
                                 static_cast<double>((rows[i].end - rows[i].begin) * (cols[j].end - cols[j].begin));
                             for (std::size_t y = rows[i].begin; y < rows[i].end; ++y)
                               for (std::size_t xx = cols[j].begin; xx < cols[j].end; ++xx) plane[y * w + xx] += share;
                           }
                         }
                       }
                     });
}

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_nchw(input, "resize_bilinear");
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear target extents must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ty = lerp_taps(h, out_h);
  const auto tx = lerp_taps(w, out_w);
  const std::size_t planes = n * c;
  std::vector<double> value(planes * out_h * out_w);
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * h * w;
    double* dst = value.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const auto& a = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto& b = tx[j];
        dst[i * out_w + j] = a.w_lo * (b.w_lo * src[a.lo * w + b.lo] + b.w_hi * src[a.lo * w + b.hi]) +
                             a.w_hi * (b.w_lo * src[a.hi * w + b.lo] + b.w_hi * src[a.hi * w + b.hi]);
      }
    }
  }
  return make_result("resize_bilinear", {n, c, out_h, out_w}, std::move(value), {input},
                     [ty, tx, planes, h, w, out_h, out_w](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* dst = gi.data() + p * h * w;
                         const double* g = self.grad.data() + p * out_h * out_w;
                         for (std::size_t i = 0; i < out_h; ++i) {
                           const auto& a = ty[i];
                           for (std::size_t j = 0; j < out_w; ++j) {
                             const auto& b = tx[j];
                             const double gv = g[i * out_w + j];
                             dst[a.lo * w + b.lo] += gv * a.w_lo * b.w_lo;
                             dst[a.lo * w + b.hi] += gv * a.w_lo * b.w_hi;
                             dst[a.hi * w + b.lo] += gv * a.w_hi * b.w_lo;
                             dst[a.hi * w + b.hi] += gv * a.w_hi * b.w_hi;
                           }
                         }
                       }
                     });
}

Tensor downsample_decimate(const Tensor& input, std::size_t rate) {
  require_nchw(input, "downsample_decimate");
  if (rate < 2 || rate > 4) throw ContractError("decimation rate must be 2, 3 or 4, got " + std::to_string(rate));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / rate, ow = w / rate;
  if (oh == 0 || ow == 0) throw ShapeError("input " + to_string(input.shape()) + " too small to decimate");
  const std::size_t planes = n * c;
  const double inv = 1.0 / static_cast<double>(rate * rate);
  std::vector<double> value(planes * oh * ow);
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < rate; ++dy)
          for (std::size_t dx = 0; dx < rate; ++dx) acc += src[(i * rate + dy) * w + j * rate + dx];
        value[(p * oh + i) * ow + j] = acc * inv;
      }
  }
  return make_result("downsample_decimate", {n, c, oh, ow}, std::move(value), {input},
                     [rate, planes, h, w, oh, ow, inv](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* dst = gi.data() + p * h * w;
                         for (std::size_t i = 0; i < oh; ++i)
                           for (std::size_t j = 0; j < ow; ++j) {
                             const double share = self.grad[(p * oh + i) * ow + j] * inv;
                             for (std::size_t dy = 0; dy < rate; ++dy)
                               for (std::size_t dx = 0; dx < rate; ++dx) dst[(i * rate + dy) * w + j * rate + dx] += share;
                           }
                       }
                     });
}

}  // namespace pshr
