#include <algorithm>
#include <cmath>
#include <numeric>

#include "pshr/ops.hpp"

namespace pshr {

using detail::make_result;
using detail::Node;

namespace {

// Maps each flat input index to its flat index in the reduced output.
std::vector<std::size_t> reduction_map(const Shape& in, const std::vector<bool>& reduced, Shape& out_shape) {
  out_shape.clear();
  for (std::size_t d = 0; d < in.size(); ++d)
    if (!reduced[d]) out_shape.push_back(in[d]);
  if (out_shape.empty()) out_shape.push_back(1);

  std::vector<std::size_t> out_strides(in.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    if (!reduced[d]) {
      out_strides[d] = stride;
      stride *= in[d];
    }
  }
  const std::size_t total = numel(in);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t o = 0;
  for (std::size_t i = 0; i < total; ++i) {
    map[i] = o;
    for (std::size_t d = in.size(); d-- > 0;) {
      ++idx[d];
      o += out_strides[d];
      if (idx[d] < in[d]) break;
      o -= out_strides[d] * in[d];
      idx[d] = 0;
    }
  }
  return map;
}

Tensor reduce_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool average, const char* name) {
  std::vector<bool> reduced(a.rank(), false);
  for (auto ax : axes) {
    if (ax >= a.rank() || reduced[ax]) {
      throw ShapeError(std::string(name) + ": invalid axis " + std::to_string(ax) + " for " + to_string(a.shape()));
    }
    reduced[ax] = true;
  }
  Shape out_shape;
  auto map = reduction_map(a.shape(), reduced, out_shape);
  std::size_t count = 1;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (reduced[d]) count *= a.dim(d);
  const double factor = average ? 1.0 / static_cast<double>(count) : 1.0;

  // Neumaier compensated summation.
  std::vector<double> value(numel(out_shape), 0.0), carry(value.size(), 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double& s = value[map[i]];
    const double t = s + x[i];
    carry[map[i]] += std::abs(s) >= std::abs(x[i]) ? (s - t) + x[i] : (x[i] - t) + s;
    s = t;
  }
  for (std::size_t o = 0; o < value.size(); ++o) value[o] += carry[o];
  if (average)
    for (auto& v : value) v *= factor;

  return make_result(name, out_shape, std::move(value), {a}, [map = std::move(map), factor](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[map[i]] * factor;
  });
}

std::vector<std::size_t> all_axes(const Tensor& a) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_axes(a, all_axes(a), false, "sum"); }
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce_axes(a, axes, false, "sum"); }
Tensor mean(const Tensor& a) { return reduce_axes(a, all_axes(a), true, "mean"); }
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce_axes(a, axes, true, "mean"); }

Tensor global_avg_pool(const Tensor& a) {
  if (a.rank() != 4) throw ShapeError("global_avg_pool expects NCHW, got " + to_string(a.shape()));
  return reshape(mean(a, {2, 3}), {a.dim(0), a.dim(1), 1, 1});
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape) + " changes element count");
  }
  for (auto e : shape)
    if (e == 0) throw ShapeError("reshape target has a zero extent");
  const auto x = a.data();
  return make_result("reshape", std::move(shape), std::vector<double>(x.begin(), x.end()), {a}, [](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + to_string(first));
  Shape out = first;
  out[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw ShapeError("concat extents differ off-axis: " + to_string(first) + " vs " + to_string(p.shape()));
      }
    }
    out[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = out[axis] * inner;
  std::vector<double> value(numel(out));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto x = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * widths[k], widths[k], value.data() + o * row + offset);
    offset += widths[k];
  }
  return make_result("concat", out, std::move(value), parts, [widths, outer, row](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& in = *self.inputs[k];
      if (in.requires_grad) {
        auto& gi = in.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t e = 0; e < widths[k]; ++e) gi[o * widths[k] + e] += self.grad[o * row + offset + e];
      }
      offset += widths[k];
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) throw ShapeError("stack requires equal shapes");
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, 0);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     to_string(a.shape()));
  }
  const std::size_t inner = a.numel() / a.dim(0);
  Shape out = a.shape();
  out[0] = end - begin;
  const auto x = a.data();
  std::vector<double> value(x.begin() + begin * inner, x.begin() + end * inner);
  return make_result("slice_rows", out, std::move(value), {a}, [offset = begin * inner](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[offset + i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& flat_indices) {
  if (flat_indices.empty()) throw ShapeError("gather needs at least one index");
  const auto x = a.data();
  std::vector<double> value(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= x.size()) throw ShapeError("gather index out of range");
    value[i] = x[flat_indices[i]];
  }
  return make_result("gather", {flat_indices.size()}, std::move(value), {a}, [flat_indices](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < flat_indices.size(); ++i) gi[flat_indices[i]] += self.grad[i];
  });
}

Tensor pairwise_distance(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("pairwise_distance expects [N,D], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto v = x.data();
  std::vector<double> value(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = v[i * d + k] - v[j * d + k];
        acc += diff * diff;
      }
      value[i * n + j] = value[j * n + i] = std::sqrt(acc);
    }
  }
  return make_result("pairwise_distance", {n, n}, std::move(value), {x}, [n, d](Node& self) {
    Node& in = *self.inputs[0];
    auto& gi = in.ensure_grad();
    const auto& v = in.value;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dist = self.value[i * n + j];
        const double g = self.grad[i * n + j];
        if (dist == 0.0 || g == 0.0) continue;
        const double f = g / dist;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = v[i * d + k] - v[j * d + k];
          gi[i * d + k] += f * diff;
          gi[j * d + k] -= f * diff;
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("log_softmax expects [N,M], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), m = x.dim(1);
  const auto v = x.data();
  std::vector<double> value(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * m;
    const double peak = *std::max_element(row, row + m);
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += std::exp(row[k] - peak);
    const double lse = peak + std::log(acc);
    for (std::size_t k = 0; k < m; ++k) value[i * m + k] = row[k] - lse;
  }
  return make_result("log_softmax", {n, m}, std::move(value), {x}, [n, m](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t k = 0; k < m; ++k) gsum += self.grad[i * m + k];
      for (std::size_t k = 0; k < m; ++k)
        gi[i * m + k] += self.grad[i * m + k] - std::exp(self.value[i * m + k]) * gsum;
    }
  });
}

}  // namespace pshr
