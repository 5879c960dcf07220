#include <algorithm>
#include <cmath>

#include "pshr/ops.hpp"

namespace pshr {

using detail::make_result;
using detail::Node;

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

// Strides of `in` viewed inside `out`, zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis_in = in.size() - 1 - k;
    const std::size_t axis_out = out.size() - 1 - k;
    strides[axis_out] = in[axis_in] == 1 ? 0 : stride;
    stride *= in[axis_in];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = numel(out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

const char* kind_name(Elementwise kind) {
  switch (kind) {
    case Elementwise::Add: return "add";
    case Elementwise::Sub: return "sub";
    case Elementwise::Mul: return "mul";
    case Elementwise::ScalarMul: return "scalar_mul";
    case Elementwise::Relu: return "relu";
    case Elementwise::Sigmoid: return "sigmoid";
    case Elementwise::Abs: return "abs";
  }
  return "?";
}

Tensor binary(Elementwise kind, const Tensor& a, const Tensor& b) {
  const Shape out = broadcast_shape(a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> value(numel(out));

  auto apply = [kind](double x, double y) {
    switch (kind) {
      case Elementwise::Add: return x + y;
      case Elementwise::Sub: return x - y;
      default: return x * y;
    }
  };

  const bool same = a.shape() == b.shape();
  if (same) {
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = apply(av[i], bv[i]);
  } else {
    const auto sa = broadcast_strides(a.shape(), out);
    const auto sb = broadcast_strides(b.shape(), out);
    for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      value[o] = apply(av[ia], bv[ib]);
    });
  }

  return make_result(kind_name(kind), out, std::move(value), {a, b}, [kind, out, same](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const auto& g = self.grad;
    double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
    double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
    const double* av = na.value.data();
    const double* bv = nb.value.data();
    auto step = [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case Elementwise::Add:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] += g[o];
          break;
        case Elementwise::Sub:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] -= g[o];
          break;
        default:
          if (ga) ga[ia] += g[o] * bv[ib];
          if (gb) gb[ib] += g[o] * av[ia];
          break;
      }
    };
    if (same) {
      for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
    } else {
      for_each_broadcast(out, broadcast_strides(na.shape, out), broadcast_strides(nb.shape, out), step);
    }
  });
}

Tensor unary(Elementwise kind, const Tensor& a, double scalar) {
  const auto av = a.data();
  std::vector<double> value(av.size());
  switch (kind) {
    case Elementwise::ScalarMul:
      for (std::size_t i = 0; i < av.size(); ++i) value[i] = av[i] * scalar;
      break;
    case Elementwise::Relu:
      for (std::size_t i = 0; i < av.size(); ++i) value[i] = av[i] > 0.0 ? av[i] : 0.0;
      break;
    case Elementwise::Sigmoid:
      for (std::size_t i = 0; i < av.size(); ++i) {
        // Split by sign so exp never overflows.
        const double x = av[i];
        if (x >= 0.0) {
          value[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
          const double e = std::exp(x);
          value[i] = e / (1.0 + e);
        }
      }
      break;
    case Elementwise::Abs:
      for (std::size_t i = 0; i < av.size(); ++i) value[i] = std::fabs(av[i]);
      break;
    default:
      throw ContractError("not a unary elementwise kind");
  }

  return make_result(kind_name(kind), a.shape(), std::move(value), {a}, [kind, scalar](Node& self) {
    Node& in = *self.inputs[0];
    auto& gi = in.ensure_grad();
    const auto& g = self.grad;
    const auto& x = in.value;
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case Elementwise::ScalarMul: gi[i] += g[i] * scalar; break;
        case Elementwise::Relu: gi[i] += x[i] > 0.0 ? g[i] : 0.0; break;
        case Elementwise::Sigmoid: gi[i] += g[i] * y[i] * (1.0 - y[i]); break;
        case Elementwise::Abs: gi[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0); break;
        default: break;
      }
    }
  });
}

}  // namespace

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b, double scalar) {
  switch (kind) {
    case Elementwise::Add:
    case Elementwise::Sub:
    case Elementwise::Mul:
      if (b == nullptr) throw ContractError(std::string(kind_name(kind)) + " needs two operands");
      return binary(kind, a, *b);
    default:
      return unary(kind, a, scalar);
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Elementwise::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Elementwise::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Elementwise::Mul, a, b); }
Tensor scale(const Tensor& a, double factor) { return unary(Elementwise::ScalarMul, a, factor); }
Tensor relu(const Tensor& a) { return unary(Elementwise::Relu, a, 1.0); }
Tensor sigmoid(const Tensor& a) { return unary(Elementwise::Sigmoid, a, 1.0); }
Tensor abs(const Tensor& a) { return unary(Elementwise::Abs, a, 1.0); }

Tensor add_scalar(const Tensor& a, double offset) {
  const auto av = a.data();
  std::vector<double> value(av.begin(), av.end());
  for (auto& v : value) v += offset;
  return make_result("add_scalar", a.shape(), std::move(value), {a}, [](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

}  // namespace pshr
