#include <Eigen/Core>

#include "pshr/ops.hpp"

namespace pshr {

using detail::make_result;
using detail::Node;

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using Eigen::Index;

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t stride, pad;
  std::size_t oh, ow;

  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    const double* plane = x + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((ci * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t y = 0; y < g.oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
          double* dst = row + y * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + iy * g.w;
          for (std::size_t x2 = 0; x2 < g.ow; ++x2) {
            const long ix = static_cast<long>(x2 * g.stride + kj) - static_cast<long>(g.pad);
            dst[x2] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    double* plane = x + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((ci * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t y = 0; y < g.oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const double* src = row + y * g.ow;
          double* dst = plane + iy * g.w;
          for (std::size_t x2 = 0; x2 < g.ow; ++x2) {
            const long ix = static_cast<long>(x2 * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[x2];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> value(m * n);
  MapR(value.data(), m, n).noalias() = CMapR(a.data().data(), m, k) * CMapR(b.data().data(), k, n);

  return make_result("matmul", {m, n}, std::move(value), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    CMapR g(self.grad.data(), m, n);
    if (na.requires_grad) {
      MapR(na.ensure_grad().data(), m, k).noalias() += g * CMapR(nb.value.data(), k, n).transpose();
    }
    if (nb.requires_grad) {
      MapR(nb.ensure_grad().data(), k, n).noalias() += CMapR(na.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  Tensor y = matmul(x, weight);
  return bias ? add(y, *bias) : y;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d expects NCHW input and OIHW kernel, got " + to_string(input.shape()) +
                     " and " + to_string(kernel.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be >= 1");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.c) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(input.shape()) + ", kernel " +
                     to_string(kernel.shape()));
  }
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    throw ShapeError("conv2d output size is not positive for input " + to_string(input.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.o)) {
    throw ShapeError("conv2d bias must have shape [" + std::to_string(g.o) + "]");
  }

  const std::size_t in_stride = g.c * g.h * g.w;
  const std::size_t out_stride = g.o * g.oh * g.ow;
  std::vector<double> value(g.n * out_stride);
  std::vector<double> cols(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
  CMapR k(kernel.data().data(), g.o, g.col_rows());
  for (std::size_t i = 0; i < g.n; ++i) {
    const double* x = input.data().data() + i * in_stride;
    const double* colp = x;
    if (!g.pointwise()) {
      im2col(x, g, cols.data());
      colp = cols.data();
    }
    MapR out(value.data() + i * out_stride, g.o, g.col_cols());
    out.noalias() = k * CMapR(colp, g.col_rows(), g.col_cols());
    if (bias) {
      const auto bv = bias->data();
      for (std::size_t oc = 0; oc < g.o; ++oc) out.row(oc).array() += bv[oc];
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return make_result("conv2d", {g.n, g.o, g.oh, g.ow}, std::move(value), std::move(inputs), [g](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nk = *self.inputs[1];
    Node* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const std::size_t in_stride = g.c * g.h * g.w;
    const std::size_t out_stride = g.o * g.oh * g.ow;
    std::vector<double> cols(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
    CMapR k(nk.value.data(), g.o, g.col_rows());
    double* gk = nk.requires_grad ? nk.ensure_grad().data() : nullptr;
    double* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
    double* gb = (nb && nb->requires_grad) ? nb->ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < g.n; ++i) {
      CMapR gout(self.grad.data() + i * out_stride, g.o, g.col_cols());
      if (gb) {
        for (std::size_t oc = 0; oc < g.o; ++oc) gb[oc] += gout.row(oc).sum();
      }
      if (gk) {
        const double* x = nx.value.data() + i * in_stride;
        const double* colp = x;
        if (!g.pointwise()) {
          im2col(x, g, cols.data());
          colp = cols.data();
        }
        MapR(gk, g.o, g.col_rows()).noalias() += gout * CMapR(colp, g.col_rows(), g.col_cols()).transpose();
      }
      if (gx) {
        if (g.pointwise()) {
          MapR(gx + i * in_stride, g.c, g.h * g.w).noalias() += k.transpose() * gout;
        } else {
          MapR(cols.data(), g.col_rows(), g.col_cols()).noalias() = k.transpose() * gout;
          col2im_add(cols.data(), g, gx + i * in_stride);
        }
      }
    }
  });
}

}  // namespace pshr
