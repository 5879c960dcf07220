#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pshr/tensor.hpp"

namespace pshr {

enum class Elementwise { Add, Sub, Mul, ScalarMul, Relu, Sigmoid, Abs };

/// Binary kinds broadcast numpy-style (right-aligned, extent 1 stretches).
/// ScalarMul reads its factor from `scalar`; unary kinds ignore `b`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b = nullptr, double scalar = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N,in] * weight[in,out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias);

/// Cross-correlation, zero padding. input NCHW, kernel OIHW, bias [O].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, std::size_t stride,
              std::size_t padding);

/// Per-sample normalization over groups of C/groups channels, then a
/// per-channel affine map. gamma, beta: [C].
Tensor group_norm(const Tensor& input, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

enum class PoolMode { Avg, Max };
/// Bin i covers [floor(i*H/out), ceil((i+1)*H/out)).
Tensor adaptive_pool(const Tensor& input, std::size_t out_h, std::size_t out_w, PoolMode mode);

/// Half-pixel (align_corners=false) bilinear resampling of an NCHW tensor.
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
/// r x r box-filter average; ragged trailing rows/columns are dropped.
Tensor downsample_decimate(const Tensor& input, std::size_t rate);

/// Reductions drop the reduced axes; reducing every axis yields shape [1].
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes);
/// NCHW -> NC11 spatial mean.
Tensor global_avg_pool(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
/// Rows [begin, end) of the leading axis.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

/// Picks flat elements; result is 1-D of length indices.size().
Tensor gather(const Tensor& a, const std::vector<std::size_t>& flat_indices);
/// Euclidean distances between rows of x[N,D] -> [N,N]. The subgradient at
/// zero distance is taken as zero.
Tensor pairwise_distance(const Tensor& x);
/// Row-wise log-softmax of x[N,M], max-shifted.
Tensor log_softmax(const Tensor& x);

}  // namespace pshr
