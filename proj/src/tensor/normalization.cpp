#include <cmath>

#include "pshr/ops.hpp"

namespace pshr {

using detail::make_result;
using detail::Node;

Tensor group_norm(const Tensor& input, std::size_t groups, const Tensor& gamma, const Tensor& beta, double eps) {
  if (input.rank() != 4) throw ShapeError("group_norm expects NCHW, got " + to_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) +
                     " groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("group_norm affine parameters must be [" + std::to_string(c) + "]");
  }
  const std::size_t per = c / groups, m = per * hw;
  const auto x = input.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<double> xhat(x.size()), rstd(n * groups), value(x.size());
  for (std::size_t s = 0; s < n * groups; ++s) {
    const double* src = x.data() + s * m;
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += src[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(m);
    rstd[s] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < m; ++i) xhat[s * m + i] = (src[i] - mean) * rstd[s];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = (i / hw) % c;
    value[i] = g[ch] * xhat[i] + b[ch];
  }
  return make_result("group_norm", input.shape(), std::move(value), {input, gamma, beta},
                     [n, c, hw, groups, m, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& ng = *self.inputs[1];
                       Node& nb = *self.inputs[2];
                       const auto& dy = self.grad;
                       if (ng.requires_grad || nb.requires_grad) {
                         for (std::size_t i = 0; i < dy.size(); ++i) {
                           const std::size_t ch = (i / hw) % c;
                           if (ng.requires_grad) ng.ensure_grad()[ch] += dy[i] * xhat[i];
                           if (nb.requires_grad) nb.ensure_grad()[ch] += dy[i];
                         }
                       }
                       if (!nx.requires_grad) return;
                       auto& gx = nx.ensure_grad();
                       const auto& gamma_v = ng.value;
                       const double inv_m = 1.0 / static_cast<double>(m);
                       for (std::size_t s = 0; s < n * groups; ++s) {
                         double sum_d = 0.0, sum_dx = 0.0;
                         for (std::size_t i = s * m; i < (s + 1) * m; ++i) {
                           const double d = dy[i] * gamma_v[(i / hw) % c];
                           sum_d += d;
                           sum_dx += d * xhat[i];
                         }
                         for (std::size_t i = s * m; i < (s + 1) * m; ++i) {
                           const double d = dy[i] * gamma_v[(i / hw) % c];
                           gx[i] += rstd[s] * (d - inv_m * sum_d - xhat[i] * inv_m * sum_dx);
                         }
                       }
                     });
}

}  // namespace pshr
