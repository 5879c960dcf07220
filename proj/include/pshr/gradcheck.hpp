#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pshr/tensor.hpp"

namespace pshr {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
  // 0 checks every element; otherwise an evenly strided subset per probe.
  std::size_t max_elements_per_probe = 0;
  // An element that fails only because a relu/max kink lies inside the
  // difference stencil is skipped; at most this fraction may be skipped.
  double max_skipped_fraction = 0.1;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  bool pass = false;
  Shape probe_shape;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of `loss` with respect to each probe
/// against central finite differences. `loss` must rebuild its graph from
/// the current probe values on every call and return a one-element tensor.
GradCheckReport grad_check(const std::string& op, const std::function<Tensor()>& loss, std::vector<Tensor> probes,
                           const GradCheckOptions& options = {});

}  // namespace pshr
