#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pshr/tensor.hpp"

namespace pshr {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

/// Zero-mean normal with std = sqrt(2 / fan_in); the tensor requires grad.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng);
Tensor zeros_param(Shape shape);
Tensor ones_param(Shape shape);

/// Total element count across a parameter list.
std::size_t parameter_count(const ParameterList& params);
void zero_grads(ParameterList& params);
void set_trainable(ParameterList& params, bool trainable);

/// Copies values from `source` into same-named entries of `target`.
/// Throws ContractError on a missing name or a shape mismatch.
void copy_values(const ParameterList& source, ParameterList& target);

}  // namespace pshr
