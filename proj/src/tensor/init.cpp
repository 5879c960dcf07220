#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "pshr/parameters.hpp"

namespace pshr {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void set_trainable(ParameterList& params, bool trainable) {
  for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

void copy_values(const ParameterList& source, ParameterList& target) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& p : source) by_name.emplace(p.name, &p.tensor);
  for (auto& p : target) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ContractError("missing parameter '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw ContractError("parameter '" + p.name + "' has shape " + to_string(it->second->shape()) + ", expected " +
                          to_string(p.tensor.shape()));
    }
    const auto src = it->second->data();
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace pshr
