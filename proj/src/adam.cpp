#include "sardd/adam.hpp"

#include <cmath>

#include "sardd/errors.hpp"

namespace sardd {

template <typename T>
void adam_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& state,
               const AdamConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ParameterError("adam: learning rate must be > 0");
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam: no gradient for parameter '" + name + "'");
    require_same_shape(it->second.shape(), p.shape(), "adam gradient '" + name + "'");
    for (T g : it->second.data()) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("adam: non-finite gradient in parameter '" + name + "'");
      }
    }
    for (const auto* moments : {&state.first_moment, &state.second_moment}) {
      auto m = moments->find(name);
      if (m != moments->end()) require_same_shape(m->second.shape(), p.shape(), "adam moment");
    }
  }

  state.step += 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(config.learning_rate / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(config.eps);

  for (auto& [name, p] : params) {
    const Tensor<T>& g = grads.at(name);
    auto& m = state.first_moment.try_emplace(name, p.shape()).first->second;
    auto& v = state.second_moment.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(ParamMap<float>&, const ParamMap<float>&, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(ParamMap<double>&, const ParamMap<double>&, AdamState<double>&,
                                const AdamConfig&);

}  // namespace sardd
