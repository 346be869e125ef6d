#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sardd/tensor.hpp"

namespace sardd {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  ParamMap<T> first_moment;
  ParamMap<T> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected adaptive-moment update of every parameter in `params`.
// Moments are created lazily with the parameter's shape. The update is
// all-or-nothing: a missing, misshapen, or non-finite gradient throws before
// anything is modified.
template <typename T>
void adam_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& state,
               const AdamConfig& config);

}  // namespace sardd
