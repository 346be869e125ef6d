#pragma once

// Conditional noise predictor eps(x_t, x_S, t): a U-shaped convolutional network.
//
//   concat(x_t, x_S) -> 3x3 conv
//   contracting path: per level, `res_blocks` residual blocks, then a residual
//                     block that halves the resolution (strided conv)
//   bottleneck:       residual block, self-attention, residual block
//   expansive path:   per level, `res_blocks + 1` residual blocks, each fed the
//                     matching skip tensor, then a residual block that doubles
//                     the resolution (nearest neighbour + conv)
//   GroupNorm -> SiLU -> 3x3 conv (zero-initialized) -> eps_hat
//
// Every residual block adds a learned projection of the timestep embedding to
// its hidden features. Self-attention follows residual blocks whose feature map
// size is listed in `attention_resolutions`.

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sardd/adam.hpp"
#include "sardd/autodiff.hpp"
#include "sardd/image.hpp"

namespace sardd {

struct PredictorConfig {
  int image_size = 32;
  int base_channels = 32;
  std::vector<int> channel_mult{1, 2, 4};
  int res_blocks = 2;
  std::set<int> attention_resolutions{8};
  int time_embed_dim = 128;
  int groups = 8;

  int levels() const { return static_cast<int>(channel_mult.size()); }
  // Width of the hidden timestep representation fed to the residual blocks.
  int time_hidden_dim() const { return 4 * base_channels; }
  // Throws ParameterError describing the first violated constraint.
  void validate() const;

  bool operator==(const PredictorConfig&) const = default;
};

// Desk-scale default (32x32 input, 32 base channels, multipliers 1,2,4).
PredictorConfig desk_config();

// Ordered (name, shape) list of every learnable tensor the config implies.
std::vector<std::pair<std::string, Shape>> parameter_layout(const PredictorConfig& config);
std::size_t parameter_count(const PredictorConfig& config);

// Fan-in scaled normal init (std = 1/sqrt(fan_in)) for weights, zero biases,
// unit/zero normalization scale/offset, all-zero output convolution.
template <typename T>
ParamMap<T> init_params(const PredictorConfig& config, std::uint64_t seed);

// Throws DimensionError/ParameterError unless `params` has exactly the layout
// of `config`.
template <typename T>
void check_params(const ParamMap<T>& params, const PredictorConfig& config);

// Sinusoidal encoding: first half sin(t*w_i), second half cos(t*w_i),
// w_i = 10000^(-2i/dim). dim must be even.
std::vector<double> timestep_encoding(double t, int dim);

// Registers every parameter on the tape and builds the forward graph.
// x_t and x_cond are (N,1,S,S); timesteps holds one step index per sample.
template <typename T>
Var<T> predictor_forward(Tape<T>& tape, const ParamMap<T>& params,
                         const PredictorConfig& config, Var<T> x_t, Var<T> x_cond,
                         std::span<const int> timesteps);

// Inference without gradient bookkeeping. Returns eps_hat shaped like x_t.
template <typename T>
Tensor<T> predict_noise(const Tensor<T>& x_t, const Tensor<T>& x_cond,
                        std::span<const int> timesteps, const ParamMap<T>& params,
                        const PredictorConfig& config);

Image predict_noise(const Image& x_t, const Image& x_cond, int t, const ParamMap<float>& params,
                    const PredictorConfig& config);

}  // namespace sardd
