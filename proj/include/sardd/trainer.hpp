#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "sardd/adam.hpp"
#include "sardd/diffusion.hpp"
#include "sardd/predictor.hpp"
#include "sardd/rng.hpp"
#include "sardd/speckle.hpp"

namespace sardd {

struct TrainConfig {
  int iterations = 3000;
  int batch_size = 4;
  double learning_rate = 5e-4;
  int steps = 100;  // diffusion length T
  double beta_start = default_beta_start(100);
  double beta_end = default_beta_end(100);
  std::uint64_t seed = 0;
  int checkpoint_interval = 1000;
  int log_interval = 10;

  void validate() const;
};

// What one optimizer step saw: the sampled steps and noise, the prediction made
// before the update, and its loss.
struct TrainStepReport {
  double loss = 0.0;
  std::vector<int> timesteps;
  Tensor<float> noise;
  Tensor<float> prediction;
};

// One iteration of noise-prediction training on a batch of pairs. For each pair
// draws t ~ Uniform{1..T} then eps ~ N(0, I) from `rng`, diffuses the clean
// image (mapped to [-1,1]) to x_t, predicts eps conditioned on the speckled
// image, and takes one Adam step on the mean squared error. Throws
// NonFiniteError, leaving params and state untouched, if the loss or any
// gradient is not finite.
TrainStepReport train_step(const std::vector<const ImagePair*>& batch, ParamMap<float>& params,
                           const PredictorConfig& predictor, AdamState<float>& state,
                           const AdamConfig& adam, const DiffusionSchedule& sched, Rng& rng);

struct TrainProgress {
  int iteration = 0;  // 1-based, completed iterations
  double loss = 0.0;
  double wall_seconds = 0.0;
};

// Repeats train_step for config.iterations iterations, drawing each batch
// uniformly with replacement from `dataset`. Every log_interval iterations (and
// at the last one) a JSON line {"iteration","loss","wall_time_s"} is written to
// `log` when non-null; `loss` is the mean over the interval. `on_checkpoint` runs
// every checkpoint_interval iterations and after the last one.
void train(const std::vector<ImagePair>& dataset, ParamMap<float>& params,
           const PredictorConfig& predictor, AdamState<float>& state, const TrainConfig& config,
           std::ostream* log,
           const std::function<void(const TrainProgress&)>& on_checkpoint = {});

}  // namespace sardd
