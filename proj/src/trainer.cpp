#include "sardd/trainer.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"

#include "sardd/errors.hpp"

namespace sardd {

void TrainConfig::validate() const {
  if (iterations < 1) throw ParameterError("train: iterations must be >= 1");
  if (batch_size < 1) throw ParameterError("train: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("train: learning rate must be > 0");
  if (steps < 1) throw ParameterError("train: T must be >= 1");
  if (checkpoint_interval < 1) throw ParameterError("train: checkpoint interval must be >= 1");
  if (log_interval < 1) throw ParameterError("train: log interval must be >= 1");
}

TrainStepReport train_step(const std::vector<const ImagePair*>& batch, ParamMap<float>& params,
                           const PredictorConfig& predictor, AdamState<float>& state,
                           const AdamConfig& adam, const DiffusionSchedule& sched, Rng& rng) {
  if (batch.empty()) throw ParameterError("train_step: empty batch");
  TrainStepReport report;
  std::vector<Image> noisy;
  std::vector<Image> cond;
  std::vector<Image> noise;
  for (const ImagePair* pair : batch) {
    if (pair->clean.height != predictor.image_size || pair->clean.width != predictor.image_size) {
      throw DimensionError("train_step: patch " + std::to_string(pair->clean.height) + "x" +
                           std::to_string(pair->clean.width) + " does not match predictor size " +
                           std::to_string(predictor.image_size));
    }
    const int t = static_cast<int>(rng.uniform_int(1, sched.steps()));
    Image eps(pair->clean.height, pair->clean.width);
    for (float& v : eps.pixels) v = static_cast<float>(rng.normal());
    noisy.push_back(q_sample(to_signed(pair->clean), t, eps, sched));
    cond.push_back(to_signed(pair->speckled));
    noise.push_back(std::move(eps));
    report.timesteps.push_back(t);
  }
  report.noise = stack(noise);

  Tape<float> tape;
  Var<float> out = predictor_forward(tape, params, predictor, tape.constant(stack(noisy)),
                                     tape.constant(stack(cond)), report.timesteps);
  Var<float> loss = ad::mse(out, report.noise);
  report.loss = loss.value()[0];
  report.prediction = out.value();
  if (!std::isfinite(report.loss)) {
    throw NonFiniteError("train_step: non-finite loss at timesteps starting " +
                         std::to_string(report.timesteps.front()));
  }
  const auto grads = backward(tape, loss);
  adam_step(params, grads, state, adam);
  return report;
}

void train(const std::vector<ImagePair>& dataset, ParamMap<float>& params,
           const PredictorConfig& predictor, AdamState<float>& state, const TrainConfig& config,
           std::ostream* log, const std::function<void(const TrainProgress&)>& on_checkpoint) {
  config.validate();
  if (dataset.empty()) throw ParameterError("train: empty dataset");
  const DiffusionSchedule sched = make_schedule(config.steps, config.beta_start, config.beta_end);
  const AdamConfig adam{config.learning_rate};
  Rng rng(config.seed);
  const auto start = std::chrono::steady_clock::now();
  double interval_loss = 0.0;
  int interval_count = 0;

  for (int it = 1; it <= config.iterations; ++it) {
    std::vector<const ImagePair*> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      batch.push_back(&dataset[rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1)]);
    }
    const TrainStepReport step = train_step(batch, params, predictor, state, adam, sched, rng);
    interval_loss += step.loss;
    ++interval_count;

    TrainProgress progress{it, interval_loss / interval_count,
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                               .count()};
    if (log && (it % config.log_interval == 0 || it == config.iterations)) {
      nlohmann::json record{{"iteration", it},
                            {"loss", progress.loss},
                            {"wall_time_s", progress.wall_seconds}};
      *log << record.dump() << '\n' << std::flush;
    }
    if (it % config.log_interval == 0) {
      interval_loss = 0.0;
      interval_count = 0;
    }
    if (on_checkpoint && (it % config.checkpoint_interval == 0 || it == config.iterations)) {
      on_checkpoint(progress);
    }
  }
}

}  // namespace sardd
