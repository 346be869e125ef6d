#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sardd/autodiff.hpp"
#include "sardd/image.hpp"
#include "sardd/predictor.hpp"
#include "sardd/rng.hpp"

namespace sardd::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(scale * rng.normal());
  return t;
}

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

using Builder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Below the floor the comparison is effectively absolute (|a - n| <= 1e-4 * floor).
// At h = 1e-5 central differences through the desk network carry up to ~1e-9 of
// rounding noise, which is all a structurally zero gradient ever shows.
inline constexpr double kGradientFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
  return std::abs(analytic - numeric) / scale;
}

inline double evaluate(const Builder& build, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  return build(tape, vars).value()[0];
}

// Worst relative error between backprop and central differences over every
// element of every input.
inline double max_gradient_error(const Builder& build, std::vector<Tensor<double>> inputs,
                                 double h = 1e-5) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(build(tape, vars));

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = tape.gradient(vars[i]);
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + h;
      const double up = evaluate(build, inputs);
      inputs[i][j] = saved - h;
      const double down = evaluate(build, inputs);
      inputs[i][j] = saved;
      worst = std::max(worst, relative_error(analytic[j], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Scalar probe: sum(out * fixed random weights), so every output element
// contributes a distinct gradient.
inline Var<double> probe(Var<double> out, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tape<double>& tape = *out.tape;
  return ad::sum(ad::mul(out, tape.constant(random_tensor<double>(out.shape(), rng))));
}

}  // namespace sardd::testing


namespace sardd::testing {

struct ParamCheck {
  std::string name;
  double directional_error = 0.0;  // along a random direction over the whole tensor
  double element_error = 0.0;      // worst single element: the largest gradient plus random picks
  double directional_analytic = 0.0;
  double directional_numeric = 0.0;
};

// Backprop vs central differences for every tensor of a predictor on one fixed
// batch. The loss is a fixed random projection of the output. Parameters are
// taken by value: the output convolution must be non-zero for the other
// tensors to receive any gradient.
inline std::vector<ParamCheck> check_predictor_gradients(ParamMap<double> params,
                                                         const PredictorConfig& config,
                                                         std::uint64_t seed, double h = 1e-5,
                                                         int random_elements = 0) {
  Rng rng(seed);
  const int s = config.image_size;
  const auto x_t = random_tensor<double>({2, 1, s, s}, rng);
  const auto x_c = random_tensor<double>({2, 1, s, s}, rng);
  const std::vector<int> steps{3, 71};
  const auto weights = random_tensor<double>({2, 1, s, s}, rng);

  auto loss_of = [&](Tape<double>& tape) {
    Var<double> out = predictor_forward(tape, params, config, tape.constant(x_t),
                                        tape.constant(x_c), std::span<const int>(steps));
    return ad::sum(ad::mul(out, tape.constant(weights)));
  };
  auto value = [&] {
    Tape<double> tape(false);
    return loss_of(tape).value()[0];
  };

  Tape<double> tape;
  const auto grads = backward(tape, loss_of(tape));

  std::vector<ParamCheck> results;
  for (auto& [name, tensor] : params) {
    const Tensor<double>& g = grads.at(name);
    const Tensor<double> saved = tensor;
    ParamCheck check{name};

    const auto direction = random_tensor<double>(tensor.shape(), rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) analytic += g[i] * direction[i];
    for (std::size_t i = 0; i < tensor.numel(); ++i) tensor[i] = saved[i] + h * direction[i];
    const double up = value();
    for (std::size_t i = 0; i < tensor.numel(); ++i) tensor[i] = saved[i] - h * direction[i];
    const double down = value();
    tensor = saved;
    check.directional_analytic = analytic;
    check.directional_numeric = (up - down) / (2 * h);
    check.directional_error = relative_error(analytic, check.directional_numeric);

    std::size_t top = 0;
    for (std::size_t i = 1; i < g.numel(); ++i) {
      if (std::abs(g[i]) > std::abs(g[top])) top = i;
    }
    std::vector<std::size_t> probes{top};
    const auto last = static_cast<std::int64_t>(g.numel()) - 1;
    for (int k = 0; k < random_elements; ++k) {
      probes.push_back(static_cast<std::size_t>(rng.uniform_int(0, last)));
    }
    for (std::size_t i : probes) {
      tensor[i] = saved[i] + h;
      const double e_up = value();
      tensor[i] = saved[i] - h;
      const double e_down = value();
      tensor[i] = saved[i];
      check.element_error = std::max(check.element_error, relative_error(g[i], (e_up - e_down) / (2 * h)));
    }
    results.push_back(check);
  }
  return results;
}

}  // namespace sardd::testing
