#include "sardd/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "sardd/errors.hpp"

namespace sardd {

std::size_t DiffusionSchedule::index(int t) const {
  check_step(t);
  return static_cast<std::size_t>(t - 1);
}

void DiffusionSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw ParameterError("diffusion step " + std::to_string(t) + " outside [1, " +
                         std::to_string(steps()) + "]");
  }
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ParameterError("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ParameterError("schedule: need 0 < beta_start <= beta_end < 1, got " +
                         std::to_string(beta_start) + ", " + std::to_string(beta_end));
  }
  DiffusionSchedule s;
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    running *= 1.0 - beta;
    s.beta_.push_back(beta);
    s.alpha_.push_back(1.0 - beta);
    s.alpha_bar_.push_back(running);
    s.sigma_.push_back(std::sqrt(beta));
  }
  return s;
}

double default_beta_start(int steps) { return 1e-4 * 1000.0 / steps; }
double default_beta_end(int steps) { return 0.02 * 1000.0 / steps; }

DiffusionSchedule default_schedule(int steps) {
  if (steps < 1) throw ParameterError("schedule: T must be >= 1");
  return make_schedule(steps, default_beta_start(steps), default_beta_end(steps));
}

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                   const DiffusionSchedule& sched) {
  sched.check_step(t);
  require_same_shape(eps.shape(), x0.shape(), "q_sample noise");
  const T a = static_cast<T>(std::sqrt(sched.alpha_bar(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(t)));
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Image q_sample(const Image& x0, int t, const Image& eps, const DiffusionSchedule& sched) {
  require_same_size(x0, eps, "q_sample noise");
  Tensor<float> out = q_sample(stack({x0}), t, stack({eps}), sched);
  return unstack(out, 0);
}

template <typename T>
Tensor<T> forward_step(const Tensor<T>& x_prev, int t, const Tensor<T>& eps,
                       const DiffusionSchedule& sched) {
  sched.check_step(t);
  require_same_shape(eps.shape(), x_prev.shape(), "forward_step noise");
  const T a = static_cast<T>(std::sqrt(sched.alpha(t)));
  const T b = static_cast<T>(std::sqrt(sched.beta(t)));
  Tensor<T> out(x_prev.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x_prev[i] + b * eps[i];
  return out;
}

template <typename T>
Tensor<T> reverse_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                       const Tensor<T>& z, const DiffusionSchedule& sched) {
  sched.check_step(t);
  require_same_shape(eps_hat.shape(), x_t.shape(), "reverse_step eps_hat");
  require_same_shape(z.shape(), x_t.shape(), "reverse_step z");
  if (t == 1) {
    for (T v : z.data()) {
      if (v != T(0)) throw ContractError("reverse_step: z must be zero at t = 1");
    }
  }
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(sched.alpha(t)));
  const T eps_coef = static_cast<T>(sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)));
  const T sigma = static_cast<T>(sched.sigma(t));
  Tensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]) + sigma * z[i];
  }
  return out;
}

template <typename T>
Tensor<T> reverse_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                       const DiffusionSchedule& sched) {
  return reverse_step(x_t, t, eps_hat, Tensor<T>(x_t.shape()), sched);
}

template <typename T>
Tensor<T> reverse_step_clipped(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                               const Tensor<T>& z, const DiffusionSchedule& sched) {
  sched.check_step(t);
  require_same_shape(eps_hat.shape(), x_t.shape(), "reverse_step_clipped eps_hat");
  require_same_shape(z.shape(), x_t.shape(), "reverse_step_clipped z");
  if (t == 1) {
    for (T v : z.data()) {
      if (v != T(0)) throw ContractError("reverse_step_clipped: z must be zero at t = 1");
    }
  }
  const double ab = sched.alpha_bar(t);
  const double ab_prev = t > 1 ? sched.alpha_bar(t - 1) : 1.0;
  const double beta = sched.beta(t);
  const T sqrt_ab = static_cast<T>(std::sqrt(ab));
  const T sqrt_1mab = static_cast<T>(std::sqrt(1.0 - ab));
  const T x0_coef = static_cast<T>(std::sqrt(ab_prev) * beta / (1.0 - ab));
  const T xt_coef = static_cast<T>(std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab));
  const T sigma = static_cast<T>(sched.sigma(t));
  Tensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T x0 = std::clamp((x_t[i] - sqrt_1mab * eps_hat[i]) / sqrt_ab, T(-1), T(1));
    out[i] = x0_coef * x0 + xt_coef * x_t[i] + sigma * z[i];
  }
  return out;
}

template <typename T>
double loss_simple(const Tensor<T>& eps, const Tensor<T>& eps_hat) {
  require_same_shape(eps_hat.shape(), eps.shape(), "loss_simple");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.numel(); ++i) {
    const double d = static_cast<double>(eps[i]) - static_cast<double>(eps_hat[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(eps.numel());
}

#define SARDD_INSTANTIATE_DIFFUSION(T)                                                       \
  template Tensor<T> q_sample<T>(const Tensor<T>&, int, const Tensor<T>&,                    \
                                 const DiffusionSchedule&);                                  \
  template Tensor<T> forward_step<T>(const Tensor<T>&, int, const Tensor<T>&,                \
                                     const DiffusionSchedule&);                              \
  template Tensor<T> reverse_step<T>(const Tensor<T>&, int, const Tensor<T>&,                \
                                     const Tensor<T>&, const DiffusionSchedule&);            \
  template Tensor<T> reverse_step<T>(const Tensor<T>&, int, const Tensor<T>&,                \
                                     const DiffusionSchedule&);                              \
  template Tensor<T> reverse_step_clipped<T>(const Tensor<T>&, int, const Tensor<T>&,        \
                                             const Tensor<T>&, const DiffusionSchedule&);    \
  template double loss_simple<T>(const Tensor<T>&, const Tensor<T>&);

SARDD_INSTANTIATE_DIFFUSION(float)
SARDD_INSTANTIATE_DIFFUSION(double)

}  // namespace sardd
