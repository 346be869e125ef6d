#pragma once

// Gaussian diffusion chain: variance schedule, closed-form forward sampling,
// the reverse update, and the simplified noise-prediction objective.
// Step indices are 1-based throughout (t = 1..T).

#include <cstdint>
#include <vector>

#include "sardd/image.hpp"
#include "sardd/tensor.hpp"

namespace sardd {

class DiffusionSchedule {
 public:
  int steps() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(index(t)); }
  // Reverse-step noise scale; sigma(t)^2 == beta(t).
  double sigma(int t) const { return sigma_.at(index(t)); }

  double beta_start() const { return beta_.front(); }
  double beta_end() const { return beta_.back(); }

  // Throws ParameterError unless 1 <= t <= T.
  void check_step(int t) const;

  friend DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

 private:
  std::size_t index(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

// beta linearly interpolated from beta_start (t=1) to beta_end (t=T), used as
// given. Requires T >= 1 and 0 < beta_start <= beta_end < 1.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

// Linear 1e-4..0.02 at T=1000; for other T both endpoints scale by 1000/T so the
// total injected variance stays comparable.
DiffusionSchedule default_schedule(int steps);
double default_beta_start(int steps);
double default_beta_end(int steps);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                   const DiffusionSchedule& sched);
Image q_sample(const Image& x0, int t, const Image& eps, const DiffusionSchedule& sched);

// One step of the iterated forward kernel:
// x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps.
template <typename T>
Tensor<T> forward_step(const Tensor<T>& x_prev, int t, const Tensor<T>& eps,
                       const DiffusionSchedule& sched);

// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z.
// z must be all-zero when t == 1 (ContractError otherwise).
template <typename T>
Tensor<T> reverse_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                       const Tensor<T>& z, const DiffusionSchedule& sched);
// Noise-free variant (z = 0).
template <typename T>
Tensor<T> reverse_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                       const DiffusionSchedule& sched);

// Sampling variant: estimates x0 = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t),
// clips it to [-1,1], and steps to the posterior mean of x_{t-1} given x_t and that
// estimate, plus sigma_t z. Agrees with reverse_step wherever the estimate already
// lies in [-1,1]; at t = 1 it returns the clipped estimate.
template <typename T>
Tensor<T> reverse_step_clipped(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                               const Tensor<T>& z, const DiffusionSchedule& sched);

// Mean squared error over all elements.
template <typename T>
double loss_simple(const Tensor<T>& eps, const Tensor<T>& eps_hat);

}  // namespace sardd
