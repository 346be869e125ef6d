#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sardd/diffusion.hpp"
#include "sardd/image.hpp"
#include "sardd/predictor.hpp"

namespace sardd {

struct CycleSpinPlan {
  // (rows, columns) shift per ensemble member; reduced modulo the image size.
  std::vector<std::pair<int, int>> shifts;

  // Member i shifts by (values[i], values[i]).
  static CycleSpinPlan paired(const std::vector<int>& values);
  // Every (u, v) in rows x cols.
  static CycleSpinPlan cross(const std::vector<int>& rows, const std::vector<int>& cols);
  // "u1,v1;u2,v2;..."
  static CycleSpinPlan parse(const std::string& text);
  // Paired 0, 100, 200.
  static CycleSpinPlan standard();

  std::string to_string() const;
  int size() const { return static_cast<int>(shifts.size()); }
};

// out(r, c) = x((r - u) mod H, (c - v) mod W). The inverse is cyclic_shift(x, -u, -v).
Image cyclic_shift(const Image& x, int u, int v);

// eps_hat for a batch: x_t and cond are (N,1,H,W) in the signed range; one step
// index per sample.
using NoisePredictor = std::function<Tensor<float>(
    const Tensor<float>& x_t, const Tensor<float>& cond, std::span<const int> timesteps)>;

// Wraps predict_noise; `params` must outlive the returned callable.
NoisePredictor network_predictor(const ParamMap<float>& params, const PredictorConfig& config);

// Seed of ensemble member `member` for a run seeded with `seed`.
std::uint64_t member_seed(std::uint64_t seed, int member);

// Runs one full reverse chain per conditioning image, all chains advanced
// together as one batch. Chain i draws x_T and then each z (t > 1) from its own
// stream seeded by seeds[i], so its result does not depend on the batch.
// Conditioning images are in [-1,1]. Steps use reverse_step_clipped by default,
// plain reverse_step when clip_estimate is false (outputs are then unbounded).
std::vector<Image> sample_chains(const std::vector<Image>& cond_signed,
                                 std::span<const std::uint64_t> seeds,
                                 const NoisePredictor& predictor, const DiffusionSchedule& sched,
                                 bool clip_estimate = true);

// Runs one chain per planned shift, conditioned on the shifted speckled image,
// and returns the signed-range outputs with their shifts undone.
// Member i uses member_seed(seed, i).
std::vector<Image> spin_members(const Image& speckled, const CycleSpinPlan& plan,
                                const NoisePredictor& predictor, const DiffusionSchedule& sched,
                                std::uint64_t seed, bool clip_estimate = true);

// Mean of the members, mapped back to [0,1] with clamping.
Image combine_members(const std::vector<Image>& members);

// Cycle-spinning despeckler: for each planned shift, condition a reverse chain
// on the shifted speckled image, undo the shift on its output, then average the
// members and map back to [0,1] with clamping. Member i uses member_seed(seed, i).
Image despeckle_cs(const Image& speckled, const CycleSpinPlan& plan,
                   const NoisePredictor& predictor, const DiffusionSchedule& sched,
                   std::uint64_t seed, bool clip_estimate = true);

}  // namespace sardd
