#include "sardd/cyclespin.hpp"

#include <algorithm>
#include <sstream>

#include "sardd/errors.hpp"
#include "sardd/rng.hpp"

namespace sardd {

namespace {

int parse_int(const std::string& token, const std::string& text) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != token.size()) {
    throw ParameterError("shifts: bad integer '" + token + "' in '" + text + "'");
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

int wrap(int value, int n) {
  const int r = value % n;
  return r < 0 ? r + n : r;
}

}  // namespace

CycleSpinPlan CycleSpinPlan::paired(const std::vector<int>& values) {
  if (values.empty()) throw ParameterError("cycle spinning: empty shift set");
  CycleSpinPlan plan;
  for (int v : values) plan.shifts.emplace_back(v, v);
  return plan;
}

CycleSpinPlan CycleSpinPlan::cross(const std::vector<int>& rows, const std::vector<int>& cols) {
  if (rows.empty() || cols.empty()) throw ParameterError("cycle spinning: empty shift set");
  CycleSpinPlan plan;
  for (int u : rows) {
    for (int v : cols) plan.shifts.emplace_back(u, v);
  }
  return plan;
}

CycleSpinPlan CycleSpinPlan::parse(const std::string& text) {
  CycleSpinPlan plan;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) {
      throw ParameterError("shifts: expected 'u,v' but got '" + item + "'");
    }
    plan.shifts.emplace_back(parse_int(trim(item.substr(0, comma)), text),
                             parse_int(trim(item.substr(comma + 1)), text));
  }
  if (plan.shifts.empty()) throw ParameterError("cycle spinning: empty shift set");
  return plan;
}

CycleSpinPlan CycleSpinPlan::standard() { return paired({0, 100, 200}); }

std::string CycleSpinPlan::to_string() const {
  std::string out;
  for (const auto& [u, v] : shifts) {
    if (!out.empty()) out += ';';
    out += std::to_string(u) + ',' + std::to_string(v);
  }
  return out;
}

Image cyclic_shift(const Image& x, int u, int v) {
  if (x.height < 1 || x.width < 1) throw DimensionError("cyclic_shift: empty image");
  const int du = wrap(u, x.height);
  const int dv = wrap(v, x.width);
  Image out(x.height, x.width);
  for (int r = 0; r < x.height; ++r) {
    const int sr = wrap(r - du, x.height);
    for (int c = 0; c < x.width; ++c) out.at(r, c) = x.at(sr, wrap(c - dv, x.width));
  }
  return out;
}

NoisePredictor network_predictor(const ParamMap<float>& params, const PredictorConfig& config) {
  check_params(params, config);
  return [&params, config](const Tensor<float>& x_t, const Tensor<float>& cond,
                           std::span<const int> timesteps) {
    return predict_noise(x_t, cond, timesteps, params, config);
  };
}

std::uint64_t member_seed(std::uint64_t seed, int member) {
  return derive_seed(seed, static_cast<std::uint64_t>(member));
}

std::vector<Image> sample_chains(const std::vector<Image>& cond_signed,
                                 std::span<const std::uint64_t> seeds,
                                 const NoisePredictor& predictor, const DiffusionSchedule& sched,
                                 bool clip_estimate) {
  if (cond_signed.empty()) throw ParameterError("sample_chains: no conditioning images");
  if (seeds.size() != cond_signed.size()) {
    throw ParameterError("sample_chains: " + std::to_string(seeds.size()) + " seeds for " +
                         std::to_string(cond_signed.size()) + " chains");
  }
  for (const Image& c : cond_signed) require_same_size(c, cond_signed.front(), "sample_chains");

  const Tensor<float> cond = stack(cond_signed);
  const std::size_t per = cond_signed.front().size();
  std::vector<Rng> rngs;
  for (std::uint64_t s : seeds) rngs.emplace_back(s);

  Tensor<float> x(cond.shape());
  for (std::size_t i = 0; i < rngs.size(); ++i) {
    for (std::size_t j = 0; j < per; ++j) x[i * per + j] = static_cast<float>(rngs[i].normal());
  }
  std::vector<int> steps(rngs.size());
  for (int t = sched.steps(); t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Tensor<float> eps_hat = predictor(x, cond, steps);
    require_same_shape(eps_hat.shape(), x.shape(), "sample_chains predictor output");
    Tensor<float> z(x.shape());
    if (t > 1) {
      for (std::size_t i = 0; i < rngs.size(); ++i) {
        for (std::size_t j = 0; j < per; ++j) z[i * per + j] = static_cast<float>(rngs[i].normal());
      }
    }
    x = clip_estimate ? reverse_step_clipped(x, t, eps_hat, z, sched)
                      : reverse_step(x, t, eps_hat, z, sched);
  }

  std::vector<Image> out;
  for (std::size_t i = 0; i < rngs.size(); ++i) out.push_back(unstack(x, static_cast<int>(i)));
  return out;
}

std::vector<Image> spin_members(const Image& speckled, const CycleSpinPlan& plan,
                                const NoisePredictor& predictor, const DiffusionSchedule& sched,
                                std::uint64_t seed, bool clip_estimate) {
  if (plan.shifts.empty()) throw ParameterError("cycle spinning: empty shift set");
  const Image cond = to_signed(speckled);
  std::vector<Image> shifted;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < plan.size(); ++i) {
    const auto [u, v] = plan.shifts[static_cast<std::size_t>(i)];
    shifted.push_back(cyclic_shift(cond, u, v));
    seeds.push_back(member_seed(seed, i));
  }
  std::vector<Image> chains = sample_chains(shifted, seeds, predictor, sched, clip_estimate);
  for (int i = 0; i < plan.size(); ++i) {
    const auto [u, v] = plan.shifts[static_cast<std::size_t>(i)];
    chains[static_cast<std::size_t>(i)] = cyclic_shift(chains[static_cast<std::size_t>(i)], -u, -v);
  }
  return chains;
}

Image combine_members(const std::vector<Image>& members) {
  if (members.empty()) throw ParameterError("cycle spinning: no members to combine");
  Image mean(members[0].height, members[0].width);
  for (const Image& m : members) {
    if (m.height != mean.height || m.width != mean.width) {
      throw DimensionError("cycle spinning: members differ in size");
    }
    for (std::size_t j = 0; j < mean.size(); ++j) mean.pixels[j] += m.pixels[j];
  }
  const float inv = 1.0f / static_cast<float>(members.size());
  for (float& p : mean.pixels) p *= inv;
  return from_signed(mean);
}

Image despeckle_cs(const Image& speckled, const CycleSpinPlan& plan,
                   const NoisePredictor& predictor, const DiffusionSchedule& sched,
                   std::uint64_t seed, bool clip_estimate) {
  return combine_members(spin_members(speckled, plan, predictor, sched, seed, clip_estimate));
}

}  // namespace sardd
