#include <doctest.h>

#include "sardd/cyclespin.hpp"
#include "sardd/errors.hpp"
#include "support.hpp"

using namespace sardd;

namespace {

// eps_hat = 0 everywhere: each chain is a deterministic function of its seed.
Tensor<float> zero_predictor(const Tensor<float>& x, const Tensor<float>&, std::span<const int>) {
  return Tensor<float>(x.shape());
}

// Pretends to be a perfect denoiser for a known clean signal: returns the noise
// that would map x_t back onto the conditioning image.
struct OraclePredictor {
  const DiffusionSchedule* sched;
  Tensor<float> operator()(const Tensor<float>& x, const Tensor<float>& cond,
                           std::span<const int> steps) const {
    Tensor<float> eps(x.shape());
    const std::size_t per = x.numel() / steps.size();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double ab = sched->alpha_bar(steps[i / per]);
      eps[i] = static_cast<float>((x[i] - std::sqrt(ab) * cond[i]) / std::sqrt(1 - ab));
    }
    return eps;
  }
};

}  // namespace

TEST_CASE("cyclic shift: definition, modulo reduction, inverse") {
  const Image x(3, 4, std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const Image s = cyclic_shift(x, 1, 2);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(s.at(r, c) == x.at((r - 1 + 3) % 3, (c - 2 + 4) % 4));
  }
  CHECK(cyclic_shift(x, 100, 201) == cyclic_shift(x, 100 % 3, 201 % 4));
  CHECK(cyclic_shift(x, 0, 0) == x);
  Rng rng(1);
  const Image img = sardd::testing::random_image(32, 32, rng);
  for (auto [u, v] : {std::pair{100, 100}, {200, 200}, {-7, 13}, {32, 64}}) {
    CHECK(cyclic_shift(cyclic_shift(img, u, v), -u, -v) == img);
  }
}

TEST_CASE("shift plans: paired, cross product, parsing") {
  const auto std_plan = CycleSpinPlan::standard();
  CHECK(std_plan.shifts == std::vector<std::pair<int, int>>{{0, 0}, {100, 100}, {200, 200}});
  CHECK(CycleSpinPlan::cross({0, 1}, {2, 3}).size() == 4);
  const auto parsed = CycleSpinPlan::parse("0,0; 100,200;-3,4");
  CHECK(parsed.shifts == std::vector<std::pair<int, int>>{{0, 0}, {100, 200}, {-3, 4}});
  CHECK(CycleSpinPlan::parse(parsed.to_string()).shifts == parsed.shifts);
  CHECK_THROWS_AS(CycleSpinPlan::parse(""), ParameterError);
  CHECK_THROWS_AS(CycleSpinPlan::parse("1;2"), ParameterError);
  CHECK_THROWS_AS(CycleSpinPlan::parse("1,x"), ParameterError);
  CHECK_THROWS_AS(CycleSpinPlan::paired({}), ParameterError);
}

TEST_CASE("chains are independent of batching and reproducible from their seeds") {
  const auto sched = make_schedule(10, 1e-3, 0.2);
  Rng rng(2);
  std::vector<Image> conds{sardd::testing::random_image(8, 8, rng), sardd::testing::random_image(8, 8, rng)};
  const std::vector<std::uint64_t> seeds{11, 12};
  const auto both = sample_chains(conds, seeds, zero_predictor, sched);
  const auto second = sample_chains({conds[1]}, std::span(seeds).subspan(1), zero_predictor, sched);
  CHECK(both[1] == second[0]);
  CHECK_FALSE(both[0] == both[1]);
  CHECK(sample_chains(conds, seeds, zero_predictor, sched) == both);
  CHECK_THROWS_AS(sample_chains(conds, std::span(seeds).subspan(1), zero_predictor, sched), ParameterError);
}

TEST_CASE("despeckle_cs: averages unshifted members and clamps") {
  const auto sched = make_schedule(20, 1e-3, 0.2);
  Rng rng(3);
  const Image speckled = sardd::testing::random_image(8, 8, rng);
  const auto plan = CycleSpinPlan::parse("0,0;3,5;100,100");
  const auto out = despeckle_cs(speckled, plan, zero_predictor, sched, 42);

  std::vector<Image> shifted;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < plan.size(); ++i) {
    shifted.push_back(cyclic_shift(to_signed(speckled), plan.shifts[i].first, plan.shifts[i].second));
    seeds.push_back(member_seed(42, i));
  }
  const auto chains = sample_chains(shifted, seeds, zero_predictor, sched);
  Image mean(8, 8);
  for (int i = 0; i < plan.size(); ++i) {
    const Image back = cyclic_shift(chains[i], -plan.shifts[i].first, -plan.shifts[i].second);
    for (std::size_t j = 0; j < mean.size(); ++j) mean.pixels[j] += back.pixels[j] / 3.0f;
  }
  const Image expected = from_signed(mean);
  for (std::size_t j = 0; j < out.size(); ++j) {
    CHECK(out.pixels[j] == doctest::Approx(expected.pixels[j]).epsilon(1e-6));
    CHECK(out.pixels[j] >= 0.0f);
    CHECK(out.pixels[j] <= 1.0f);
  }
  CHECK_THROWS_AS(despeckle_cs(speckled, CycleSpinPlan{}, zero_predictor, sched, 1), ParameterError);
}

TEST_CASE("a perfect predictor recovers the conditioning image for every shift") {
  const auto sched = default_schedule(50);
  Rng rng(4);
  const Image img = sardd::testing::random_image(16, 16, rng);
  const OraclePredictor oracle{&sched};
  const auto out = despeckle_cs(img, CycleSpinPlan::parse("0,0;5,9;100,100;200,200"), oracle, sched, 3);
  for (std::size_t j = 0; j < out.size(); ++j) CHECK(out.pixels[j] == doctest::Approx(img.pixels[j]).epsilon(1e-4));
}

TEST_CASE("single member plan equals member zero of a larger plan") {
  const auto sched = make_schedule(10, 1e-3, 0.2);
  Rng rng(5);
  const Image img = sardd::testing::random_image(8, 8, rng);
  const auto one = despeckle_cs(img, CycleSpinPlan::paired({0}), zero_predictor, sched, 9);
  const auto chains = sample_chains({to_signed(img)}, std::vector<std::uint64_t>{member_seed(9, 0)},
                                    zero_predictor, sched);
  CHECK(one == from_signed(chains[0]));
}

TEST_CASE("members do not depend on the rest of the plan") {
  const auto sched = make_schedule(10, 1e-3, 0.2);
  Rng rng(6);
  const Image img = sardd::testing::random_image(8, 8, rng);
  const auto plan = CycleSpinPlan::paired({0, 2, 4, 6});
  const auto members = spin_members(img, plan, zero_predictor, sched, 7);
  REQUIRE(members.size() == 4);
  CHECK(spin_members(img, CycleSpinPlan::paired({0}), zero_predictor, sched, 7)[0] == members[0]);
  CHECK(combine_members(members) == despeckle_cs(img, plan, zero_predictor, sched, 7));
  CHECK(combine_members({members[0]}) == despeckle_cs(img, CycleSpinPlan::paired({0}), zero_predictor, sched, 7));
  CHECK_THROWS_AS(combine_members({}), ParameterError);
}
