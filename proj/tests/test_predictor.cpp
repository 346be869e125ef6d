#include <doctest.h>

#include <cmath>

#include "sardd/errors.hpp"
#include "sardd/predictor.hpp"
#include "support.hpp"

using namespace sardd;
using sardd::testing::random_tensor;

namespace {

// Independent closed-form parameter count, layer by layer.
std::size_t expected_count(const PredictorConfig& c) {
  const std::size_t hid = 4 * c.base_channels;
  const std::size_t emb = c.time_embed_dim;
  auto conv = [](std::size_t out, std::size_t in, std::size_t k) { return out * in * k * k + out; };
  auto res = [&](std::size_t in, std::size_t out) {
    return 2 * in + conv(out, in, 3) + (out * hid + out) + 2 * out + conv(out, out, 3) +
           (in != out ? conv(out, in, 1) : 0);
  };
  auto attn = [&](std::size_t ch) { return 2 * ch + 4 * conv(ch, ch, 1); };

  std::size_t total = (emb * hid + hid) + (hid * hid + hid);
  std::size_t ch = c.base_channels * c.channel_mult[0];
  total += conv(ch, 2, 3);
  std::vector<std::size_t> skips{ch};
  int size = c.image_size;
  const int levels = static_cast<int>(c.channel_mult.size());
  for (int l = 0; l < levels; ++l) {
    const std::size_t w = c.base_channels * c.channel_mult[l];
    for (int r = 0; r < c.res_blocks; ++r) {
      total += res(ch, w);
      ch = w;
      if (c.attention_resolutions.count(size)) total += attn(ch);
      skips.push_back(ch);
    }
    if (l + 1 < levels) {
      total += res(ch, ch);
      skips.push_back(ch);
      size /= 2;
    }
  }
  total += 2 * res(ch, ch) + attn(ch);
  for (int l = levels - 1; l >= 0; --l) {
    const std::size_t w = c.base_channels * c.channel_mult[l];
    for (int r = 0; r <= c.res_blocks; ++r) {
      total += res(ch + skips.back(), w);
      skips.pop_back();
      ch = w;
      if (c.attention_resolutions.count(size)) total += attn(ch);
    }
    if (l > 0) {
      total += res(ch, ch);
      size *= 2;
    }
  }
  return total + 2 * ch + conv(1, ch, 3);
}

PredictorConfig small_config() {
  PredictorConfig c;
  c.image_size = 8;
  c.base_channels = 8;
  c.channel_mult = {1, 2};
  c.res_blocks = 1;
  c.attention_resolutions = {4};
  c.time_embed_dim = 8;
  c.groups = 4;
  return c;
}

template <typename T>
void randomize_output(ParamMap<T>& params, std::uint64_t seed) {
  Rng rng(seed);
  for (T& v : params.at("out.conv.weight").data()) v = static_cast<T>(0.1 * rng.normal());
  for (T& v : params.at("out.conv.bias").data()) v = static_cast<T>(0.1 * rng.normal());
}

}  // namespace

TEST_CASE("timestep encoding examples") {
  const auto zero = timestep_encoding(0, 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(zero[i] == 0.0);
    CHECK(zero[3 + i] == 1.0);
  }
  const auto one = timestep_encoding(1, 4);
  CHECK(one[0] == doctest::Approx(0.8415).epsilon(1e-4));
  CHECK(one[1] == doctest::Approx(0.0100).epsilon(1e-3));
  CHECK(one[2] == doctest::Approx(0.5403).epsilon(1e-4));
  CHECK(one[3] == doctest::Approx(0.99995).epsilon(1e-5));
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const int dim = 2 * static_cast<int>(rng.uniform_int(1, 64));
    CHECK(timestep_encoding(rng.uniform() * 1000, dim).size() == static_cast<std::size_t>(dim));
  }
  CHECK_THROWS_AS(timestep_encoding(1, 5), ParameterError);
}

TEST_CASE("parameter count matches the closed form") {
  for (PredictorConfig c : {desk_config(), small_config()}) {
    CHECK(parameter_count(c) == expected_count(c));
    PredictorConfig doubled = c;
    doubled.base_channels *= 2;
    doubled.time_embed_dim *= 2;
    CHECK(parameter_count(doubled) == expected_count(doubled));
    CHECK(parameter_count(doubled) > 3 * parameter_count(c));
  }
  const auto params = init_params<float>(desk_config(), 0);
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += t.numel();
  CHECK(total == expected_count(desk_config()));
}

TEST_CASE("config validation") {
  PredictorConfig c = desk_config();
  c.image_size = 30;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = desk_config();
  c.attention_resolutions = {5};
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = desk_config();
  c.time_embed_dim = 7;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("fresh parameters: deterministic in seed, zero output") {
  const auto a = init_params<float>(small_config(), 5);
  CHECK(a == init_params<float>(small_config(), 5));
  CHECK_FALSE(a == init_params<float>(small_config(), 6));

  PredictorConfig c = desk_config();
  c.image_size = 64;
  c.attention_resolutions = {16};
  const auto params = init_params<float>(c, 1);
  Rng rng(2);
  const auto x = random_tensor<float>({1, 1, 64, 64}, rng);
  const std::vector<int> t{17};
  const auto eps = predict_noise(x, x, t, params, c);
  CHECK(eps.shape() == Shape{1, 1, 64, 64});
  for (float v : eps.data()) REQUIRE(v == 0.0f);
}

TEST_CASE("input size must match the config") {
  const auto cfg = small_config();
  const auto params = init_params<float>(cfg, 1);
  const std::vector<int> t{1};
  CHECK_THROWS_AS(predict_noise(Tensor<float>({1, 1, 16, 16}), Tensor<float>({1, 1, 16, 16}), t, params, cfg),
                  DimensionError);
  CHECK_THROWS_AS(predict_noise(Tensor<float>({1, 1, 8, 8}), Tensor<float>({1, 1, 8, 4}), t, params, cfg),
                  DimensionError);
  auto missing = params;
  missing.erase("out.conv.bias");
  CHECK_THROWS_AS(predict_noise(Tensor<float>({1, 1, 8, 8}), Tensor<float>({1, 1, 8, 8}), t, missing, cfg),
                  ParameterError);
}

TEST_CASE("batched evaluation is bit-identical to one sample at a time") {
  PredictorConfig cfg = desk_config();
  cfg.base_channels = 16;
  auto params = init_params<float>(cfg, 3);
  randomize_output(params, 4);
  Rng rng(5);
  const auto x = random_tensor<float>({3, 1, 32, 32}, rng);
  const auto c = random_tensor<float>({3, 1, 32, 32}, rng);
  const std::vector<int> steps{1, 50, 100};
  const auto batched = predict_noise(x, c, steps, params, cfg);
  const std::size_t per = 32 * 32;
  for (int n = 0; n < 3; ++n) {
    Tensor<float> xs({1, 1, 32, 32}), cs({1, 1, 32, 32});
    std::copy_n(x.ptr() + n * per, per, xs.ptr());
    std::copy_n(c.ptr() + n * per, per, cs.ptr());
    const std::vector<int> t{steps[n]};
    const auto single = predict_noise(xs, cs, t, params, cfg);
    CHECK(std::equal(single.ptr(), single.ptr() + per, batched.ptr() + n * per));
  }
}

TEST_CASE("different timesteps give different outputs") {
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, 1);
  randomize_output(params, 2);
  Rng rng(3);
  const auto x = random_tensor<float>({1, 1, 8, 8}, rng);
  const std::vector<int> t1{10}, t2{11};
  const auto a = predict_noise(x, x, t1, params, cfg);
  const auto b = predict_noise(x, x, t2, params, cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, double(std::abs(a[i] - b[i])));
  CHECK(diff > 0.0);
}

TEST_CASE("attention over identical vectors returns identical vectors") {
  Rng rng(4);
  Tensor<double> q({1, 3, 4, 4}), k({1, 3, 4, 4}), v({1, 3, 4, 4});
  for (int ch = 0; ch < 3; ++ch) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    for (int i = 0; i < 16; ++i) {
      q[ch * 16 + i] = a;
      k[ch * 16 + i] = b;
      v[ch * 16 + i] = c;
    }
  }
  Tape<double> tape(false);
  const auto out = ad::spatial_attention(tape.constant(q), tape.constant(k), tape.constant(v)).value();
  for (int ch = 0; ch < 3; ++ch) {
    for (int i = 0; i < 16; ++i) CHECK(out[ch * 16 + i] == doctest::Approx(v[ch * 16]).epsilon(1e-12));
  }
}

TEST_CASE("full-network gradients agree with finite differences (small config, double)") {
  const auto cfg = small_config();
  auto params = init_params<double>(cfg, 7);
  randomize_output(params, 8);
  const auto checks = sardd::testing::check_predictor_gradients(params, cfg, 9);
  CHECK(checks.size() == parameter_layout(cfg).size());
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CAPTURE(c.directional_analytic);
    CAPTURE(c.directional_numeric);
    CHECK(c.directional_error <= 1e-4);
    CHECK(c.element_error <= 1e-4);
    // softmax ignores a shift shared by all keys, so key biases get no gradient
    if (c.name.ends_with("attn.k.bias")) CHECK(std::abs(c.directional_analytic) <= 1e-10);
  }
}
