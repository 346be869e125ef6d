#include "sardd/predictor.hpp"

#include <cmath>
#include <map>
#include <variant>

#include "sardd/errors.hpp"
#include "sardd/rng.hpp"

namespace sardd {

PredictorConfig desk_config() { return PredictorConfig{}; }

void PredictorConfig::validate() const {
  if (channel_mult.empty()) throw ParameterError("predictor: channel_mult must not be empty");
  if (base_channels < 1) throw ParameterError("predictor: base_channels must be >= 1");
  if (res_blocks < 1) throw ParameterError("predictor: res_blocks must be >= 1");
  if (groups < 1) throw ParameterError("predictor: groups must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw ParameterError("predictor: time_embed_dim must be even and >= 2");
  }
  for (int m : channel_mult) {
    if (m < 1) throw ParameterError("predictor: channel multipliers must be >= 1");
    if ((m * base_channels) % groups != 0) {
      throw ParameterError("predictor: width " + std::to_string(m * base_channels) +
                           " not divisible by " + std::to_string(groups) + " groups");
    }
  }
  const int factor = 1 << (levels() - 1);
  if (image_size < factor || image_size % factor != 0) {
    throw ParameterError("predictor: image_size " + std::to_string(image_size) +
                         " not divisible by 2^(levels-1) = " + std::to_string(factor));
  }
  for (int r : attention_resolutions) {
    bool realized = false;
    for (int l = 0; l < levels(); ++l) realized = realized || (image_size >> l) == r;
    if (!realized) {
      throw ParameterError("predictor: attention resolution " + std::to_string(r) +
                           " is not a feature map size of this network");
    }
  }
}

namespace {

enum class Resample { kNone, kDown, kUp };

struct ResSpec {
  std::string prefix;
  int in = 0;
  int out = 0;
  Resample resample = Resample::kNone;
};

struct AttnSpec {
  std::string prefix;
  int channels = 0;
};

using Layer = std::variant<ResSpec, AttnSpec>;
using Unit = std::vector<Layer>;

struct Architecture {
  int input_channels = 0;
  std::vector<Unit> down;
  std::vector<Layer> middle;
  std::vector<Unit> up;
  int final_channels = 0;
};

Architecture build_architecture(const PredictorConfig& cfg) {
  cfg.validate();
  Architecture arch;
  int ch = cfg.base_channels * cfg.channel_mult[0];
  arch.input_channels = ch;
  std::vector<int> skip_channels{ch};
  int res = cfg.image_size;

  auto with_attention = [&](Unit& unit, const std::string& prefix, int channels) {
    if (cfg.attention_resolutions.count(res)) unit.push_back(AttnSpec{prefix + ".attn", channels});
  };

  for (int level = 0; level < cfg.levels(); ++level) {
    const int width = cfg.base_channels * cfg.channel_mult[level];
    for (int r = 0; r < cfg.res_blocks; ++r) {
      const std::string prefix = "down." + std::to_string(arch.down.size());
      Unit unit{ResSpec{prefix + ".res", ch, width, Resample::kNone}};
      ch = width;
      with_attention(unit, prefix, ch);
      arch.down.push_back(std::move(unit));
      skip_channels.push_back(ch);
    }
    if (level + 1 < cfg.levels()) {
      const std::string prefix = "down." + std::to_string(arch.down.size());
      arch.down.push_back(Unit{ResSpec{prefix + ".res", ch, ch, Resample::kDown}});
      skip_channels.push_back(ch);
      res /= 2;
    }
  }

  arch.middle = {ResSpec{"mid.res1", ch, ch, Resample::kNone}, AttnSpec{"mid.attn", ch},
                 ResSpec{"mid.res2", ch, ch, Resample::kNone}};

  for (int level = cfg.levels() - 1; level >= 0; --level) {
    const int width = cfg.base_channels * cfg.channel_mult[level];
    for (int r = 0; r <= cfg.res_blocks; ++r) {
      const std::string prefix = "up." + std::to_string(arch.up.size());
      const int skip = skip_channels.back();
      skip_channels.pop_back();
      Unit unit{ResSpec{prefix + ".res", ch + skip, width, Resample::kNone}};
      ch = width;
      with_attention(unit, prefix, ch);
      if (level > 0 && r == cfg.res_blocks) {
        unit.push_back(ResSpec{prefix + ".upsample", ch, ch, Resample::kUp});
        res *= 2;
      }
      arch.up.push_back(std::move(unit));
    }
  }
  arch.final_channels = ch;
  return arch;
}

using Layout = std::vector<std::pair<std::string, Shape>>;

void add_conv(Layout& layout, const std::string& prefix, int out, int in, int k) {
  layout.emplace_back(prefix + ".weight", Shape{out, in, k, k});
  layout.emplace_back(prefix + ".bias", Shape{out});
}

void add_norm(Layout& layout, const std::string& prefix, int channels) {
  layout.emplace_back(prefix + ".scale", Shape{channels});
  layout.emplace_back(prefix + ".offset", Shape{channels});
}

void add_layer(Layout& layout, const Layer& layer, int time_hidden) {
  if (const auto* res = std::get_if<ResSpec>(&layer)) {
    add_norm(layout, res->prefix + ".norm1", res->in);
    add_conv(layout, res->prefix + ".conv1", res->out, res->in, 3);
    layout.emplace_back(res->prefix + ".time.weight", Shape{res->out, time_hidden});
    layout.emplace_back(res->prefix + ".time.bias", Shape{res->out});
    add_norm(layout, res->prefix + ".norm2", res->out);
    add_conv(layout, res->prefix + ".conv2", res->out, res->out, 3);
    if (res->in != res->out) add_conv(layout, res->prefix + ".skip", res->out, res->in, 1);
  } else {
    const auto& attn = std::get<AttnSpec>(layer);
    add_norm(layout, attn.prefix + ".norm", attn.channels);
    for (const char* proj : {".q", ".k", ".v", ".proj"}) {
      add_conv(layout, attn.prefix + proj, attn.channels, attn.channels, 1);
    }
  }
}

template <typename T>
struct Graph {
  Tape<T>& tape;
  std::map<std::string, Var<T>> vars;
  const PredictorConfig& cfg;
  Var<T> time_act;

  Var<T> p(const std::string& name) const { return vars.at(name); }

  Var<T> conv(Var<T> x, const std::string& prefix, int stride, int padding) const {
    return ad::conv2d(x, p(prefix + ".weight"), p(prefix + ".bias"), stride, padding);
  }

  Var<T> norm_act(Var<T> x, const std::string& prefix) const {
    return ad::silu(ad::group_norm(x, p(prefix + ".scale"), p(prefix + ".offset"), cfg.groups));
  }

  Var<T> residual(Var<T> x, const ResSpec& spec) const {
    Var<T> h = norm_act(x, spec.prefix + ".norm1");
    Var<T> shortcut = x;
    if (spec.resample == Resample::kUp) {
      h = ad::upsample_nearest2x(h);
      shortcut = ad::upsample_nearest2x(x);
    }
    h = conv(h, spec.prefix + ".conv1", spec.resample == Resample::kDown ? 2 : 1, 1);
    if (spec.resample == Resample::kDown) shortcut = ad::avg_pool2x(x);
    h = ad::add_channel_bias(
        h, ad::linear(time_act, p(spec.prefix + ".time.weight"), p(spec.prefix + ".time.bias")));
    h = conv(norm_act(h, spec.prefix + ".norm2"), spec.prefix + ".conv2", 1, 1);
    if (spec.in != spec.out) shortcut = conv(shortcut, spec.prefix + ".skip", 1, 0);
    return ad::add(shortcut, h);
  }

  Var<T> attention(Var<T> x, const AttnSpec& spec) const {
    Var<T> n = ad::group_norm(x, p(spec.prefix + ".norm.scale"), p(spec.prefix + ".norm.offset"),
                              cfg.groups);
    Var<T> a = ad::spatial_attention(conv(n, spec.prefix + ".q", 1, 0),
                                     conv(n, spec.prefix + ".k", 1, 0),
                                     conv(n, spec.prefix + ".v", 1, 0));
    return ad::add(x, conv(a, spec.prefix + ".proj", 1, 0));
  }

  Var<T> apply(Var<T> x, const Layer& layer) const {
    if (const auto* res = std::get_if<ResSpec>(&layer)) return residual(x, *res);
    return attention(x, std::get<AttnSpec>(layer));
  }
};

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const PredictorConfig& config) {
  const Architecture arch = build_architecture(config);
  const int hidden = config.time_hidden_dim();
  Layout layout;
  layout.emplace_back("time.fc1.weight", Shape{hidden, config.time_embed_dim});
  layout.emplace_back("time.fc1.bias", Shape{hidden});
  layout.emplace_back("time.fc2.weight", Shape{hidden, hidden});
  layout.emplace_back("time.fc2.bias", Shape{hidden});
  add_conv(layout, "input", arch.input_channels, 2, 3);
  for (const Unit& unit : arch.down)
    for (const Layer& layer : unit) add_layer(layout, layer, hidden);
  for (const Layer& layer : arch.middle) add_layer(layout, layer, hidden);
  for (const Unit& unit : arch.up)
    for (const Layer& layer : unit) add_layer(layout, layer, hidden);
  add_norm(layout, "out.norm", arch.final_channels);
  add_conv(layout, "out.conv", 1, arch.final_channels, 3);
  return layout;
}

std::size_t parameter_count(const PredictorConfig& config) {
  std::size_t total = 0;
  for (const auto& [name, shape] : parameter_layout(config)) total += shape_numel(shape);
  return total;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
ParamMap<T> init_params(const PredictorConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ParamMap<T> params;
  for (const auto& [name, shape] : parameter_layout(config)) {
    Tensor<T> tensor(shape);
    if (ends_with(name, ".scale")) {
      tensor.fill(T(1));
    } else if (ends_with(name, ".weight") && name.rfind("out.conv", 0) != 0) {
      const std::size_t fan_in = tensor.numel() / static_cast<std::size_t>(shape[0]);
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (T& v : tensor.data()) v = static_cast<T>(std_dev * rng.normal());
    }
    params.emplace(name, std::move(tensor));
  }
  return params;
}

template <typename T>
void check_params(const ParamMap<T>& params, const PredictorConfig& config) {
  const auto layout = parameter_layout(config);
  if (params.size() != layout.size()) {
    throw ParameterError("predictor: expected " + std::to_string(layout.size()) +
                         " parameter tensors, got " + std::to_string(params.size()));
  }
  for (const auto& [name, shape] : layout) {
    auto it = params.find(name);
    if (it == params.end()) throw ParameterError("predictor: missing parameter '" + name + "'");
    require_same_shape(it->second.shape(), shape, "predictor parameter '" + name + "'");
  }
}

std::vector<double> timestep_encoding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw ParameterError("timestep encoding dimension must be even and >= 2, got " +
                         std::to_string(dim));
  }
  if (t < 0) throw ParameterError("timestep must be non-negative");
  const int half = dim / 2;
  std::vector<double> enc(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    enc[i] = std::sin(t * freq);
    enc[half + i] = std::cos(t * freq);
  }
  return enc;
}

template <typename T>
Var<T> predictor_forward(Tape<T>& tape, const ParamMap<T>& params,
                         const PredictorConfig& config, Var<T> x_t, Var<T> x_cond,
                         std::span<const int> timesteps) {
  const Architecture arch = build_architecture(config);
  const Shape expected{x_t.shape().at(0), 1, config.image_size, config.image_size};
  if (x_t.shape() != expected) {
    throw DimensionError("predictor: x_t shape " + shape_string(x_t.shape()) + " expected " +
                         shape_string(expected));
  }
  require_same_shape(x_cond.shape(), expected, "predictor conditioning image");
  const int batch = expected[0];
  if (static_cast<int>(timesteps.size()) != batch) {
    throw DimensionError("predictor: " + std::to_string(timesteps.size()) +
                         " timesteps for batch of " + std::to_string(batch));
  }

  check_params(params, config);
  Graph<T> g{tape, {}, config, {}};
  for (const auto& [name, tensor] : params) g.vars.emplace(name, tape.parameter(name, tensor));

  Tensor<T> encoding(Shape{batch, config.time_embed_dim});
  for (int n = 0; n < batch; ++n) {
    const auto enc = timestep_encoding(timesteps[n], config.time_embed_dim);
    for (int i = 0; i < config.time_embed_dim; ++i) {
      encoding[n * config.time_embed_dim + i] = static_cast<T>(enc[i]);
    }
  }
  Var<T> temb = ad::linear(tape.constant(std::move(encoding)), g.p("time.fc1.weight"),
                           g.p("time.fc1.bias"));
  temb = ad::linear(ad::silu(temb), g.p("time.fc2.weight"), g.p("time.fc2.bias"));
  g.time_act = ad::silu(temb);

  Var<T> h = g.conv(ad::concat_channels(x_t, x_cond), "input", 1, 1);
  std::vector<Var<T>> skips{h};
  for (const Unit& unit : arch.down) {
    for (const Layer& layer : unit) h = g.apply(h, layer);
    skips.push_back(h);
  }
  for (const Layer& layer : arch.middle) h = g.apply(h, layer);
  for (const Unit& unit : arch.up) {
    h = ad::concat_channels(h, skips.back());
    skips.pop_back();
    for (const Layer& layer : unit) h = g.apply(h, layer);
  }
  return g.conv(g.norm_act(h, "out.norm"), "out.conv", 1, 1);
}

template <typename T>
Tensor<T> predict_noise(const Tensor<T>& x_t, const Tensor<T>& x_cond,
                        std::span<const int> timesteps, const ParamMap<T>& params,
                        const PredictorConfig& config) {
  Tape<T> tape(false);
  Var<T> out = predictor_forward(tape, params, config, tape.constant(x_t),
                                 tape.constant(x_cond), timesteps);
  return out.value();
}

Image predict_noise(const Image& x_t, const Image& x_cond, int t, const ParamMap<float>& params,
                    const PredictorConfig& config) {
  const int steps[] = {t};
  return unstack(predict_noise<float>(stack({x_t}), stack({x_cond}), steps, params, config), 0);
}

#define SARDD_INSTANTIATE_PREDICTOR(T)                                                          \
  template ParamMap<T> init_params<T>(const PredictorConfig&, std::uint64_t);                   \
  template void check_params<T>(const ParamMap<T>&, const PredictorConfig&);                    \
  template Var<T> predictor_forward<T>(Tape<T>&, const ParamMap<T>&, const PredictorConfig&,    \
                                       Var<T>, Var<T>, std::span<const int>);                   \
  template Tensor<T> predict_noise<T>(const Tensor<T>&, const Tensor<T>&, std::span<const int>, \
                                      const ParamMap<T>&, const PredictorConfig&);

SARDD_INSTANTIATE_PREDICTOR(float)
SARDD_INSTANTIATE_PREDICTOR(double)

}  // namespace sardd
