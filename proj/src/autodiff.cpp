#include "sardd/autodiff.hpp"

#include <cmath>

#include "sardd/errors.hpp"
#include "sardd/kernels.hpp"

namespace sardd {

namespace kp = kernels::parallel;

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, const Tensor<T>& value) {
  for (const auto& n : nodes_) {
    if (!n.parameter_name.empty() && n.parameter_name == name) {
      throw ContractError("parameter '" + name + "' registered twice on one tape");
    }
  }
  Node node;
  node.external = &value;
  node.requires_grad = record_;
  node.parameter_name = name;
  return push(std::move(node));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError("operation mixes variables from different tapes");
    needs_grad = needs_grad || nodes_.at(in.id).requires_grad;
  }
  needs_grad = needs_grad && record_;
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename T>
Tensor<T>& Tape<T>::grad_accumulator(Var<T> v) {
  Node& node = nodes_.at(v.id);
  if (!node.grad) node.grad.emplace(node.get().shape(), T(0));
  return *node.grad;
}

template <typename T>
Tensor<T> Tape<T>::gradient(Var<T> v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad) return *node.grad;
  return Tensor<T>(node.get().shape(), T(0));
}

template <typename T>
std::map<std::string, Tensor<T>> Tape<T>::parameter_gradients() const {
  std::map<std::string, Tensor<T>> grads;
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
    if (!nodes_[id].parameter_name.empty()) {
      grads.emplace(nodes_[id].parameter_name, gradient(Var<T>{const_cast<Tape*>(this), id}));
    }
  }
  return grads;
}

template <typename T>
std::size_t Tape<T>::operation_count() const {
  std::size_t count = 0;
  for (const auto& n : nodes_) count += n.backward ? 1 : 0;
  return count;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (nodes_.at(loss.id).get().numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(nodes_.at(loss.id).get().shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  replay_order_.clear();
  if (!nodes_[loss.id].requires_grad) return;
  grad_accumulator(loss)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || !node.grad) continue;
    replay_order_.push_back(id);
    node.backward(*this, *node.grad);
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ad {

namespace {

template <typename T>
bool wants_grad(Var<T> v) {
  return v.tape->requires_grad(v);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride, int padding) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  const Tensor<T>& b = bias.value();
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  if (stride < 1) throw ParameterError("conv2d: stride must be positive");
  if (padding < 0) throw ParameterError("conv2d: padding must be non-negative");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input channel axis 1 has size " + std::to_string(x.dim(1)) +
                         " but weight axis 1 (in-channels) has size " + std::to_string(w.dim(1)));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw DimensionError("conv2d: bias shape " + shape_string(b.shape()) +
                         " does not match weight axis 0 (out-channels) of size " +
                         std::to_string(w.dim(0)));
  }
  if (x.dim(2) + 2 * padding < w.dim(2) || x.dim(3) + 2 * padding < w.dim(3)) {
    throw DimensionError("conv2d: padded input spatial axes (2,3) of size " +
                         std::to_string(x.dim(2) + 2 * padding) + "x" +
                         std::to_string(x.dim(3) + 2 * padding) + " smaller than kernel " +
                         std::to_string(w.dim(2)) + "x" + std::to_string(w.dim(3)));
  }
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                          w.dim(2), w.dim(3), stride,   padding};
  Tensor<T> out(Shape{g.batch, g.out_channels, g.out_height(), g.out_width()});
  kp::conv2d_forward<T>(g, x.data(), w.data(), b.data(), out.data());
  return input.tape->record(std::move(out), {input, weight, bias},
                            [=](Tape<T>& tape, const Tensor<T>& gy) {
                              if (wants_grad(input)) {
                                kp::conv2d_backward_input<T>(g, gy.data(), weight.value().data(),
                                                             tape.grad_accumulator(input).data());
                              }
                              const bool gw = wants_grad(weight);
                              const bool gb = wants_grad(bias);
                              if (gw || gb) {
                                Tensor<T> scratch_w;
                                Tensor<T> scratch_b;
                                if (!gw) scratch_w = Tensor<T>(weight.shape());
                                if (!gb) scratch_b = Tensor<T>(bias.shape());
                                kp::conv2d_backward_params<T>(
                                    g, input.value().data(), gy.data(),
                                    gw ? tape.grad_accumulator(weight).data() : scratch_w.data(),
                                    gb ? tape.grad_accumulator(bias).data() : scratch_b.data());
                              }
                            });
}

template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("linear: input axis 1 has size " + std::to_string(x.dim(1)) +
                         " but weight axis 1 has size " + std::to_string(w.dim(1)));
  }
  if (bias.value().shape() != Shape{w.dim(0)}) {
    throw DimensionError("linear: bias shape " + shape_string(bias.value().shape()) +
                         " does not match weight axis 0 of size " + std::to_string(w.dim(0)));
  }
  const int n = x.dim(0);
  const int in = x.dim(1);
  const int out_dim = w.dim(0);
  Tensor<T> out(Shape{n, out_dim});
  // row by row, so a sample's result does not depend on the batch size
  for (int i = 0; i < n; ++i) {
    kp::gemm<T>(false, true, 1, out_dim, in, x.ptr() + i * in, w.ptr(), T(0), out.ptr() + i * out_dim);
  }
  const Tensor<T>& b = bias.value();
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_dim; ++o) out[i * out_dim + o] += b[o];
  return input.tape->record(std::move(out), {input, weight, bias},
                            [=](Tape<T>& tape, const Tensor<T>& gy) {
                              if (wants_grad(input)) {
                                kp::gemm<T>(false, false, n, in, out_dim, gy.ptr(),
                                            weight.value().ptr(), T(1),
                                            tape.grad_accumulator(input).ptr());
                              }
                              if (wants_grad(weight)) {
                                kp::gemm<T>(true, false, out_dim, in, n, gy.ptr(),
                                            input.value().ptr(), T(1),
                                            tape.grad_accumulator(weight).ptr());
                              }
                              if (wants_grad(bias)) {
                                Tensor<T>& gb = tape.grad_accumulator(bias);
                                for (int i = 0; i < n; ++i)
                                  for (int o = 0; o < out_dim; ++o) gb[o] += gy[i * out_dim + o];
                              }
                            });
}

template <typename T>
Var<T> group_norm(Var<T> input, Var<T> scale, Var<T> offset, int groups, double eps) {
  const Tensor<T>& x = input.value();
  require_rank(x, 4, "group_norm", "input");
  const int channels = x.dim(1);
  if (groups < 1 || channels % groups != 0) {
    throw DimensionError("group_norm: channel axis 1 of size " + std::to_string(channels) +
                         " not divisible into " + std::to_string(groups) + " groups");
  }
  require_same_shape(scale.value().shape(), Shape{channels}, "group_norm scale");
  require_same_shape(offset.value().shape(), Shape{channels}, "group_norm offset");
  kernels::NormGeometry g{x.dim(0), channels, x.dim(2) * x.dim(3), groups};
  Tensor<T> out(x.shape());
  Tensor<T> mean(Shape{g.batch * groups});
  Tensor<T> rstd(Shape{g.batch * groups});
  kp::group_norm_forward<T>(g, static_cast<T>(eps), x.data(), scale.value().data(),
                            offset.value().data(), out.data(), mean.data(), rstd.data());
  return input.tape->record(
      std::move(out), {input, scale, offset},
      [=, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& tape, const Tensor<T>& gy) {
        Tensor<T> dx_scratch;
        Tensor<T> ds_scratch;
        Tensor<T> db_scratch;
        if (!wants_grad(input)) dx_scratch = Tensor<T>(input.shape());
        if (!wants_grad(scale)) ds_scratch = Tensor<T>(scale.shape());
        if (!wants_grad(offset)) db_scratch = Tensor<T>(offset.shape());
        kp::group_norm_backward<T>(
            g, input.value().data(), scale.value().data(), mean.data(), rstd.data(), gy.data(),
            wants_grad(input) ? tape.grad_accumulator(input).data() : dx_scratch.data(),
            wants_grad(scale) ? tape.grad_accumulator(scale).data() : ds_scratch.data(),
            wants_grad(offset) ? tape.grad_accumulator(offset).data() : db_scratch.data());
      });
}

template <typename T>
Var<T> silu(Var<T> x) {
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  const auto n = static_cast<std::ptrdiff_t>(in.numel());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = in[i] / (T(1) + std::exp(-in[i]));
  }
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    const Tensor<T>& v = x.value();
    Tensor<T>& gx = tape.grad_accumulator(x);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const T s = T(1) / (T(1) + std::exp(-v[i]));
      gx[i] += gy[i] * s * (T(1) + v[i] * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    for (Var<T> v : {a, b}) {
      if (!wants_grad(v)) continue;
      Tensor<T>& g = tape.grad_accumulator(v);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    if (wants_grad(a)) {
      Tensor<T>& g = tape.grad_accumulator(a);
      const Tensor<T>& other = b.value();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i] * other[i];
    }
    if (wants_grad(b)) {
      Tensor<T>& g = tape.grad_accumulator(b);
      const Tensor<T>& other = a.value();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i] * other[i];
    }
  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  const Tensor<T>& xv = x.value();
  require_rank(xv, 4, "add_channel_bias", "input");
  require_same_shape(bias.value().shape(), Shape{xv.dim(0), xv.dim(1)}, "add_channel_bias");
  const int planes = xv.dim(0) * xv.dim(1);
  const int spatial = xv.dim(2) * xv.dim(3);
  Tensor<T> out = xv;
  const Tensor<T>& bv = bias.value();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < spatial; ++i) out[static_cast<std::size_t>(p) * spatial + i] += bv[p];
  return x.tape->record(std::move(out), {x, bias}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    if (wants_grad(x)) {
      Tensor<T>& g = tape.grad_accumulator(x);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
    }
    if (wants_grad(bias)) {
      Tensor<T>& g = tape.grad_accumulator(bias);
      for (int p = 0; p < planes; ++p) {
        T acc = 0;
        for (int i = 0; i < spatial; ++i) acc += gy[static_cast<std::size_t>(p) * spatial + i];
        g[p] += acc;
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank(av, 4, "concat_channels", "first input");
  require_rank(bv, 4, "concat_channels", "second input");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw DimensionError("concat_channels: axes 0,2,3 of " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()) + " differ");
  }
  const int n = av.dim(0);
  const std::size_t sa = static_cast<std::size_t>(av.dim(1)) * av.dim(2) * av.dim(3);
  const std::size_t sb = static_cast<std::size_t>(bv.dim(1)) * bv.dim(2) * bv.dim(3);
  Tensor<T> out(Shape{n, av.dim(1) + bv.dim(1), av.dim(2), av.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + i * sa, sa, out.ptr() + i * (sa + sb));
    std::copy_n(bv.ptr() + i * sb, sb, out.ptr() + i * (sa + sb) + sa);
  }
  return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    if (wants_grad(a)) {
      Tensor<T>& g = tape.grad_accumulator(a);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < sa; ++j) g[i * sa + j] += gy[i * (sa + sb) + j];
    }
    if (wants_grad(b)) {
      Tensor<T>& g = tape.grad_accumulator(b);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < sb; ++j) g[i * sb + j] += gy[i * (sa + sb) + sa + j];
    }
  });
}

template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank(xv, 4, "upsample_nearest2x", "input");
  const int planes = xv.dim(0) * xv.dim(1);
  const int h = xv.dim(2);
  const int w = xv.dim(3);
  Tensor<T> out(Shape{xv.dim(0), xv.dim(1), 2 * h, 2 * w});
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < 2 * h; ++y)
      for (int c = 0; c < 2 * w; ++c)
        out[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + c] =
            xv[(static_cast<std::size_t>(p) * h + y / 2) * w + c / 2];
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    Tensor<T>& g = tape.grad_accumulator(x);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < h; ++y)
        for (int c = 0; c < w; ++c) {
          const std::size_t top = (static_cast<std::size_t>(p) * 2 * h + 2 * y) * 2 * w + 2 * c;
          g[(static_cast<std::size_t>(p) * h + y) * w + c] +=
              gy[top] + gy[top + 1] + gy[top + 2 * w] + gy[top + 2 * w + 1];
        }
  });
}

template <typename T>
Var<T> avg_pool2x(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank(xv, 4, "avg_pool2x", "input");
  if (xv.dim(2) % 2 || xv.dim(3) % 2) {
    throw DimensionError("avg_pool2x: spatial axes (2,3) " + shape_string(xv.shape()) +
                         " must be even");
  }
  const int planes = xv.dim(0) * xv.dim(1);
  const int h = xv.dim(2) / 2;
  const int w = xv.dim(3) / 2;
  Tensor<T> out(Shape{xv.dim(0), xv.dim(1), h, w});
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int c = 0; c < w; ++c) {
        const std::size_t top = (static_cast<std::size_t>(p) * 2 * h + 2 * y) * 2 * w + 2 * c;
        out[(static_cast<std::size_t>(p) * h + y) * w + c] =
            T(0.25) * (xv[top] + xv[top + 1] + xv[top + 2 * w] + xv[top + 2 * w + 1]);
      }
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    Tensor<T>& g = tape.grad_accumulator(x);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < h; ++y)
        for (int c = 0; c < w; ++c) {
          const T v = T(0.25) * gy[(static_cast<std::size_t>(p) * h + y) * w + c];
          const std::size_t top = (static_cast<std::size_t>(p) * 2 * h + 2 * y) * 2 * w + 2 * c;
          g[top] += v;
          g[top + 1] += v;
          g[top + 2 * w] += v;
          g[top + 2 * w + 1] += v;
        }
  });
}

template <typename T>
Var<T> spatial_attention(Var<T> q, Var<T> k, Var<T> v) {
  require_rank(q.value(), 4, "spatial_attention", "query");
  require_same_shape(k.shape(), q.shape(), "spatial_attention key");
  require_same_shape(v.shape(), q.shape(), "spatial_attention value");
  const Shape& s = q.shape();
  kernels::AttentionGeometry g{s[0], s[1], s[2] * s[3]};
  Tensor<T> out(s);
  Tensor<T> probs(Shape{g.batch, g.positions, g.positions});
  kp::attention_forward<T>(g, q.value().data(), k.value().data(), v.value().data(), out.data(),
                           probs.data());
  return q.tape->record(
      std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Tape<T>& tape, const Tensor<T>& gy) {
        Tensor<T> sq;
        Tensor<T> sk;
        Tensor<T> sv;
        if (!wants_grad(q)) sq = Tensor<T>(q.shape());
        if (!wants_grad(k)) sk = Tensor<T>(k.shape());
        if (!wants_grad(v)) sv = Tensor<T>(v.shape());
        kp::attention_backward<T>(g, q.value().data(), k.value().data(), v.value().data(),
                                  probs.data(), gy.data(),
                                  wants_grad(q) ? tape.grad_accumulator(q).data() : sq.data(),
                                  wants_grad(k) ? tape.grad_accumulator(k).data() : sk.data(),
                                  wants_grad(v) ? tape.grad_accumulator(v).data() : sv.data());
      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T value : x.value().data()) acc += value;
  return x.tape->record(Tensor<T>::scalar(acc), {x}, [=](Tape<T>& tape, const Tensor<T>& gy) {
    Tensor<T>& g = tape.grad_accumulator(x);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[0];
  });
}

template <typename T>
Var<T> mse(Var<T> prediction, const Tensor<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "mse");
  const Tensor<T>& p = prediction.value();
  const auto count = static_cast<T>(p.numel());
  T acc = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) acc += (p[i] - target[i]) * (p[i] - target[i]);
  return prediction.tape->record(
      Tensor<T>::scalar(acc / count), {prediction},
      [=](Tape<T>& tape, const Tensor<T>& gy) {
        Tensor<T>& g = tape.grad_accumulator(prediction);
        const Tensor<T>& pv = prediction.value();
        const T factor = T(2) * gy[0] / count;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * (pv[i] - target[i]);
      });
}

#define SARDD_INSTANTIATE_OPS(T)                                              \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);               \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                         \
  template Var<T> group_norm<T>(Var<T>, Var<T>, Var<T>, int, double);        \
  template Var<T> silu<T>(Var<T>);                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                    \
  template Var<T> add_channel_bias<T>(Var<T>, Var<T>);                       \
  template Var<T> concat_channels<T>(Var<T>, Var<T>);                        \
  template Var<T> upsample_nearest2x<T>(Var<T>);                             \
  template Var<T> avg_pool2x<T>(Var<T>);                                     \
  template Var<T> spatial_attention<T>(Var<T>, Var<T>, Var<T>);              \
  template Var<T> sum<T>(Var<T>);                                            \
  template Var<T> mse<T>(Var<T>, const Tensor<T>&);

SARDD_INSTANTIATE_OPS(float)
SARDD_INSTANTIATE_OPS(double)

}  // namespace ad

}  // namespace sardd
