#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape owns every value produced during one forward evaluation. Primitives
// append a node holding their output and a closure that maps the output
// gradient to input gradients. Tape::backward replays those closures once each,
// newest first. Tapes are single-threaded; create one per training step.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sardd/tensor.hpp"

namespace sardd {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const;
  Shape shape() const { return value().shape(); }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_output)>;

  // With record_gradients=false no closures are kept (inference mode).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);
  // Named leaf that refers to `value` without copying; `value` must outlive the
  // tape and stay unchanged while it is in use.
  Var<T> parameter(const std::string& name, const Tensor<T>& value);

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).get(); }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  bool recording() const { return record_; }

  // Gradient from the last backward(); zeros when v did not take part.
  Tensor<T> gradient(Var<T> v) const;
  std::map<std::string, Tensor<T>> parameter_gradients() const;

  // Seeds d(loss)/d(loss) = 1 and replays recorded operations in reverse.
  // Throws ContractError unless loss holds exactly one element.
  void backward(Var<T> loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t operation_count() const;
  // Node ids whose closures ran during the last backward(), in execution order.
  const std::vector<int>& replay_order() const { return replay_order_; }

  // Primitive-author interface.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
  // Gradient accumulator for an input node, zero-initialized on first use.
  Tensor<T>& grad_accumulator(Var<T> v);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor<T>> grad;
    std::string parameter_name;

    const Tensor<T>& get() const { return external ? *external : value; }
  };

  Var<T> push(Node node);

  bool record_;
  std::vector<Node> nodes_;
  std::vector<int> replay_order_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

// Runs backward and returns d(loss)/d(parameter) for every named parameter on
// the tape; parameters that did not influence the loss get zero tensors.
template <typename T>
std::map<std::string, Tensor<T>> backward(Tape<T>& tape, Var<T> loss) {
  tape.backward(loss);
  return tape.parameter_gradients();
}

namespace ad {

// input (N,C,H,W), weight (O,C,kh,kw), bias (O). Zero padding.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride, int padding);

// input (N,in), weight (out,in), bias (out).
template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias);

// input (N,C,H,W); scale, offset (C). C must be divisible by groups.
template <typename T>
Var<T> group_norm(Var<T> input, Var<T> scale, Var<T> offset, int groups, double eps = 1e-5);

// x * sigmoid(x)
template <typename T>
Var<T> silu(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

// x (N,C,H,W) plus per-sample channel offsets bias (N,C).
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias);

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

template <typename T>
Var<T> upsample_nearest2x(Var<T> x);

template <typename T>
Var<T> avg_pool2x(Var<T> x);

// Single-head dot-product self-attention over spatial positions. q, k, v share
// shape (N,C,H,W); the result has the same shape.
template <typename T>
Var<T> spatial_attention(Var<T> q, Var<T> k, Var<T> v);

// Sum of all elements, returned as a one-element tensor.
template <typename T>
Var<T> sum(Var<T> x);

// mean((prediction - target)^2) over all elements.
template <typename T>
Var<T> mse(Var<T> prediction, const Tensor<T>& target);

}  // namespace ad

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace sardd
