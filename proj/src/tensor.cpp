#include "sardd/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "sardd/errors.hpp"

namespace sardd {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  std::size_t n = 1;
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    if (shape[axis] < 1) {
      throw DimensionError("tensor axis " + std::to_string(axis) + " has size " +
                           std::to_string(shape[axis]) + " (must be >= 1)");
    }
    n *= static_cast<std::size_t>(shape[axis]);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw DimensionError(what + ": shape " + shape_string(a) + " does not match " +
                         shape_string(b));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(data_.size()) + " values");
  }
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
const T& Tensor<T>::at(int n, int c, int h, int w) const {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace sardd
