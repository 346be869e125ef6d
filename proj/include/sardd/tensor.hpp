#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sardd {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. All dimensions are >= 1 and the element count always
// equals the product of the shape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1}, data_(1, T(0)) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() & { return data_; }
  std::span<const T> data() const& { return data_; }
  std::span<const T> data() && = delete;  // would dangle
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessors.
  T& at(int n, int c, int h, int w);
  const T& at(int n, int c, int h, int w) const;

  Tensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Throws DimensionError naming `what` unless the shapes are identical.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace sardd
