#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aaunet {

/// Raised when tensor extents disagree. The message names the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extents of a 4-D (batch, channels, height, width) tensor.
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  std::array<std::int64_t, 4> dims() const { return {n, c, h, w}; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Throws ShapeError unless every extent is at least one.
void validate_shape(const Shape& s);

/// Dense row-major NCHW storage. Values are owned; copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, T(0)); }
  static Tensor full(Shape shape, T v) { return Tensor(shape, v); }
  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>(index(n, c, y, x))];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>(index(n, c, y, x))];
  }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Scalar value of a (1,1,1,1) tensor.
  T item() const;

  void fill(T v);
  Tensor& operator+=(const Tensor& other);

  /// Reinterprets the extents; element count must match.
  Tensor reshaped(Shape s) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// FNV-1a over the raw bytes of the values; used for determinism checks.
template <typename T>
std::uint64_t checksum(const Tensor<T>& t);

/// Stacks tensors along the batch dimension. All must share (c, h, w).
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items);

/// Copies batch row `i` out as a (1, c, h, w) tensor.
template <typename T>
Tensor<T> batch_row(const Tensor<T>& t, std::int64_t i);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace aaunet
