#include "aaunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace aaunet {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) +
         ", " + std::to_string(s.w) + ")";
}

void validate_shape(const Shape& s) {
  static constexpr const char* kNames[] = {"batch", "channels", "height", "width"};
  const auto d = s.dims();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 1) {
      throw ShapeError(std::string("tensor extent '") + kNames[i] + "' must be >= 1, got " +
                       std::to_string(d[i]));
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  validate_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  validate_shape(shape_);
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() requires a single-element tensor, shape is " + to_string(shape_));
  }
  return data_[0];
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("accumulate: shape " + to_string(other.shape_) + " vs " + to_string(shape_));
  }
  T* dst = data_.data();
  const T* src = other.data_.data();
  const std::size_t count = data_.size();
  for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape s) const {
  if (s.numel() != shape_.numel()) {
    throw ShapeError("reshape " + to_string(shape_) + " -> " + to_string(s) +
                     " changes element count");
  }
  return Tensor(s, data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
std::uint64_t checksum(const Tensor<T>& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const T v : t.data()) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: no tensors given");
  const Shape first = items.front().shape();
  Shape out_shape = first;
  out_shape.n = 0;
  for (const auto& t : items) {
    const Shape s = t.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("stack_batch: shape " + to_string(s) + " does not match " +
                       to_string(first));
    }
    out_shape.n += s.n;
  }
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(out_shape.numel()));
  for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
  return Tensor<T>(out_shape, std::move(data));
}

template <typename T>
Tensor<T> batch_row(const Tensor<T>& t, std::int64_t i) {
  const Shape s = t.shape();
  if (i < 0 || i >= s.n) throw ShapeError("batch_row: index out of range");
  const std::int64_t row = s.c * s.h * s.w;
  std::vector<T> data(t.data().begin() + i * row, t.data().begin() + (i + 1) * row);
  return Tensor<T>(Shape{1, s.c, s.h, s.w}, std::move(data));
}

template class Tensor<float>;
template class Tensor<double>;
template std::uint64_t checksum(const Tensor<float>&);
template std::uint64_t checksum(const Tensor<double>&);
template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);
template Tensor<float> batch_row(const Tensor<float>&, std::int64_t);
template Tensor<double> batch_row(const Tensor<double>&, std::int64_t);

}  // namespace aaunet
