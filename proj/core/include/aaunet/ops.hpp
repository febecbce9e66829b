#pragma once

#include <cstdint>

#include "aaunet/autograd.hpp"

namespace aaunet {

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t dilation = 1;
};

/// Spatial output extent of a convolution along one axis.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, const Conv2dOptions& opt);

/// Zero-padded direct convolution. `weight` is (out_c, in_c, k, k); `bias` is
/// (1, out_c, 1, 1) or null.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              const Conv2dOptions& opt = {});

/// 2x2 max pooling with stride 2. Ties route the gradient to the first
/// maximum in row-major order. Height and width must be even.
template <typename T>
Var<T> max_pool_2x2(const Var<T>& input);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Var<T> upsample_nearest_2x(const Var<T>& input);

/// Channel concatenation, `a` first.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// Channels [begin, begin + count).
template <typename T>
Var<T> slice_channels(const Var<T>& input, std::int64_t begin, std::int64_t count);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
template <typename T>
Var<T> relu(const Var<T>& a);
/// 1 - a, elementwise.
template <typename T>
Var<T> one_minus(const Var<T>& a);

/// `map` is (n, c, 1, 1) or (n, 1, h, w); it is broadcast over `features`
/// (n, c, h, w) and multiplied in.
template <typename T>
Var<T> broadcast_mul(const Var<T>& map, const Var<T>& features);

/// Per-channel spatial mean, (n, c, h, w) -> (n, c, 1, 1).
template <typename T>
Var<T> global_average_pool(const Var<T>& input);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Var<T> sum(const Var<T>& input);

template <typename T>
Var<T> mean(const Var<T>& input);

}  // namespace aaunet
