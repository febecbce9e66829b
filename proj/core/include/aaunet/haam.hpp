#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "aaunet/autograd.hpp"
#include "aaunet/ops.hpp"
#include "aaunet/random.hpp"

namespace aaunet {

/// Block flavours: the full hybrid attention module and its ablations.
enum class Variant {
  full,
  channel_only,
  spatial_only,
  small_receptive_field,
  plain_conv,
};

inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::plain_conv, Variant::channel_only, Variant::spatial_only,
    Variant::small_receptive_field, Variant::full};

std::string_view variant_name(Variant v);
/// Throws std::invalid_argument("unknown variant tag ...") for unrecognised names.
Variant parse_variant(std::string_view name);
/// Row label used in ablation tables.
std::string_view variant_title(Variant v);

bool has_channel_attention(Variant v);
bool has_spatial_attention(Variant v);

struct BranchGeometry {
  std::int64_t kernel;
  std::int64_t dilation;
  /// Zero padding that keeps the spatial extent.
  std::int64_t padding() const { return dilation * (kernel - 1) / 2; }
  /// Span of input pixels covered by one tap pattern.
  std::int64_t effective_extent() const { return dilation * (kernel - 1) + 1; }
};

/// Kernel geometry of the local, wide and dilated branches.
std::array<BranchGeometry, 3> branch_geometry(Variant v);

struct HaamConfig {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  /// Branch width; 0 means "same as out_channels".
  std::int64_t mid_channels = 0;
  std::int64_t reduction_ratio = 4;
  Variant variant = Variant::full;

  std::int64_t mid() const { return mid_channels > 0 ? mid_channels : out_channels; }
  std::int64_t bottleneck() const { return mid() / reduction_ratio; }
  /// Throws std::invalid_argument on non-positive widths or an empty bottleneck.
  void validate() const;
};

template <typename T>
struct ConvParams {
  Var<T> weight;
  Var<T> bias;
  std::int64_t kernel = 1;
  Conv2dOptions options{};

  Var<T> apply(const Var<T>& x) const { return conv2d(x, weight, bias, options); }
  explicit operator bool() const { return static_cast<bool>(weight); }
};

/// Registers a Kaiming-uniform (fan-in) weight and a zero bias under `name`.
template <typename T>
ConvParams<T> make_conv(ParameterStore<T>& store, const std::string& name, std::int64_t in_c,
                        std::int64_t out_c, std::int64_t kernel, std::int64_t dilation, Rng& rng);

/// Squeeze/excite pair that turns the pooled fused branches into the
/// channel gate.
template <typename T>
struct ChannelAttentionParams {
  ConvParams<T> squeeze;  // mid -> mid / ratio
  ConvParams<T> excite;   // mid / ratio -> mid
};

template <typename T>
struct ChannelAttentionResult {
  Var<T> alpha;            // (n, mid, 1, 1)
  Var<T> one_minus_alpha;  // 1 - alpha
  Var<T> f_c_s;            // (1 - alpha) * f5
  Var<T> f_c_d;            // alpha * fd
};

/// Sum-fuse the wide and dilated branches, pool, squeeze/excite and gate:
/// alpha weights the dilated branch and 1 - alpha the wide branch.
template <typename T>
ChannelAttentionResult<T> channel_attention(const Var<T>& f5, const Var<T>& fd,
                                            const ChannelAttentionParams<T>& params);

template <typename T>
struct SpatialAttentionParams {
  ConvParams<T> local;  // 1x1, mid -> mid, applied to the 3x3 branch
  ConvParams<T> fused;  // 1x1, 2*mid -> mid, applied to the channel-calibrated pair
  ConvParams<T> gate;   // 1x1, mid -> 1
  ConvParams<T> out;    // 1x1, 2*mid -> out
};

template <typename T>
struct SpatialAttentionResult {
  Var<T> s1;              // local projection of f3
  Var<T> cs1;             // projection of the fused input
  Var<T> beta;            // (n, 1, h, w)
  Var<T> one_minus_beta;  // 1 - beta
  Var<T> cs1_cal;         // beta * cs1
  Var<T> s1_cal;          // (1 - beta) * s1
  Var<T> out;
};

/// Pixelwise gate between the local projection and the multi-scale
/// projection. `fused` must have twice the channels of `f3`.
template <typename T>
SpatialAttentionResult<T> spatial_attention(const Var<T>& f3, const Var<T>& fused,
                                            const SpatialAttentionParams<T>& params);

/// Attention maps produced by one block. Accessing a map the variant does
/// not compute throws std::logic_error.
template <typename T>
class AttentionMaps {
 public:
  AttentionMaps() = default;
  AttentionMaps(std::optional<Tensor<T>> alpha, std::optional<Tensor<T>> beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)) {}

  bool has_alpha() const { return alpha_.has_value(); }
  bool has_beta() const { return beta_.has_value(); }
  const Tensor<T>& alpha() const;
  const Tensor<T>& beta() const;

 private:
  std::optional<Tensor<T>> alpha_;
  std::optional<Tensor<T>> beta_;
};

/// Every intermediate of one forward pass. Members a variant does not
/// compute are null.
template <typename T>
struct HaamTrace {
  Var<T> f3, f5, fd;
  ChannelAttentionResult<T> channel;
  SpatialAttentionResult<T> spatial;
  Var<T> out;

  AttentionMaps<T> maps() const;
};

/// One hybrid adaptive attention block (or one of its ablations).
template <typename T>
class HaamBlock {
 public:
  /// Registers this block's parameters in `store` under `prefix`.
  HaamBlock(const HaamConfig& cfg, ParameterStore<T>& store, const std::string& prefix, Rng& rng);

  Var<T> forward(const Var<T>& x) const { return forward_traced(x).out; }
  HaamTrace<T> forward_traced(const Var<T>& x) const;

  const HaamConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

 private:
  HaamConfig cfg_;
  std::string prefix_;
  ConvParams<T> conv3_, conv5_, convd_;
  ChannelAttentionParams<T> channel_;
  SpatialAttentionParams<T> spatial_;
  ConvParams<T> channel_out_;  // channel_only output projection
  ConvParams<T> plain_;        // plain_conv 3x3
};

/// Builds the block for `cfg.variant`.
template <typename T>
HaamBlock<T> build_variant(const HaamConfig& cfg, ParameterStore<T>& store,
                           const std::string& prefix, Rng& rng) {
  return HaamBlock<T>(cfg, store, prefix, rng);
}

extern template class HaamBlock<float>;
extern template class HaamBlock<double>;

}  // namespace aaunet
