#include "aaunet/haam.hpp"

#include <cmath>
#include <stdexcept>

namespace aaunet {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::channel_only: return "channel_only";
    case Variant::spatial_only: return "spatial_only";
    case Variant::small_receptive_field: return "small_receptive_field";
    case Variant::plain_conv: return "plain_conv";
  }
  throw std::invalid_argument("unknown variant tag");
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant tag '" + std::string(name) +
                              "' (expected full, channel_only, spatial_only, "
                              "small_receptive_field or plain_conv)");
}

std::string_view variant_title(Variant v) {
  switch (v) {
    case Variant::plain_conv: return "Baseline U-net";
    case Variant::channel_only: return "U-net with channel self-attention block";
    case Variant::spatial_only: return "U-net with spatial self-attention block";
    case Variant::small_receptive_field: return "U-net with HAAM (Small receptive fields)";
    case Variant::full: return "U-net with HAAM";
  }
  throw std::invalid_argument("unknown variant tag");
}

bool has_channel_attention(Variant v) {
  return v == Variant::full || v == Variant::channel_only || v == Variant::small_receptive_field;
}

bool has_spatial_attention(Variant v) {
  return v == Variant::full || v == Variant::spatial_only || v == Variant::small_receptive_field;
}

std::array<BranchGeometry, 3> branch_geometry(Variant v) {
  if (v == Variant::small_receptive_field) return {{{3, 1}, {3, 1}, {3, 2}}};
  return {{{3, 1}, {5, 1}, {3, 3}}};
}

void HaamConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("HaamConfig: in_channels must be >= 1");
  if (out_channels < 1) throw std::invalid_argument("HaamConfig: out_channels must be >= 1");
  if (mid_channels < 0) throw std::invalid_argument("HaamConfig: mid_channels must be >= 0");
  if (reduction_ratio < 1) throw std::invalid_argument("HaamConfig: reduction_ratio must be >= 1");
  if (has_channel_attention(variant) && bottleneck() < 1) {
    throw std::invalid_argument("HaamConfig: mid_channels / reduction_ratio must be >= 1 (mid " +
                                std::to_string(mid()) + ", ratio " +
                                std::to_string(reduction_ratio) + ")");
  }
}

template <typename T>
ConvParams<T> make_conv(ParameterStore<T>& store, const std::string& name, std::int64_t in_c,
                        std::int64_t out_c, std::int64_t kernel, std::int64_t dilation, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_c * kernel * kernel));
  Tensor<T> w(Shape{out_c, in_c, kernel, kernel});
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  ConvParams<T> conv;
  conv.weight = store.add(name + ".weight", std::move(w));
  conv.bias = store.add(name + ".bias", Tensor<T>(Shape{1, out_c, 1, 1}));
  conv.kernel = kernel;
  conv.options = Conv2dOptions{1, dilation * (kernel - 1) / 2, dilation};
  return conv;
}

template <typename T>
ChannelAttentionResult<T> channel_attention(const Var<T>& f5, const Var<T>& fd,
                                            const ChannelAttentionParams<T>& params) {
  if (f5->value.shape() != fd->value.shape()) {
    throw ShapeError("channel_attention: branch shapes " + to_string(f5->value.shape()) +
                     " and " + to_string(fd->value.shape()) + " differ");
  }
  const Var<T> fused = add(f5, fd);
  const Var<T> pooled = global_average_pool(fused);
  const Var<T> squeezed = relu(params.squeeze.apply(pooled));
  ChannelAttentionResult<T> r;
  r.alpha = sigmoid(params.excite.apply(squeezed));
  r.one_minus_alpha = one_minus(r.alpha);
  r.f_c_d = broadcast_mul(r.alpha, fd);
  r.f_c_s = broadcast_mul(r.one_minus_alpha, f5);
  return r;
}

template <typename T>
SpatialAttentionResult<T> spatial_attention(const Var<T>& f3, const Var<T>& fused,
                                            const SpatialAttentionParams<T>& params) {
  const Shape ls = f3->value.shape();
  const Shape fs = fused->value.shape();
  if (fs.c != 2 * ls.c) {
    throw ShapeError("spatial_attention: fused input has " + std::to_string(fs.c) +
                     " channels, expected 2 * " + std::to_string(ls.c));
  }
  SpatialAttentionResult<T> r;
  r.s1 = params.local.apply(f3);
  r.cs1 = params.fused.apply(fused);
  r.beta = sigmoid(params.gate.apply(relu(add(r.s1, r.cs1))));
  r.one_minus_beta = one_minus(r.beta);
  r.cs1_cal = broadcast_mul(r.beta, r.cs1);
  r.s1_cal = broadcast_mul(r.one_minus_beta, r.s1);
  r.out = params.out.apply(concat_channels(r.cs1_cal, r.s1_cal));
  return r;
}

template <typename T>
const Tensor<T>& AttentionMaps<T>::alpha() const {
  if (!alpha_) throw std::logic_error("this block variant has no channel attention map");
  return *alpha_;
}

template <typename T>
const Tensor<T>& AttentionMaps<T>::beta() const {
  if (!beta_) throw std::logic_error("this block variant has no spatial attention map");
  return *beta_;
}

template <typename T>
AttentionMaps<T> HaamTrace<T>::maps() const {
  std::optional<Tensor<T>> a;
  std::optional<Tensor<T>> b;
  if (channel.alpha) a = channel.alpha->value;
  if (spatial.beta) b = spatial.beta->value;
  return AttentionMaps<T>(std::move(a), std::move(b));
}

template <typename T>
HaamBlock<T>::HaamBlock(const HaamConfig& cfg, ParameterStore<T>& store,
                        const std::string& prefix, Rng& rng)
    : cfg_(cfg), prefix_(prefix) {
  cfg_.validate();
  const std::int64_t in = cfg_.in_channels;
  const std::int64_t mid = cfg_.mid();
  const std::int64_t out = cfg_.out_channels;
  const Variant v = cfg_.variant;
  const auto p = [&](const char* leaf) { return prefix_ + "." + leaf; };

  if (v == Variant::plain_conv) {
    plain_ = make_conv(store, p("conv"), in, out, 3, 1, rng);
    return;
  }
  const auto geo = branch_geometry(v);
  if (v != Variant::channel_only) {
    conv3_ = make_conv(store, p("conv3"), in, mid, geo[0].kernel, geo[0].dilation, rng);
  }
  conv5_ = make_conv(store, p("conv5"), in, mid, geo[1].kernel, geo[1].dilation, rng);
  convd_ = make_conv(store, p("convd"), in, mid, geo[2].kernel, geo[2].dilation, rng);
  if (has_channel_attention(v)) {
    channel_.squeeze = make_conv(store, p("ca_squeeze"), mid, cfg_.bottleneck(), 1, 1, rng);
    channel_.excite = make_conv(store, p("ca_excite"), cfg_.bottleneck(), mid, 1, 1, rng);
  }
  if (v == Variant::channel_only) {
    channel_out_ = make_conv(store, p("ca_out"), 2 * mid, out, 1, 1, rng);
  }
  if (has_spatial_attention(v)) {
    spatial_.local = make_conv(store, p("sa_local"), mid, mid, 1, 1, rng);
    spatial_.fused = make_conv(store, p("sa_fused"), 2 * mid, mid, 1, 1, rng);
    spatial_.gate = make_conv(store, p("sa_gate"), mid, 1, 1, 1, rng);
    spatial_.out = make_conv(store, p("sa_out"), 2 * mid, out, 1, 1, rng);
  }
}

template <typename T>
HaamTrace<T> HaamBlock<T>::forward_traced(const Var<T>& x) const {
  const Shape xs = x->value.shape();
  if (xs.c != cfg_.in_channels) {
    throw ShapeError(prefix_ + ": input has " + std::to_string(xs.c) + " channels, expected " +
                     std::to_string(cfg_.in_channels));
  }
  HaamTrace<T> t;
  const Variant v = cfg_.variant;
  if (v == Variant::plain_conv) {
    t.out = relu(plain_.apply(x));
    return t;
  }
  if (conv3_) t.f3 = relu(conv3_.apply(x));
  t.f5 = relu(conv5_.apply(x));
  t.fd = relu(convd_.apply(x));

  if (has_channel_attention(v)) t.channel = channel_attention(t.f5, t.fd, channel_);

  if (v == Variant::channel_only) {
    t.out = channel_out_.apply(concat_channels(t.channel.f_c_s, t.channel.f_c_d));
    return t;
  }
  const Var<T> fused = v == Variant::spatial_only
                           ? concat_channels(t.f5, t.fd)
                           : concat_channels(t.channel.f_c_s, t.channel.f_c_d);
  t.spatial = spatial_attention(t.f3, fused, spatial_);
  t.out = t.spatial.out;
  return t;
}

#define AAUNET_INSTANTIATE_HAAM(T)                                                           \
  template ConvParams<T> make_conv(ParameterStore<T>&, const std::string&, std::int64_t,     \
                                   std::int64_t, std::int64_t, std::int64_t, Rng&);          \
  template ChannelAttentionResult<T> channel_attention(const Var<T>&, const Var<T>&,         \
                                                       const ChannelAttentionParams<T>&);    \
  template SpatialAttentionResult<T> spatial_attention(const Var<T>&, const Var<T>&,         \
                                                       const SpatialAttentionParams<T>&);    \
  template class AttentionMaps<T>;                                                           \
  template struct HaamTrace<T>;                                                              \
  template class HaamBlock<T>;

AAUNET_INSTANTIATE_HAAM(float)
AAUNET_INSTANTIATE_HAAM(double)

}  // namespace aaunet
