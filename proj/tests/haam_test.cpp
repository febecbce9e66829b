#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "aaunet/haam.hpp"
#include "support/haam_oracle.hpp"

namespace aaunet {
namespace {

using TD = Tensor<double>;

TD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  TD t(s);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

void randomize_biases(ParameterStore<double>& store, Rng& rng) {
  for (auto& p : store.all()) {
    if (p.name.ends_with(".bias")) {
      for (auto& b : p.mutable_value().data()) b = 0.1 * rng.normal();
    }
  }
}

void zero_parameter(ParameterStore<double>& store, const std::string& name) {
  auto* p = store.find(name);
  ASSERT_NE(p, nullptr) << name;
  p->mutable_value().fill(0.0);
}

HaamConfig config(std::int64_t in, std::int64_t out, Variant v, std::int64_t ratio = 4) {
  HaamConfig cfg;
  cfg.in_channels = in;
  cfg.out_channels = out;
  cfg.reduction_ratio = ratio;
  cfg.variant = v;
  return cfg;
}

TEST(Variant, NamesRoundTrip) {
  for (Variant v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  try {
    parse_variant("resnet");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("unknown variant tag"), std::string::npos);
  }
}

TEST(Variant, BranchGeometry) {
  const auto full = branch_geometry(Variant::full);
  EXPECT_EQ(full[0].kernel, 3);
  EXPECT_EQ(full[1].kernel, 5);
  EXPECT_EQ(full[2].kernel, 3);
  EXPECT_EQ(full[2].dilation, 3);
  EXPECT_EQ(full[2].effective_extent(), 7);
  const auto small = branch_geometry(Variant::small_receptive_field);
  for (const auto& g : small) EXPECT_EQ(g.kernel, 3);
  EXPECT_EQ(small[2].dilation, 2);
  EXPECT_EQ(small[2].effective_extent(), 5);
  EXPECT_LT(small[2].effective_extent(), full[2].effective_extent());
}

TEST(HaamConfig, Validation) {
  EXPECT_NO_THROW(config(1, 8, Variant::full).validate());
  EXPECT_THROW(config(0, 8, Variant::full).validate(), std::invalid_argument);
  EXPECT_THROW(config(1, 2, Variant::full, 4).validate(), std::invalid_argument);
}

TEST(Haam, ShapeContractAllVariants) {
  for (Variant v : kAllVariants) {
    ParameterStore<double> store;
    Rng rng(1);
    HaamBlock<double> block(config(8, 16, v), store, "b", rng);
    const auto out = block.forward(constant(random_tensor(Shape{1, 8, 16, 16}, rng)));
    EXPECT_EQ(out->value.shape(), (Shape{1, 16, 16, 16})) << variant_name(v);
    const auto odd = block.forward(constant(random_tensor(Shape{2, 8, 5, 7}, rng)));
    EXPECT_EQ(odd->value.shape(), (Shape{2, 16, 5, 7})) << variant_name(v);
  }
}

TEST(Haam, ChannelMismatchThrows) {
  ParameterStore<double> store;
  Rng rng(1);
  HaamBlock<double> block(config(3, 4, Variant::full), store, "b", rng);
  EXPECT_THROW(block.forward(constant(TD(Shape{1, 2, 8, 8}))), ShapeError);
}

TEST(Haam, PlainConvHasNoMaps) {
  ParameterStore<double> store;
  Rng rng(1);
  HaamBlock<double> block(config(8, 16, Variant::plain_conv), store, "b", rng);
  const auto maps = block.forward_traced(constant(TD(Shape{1, 8, 16, 16}))).maps();
  EXPECT_FALSE(maps.has_alpha());
  EXPECT_FALSE(maps.has_beta());
  EXPECT_THROW(maps.alpha(), std::logic_error);
  EXPECT_THROW(maps.beta(), std::logic_error);
}

TEST(Haam, VariantSpecificMaps) {
  Rng rng(2);
  for (Variant v : kAllVariants) {
    ParameterStore<double> store;
    HaamBlock<double> block(config(2, 4, v, 2), store, "b", rng);
    const auto maps = block.forward_traced(constant(random_tensor(Shape{1, 2, 6, 6}, rng))).maps();
    EXPECT_EQ(maps.has_alpha(), has_channel_attention(v)) << variant_name(v);
    EXPECT_EQ(maps.has_beta(), has_spatial_attention(v)) << variant_name(v);
  }
}

TEST(ChannelAttention, ZeroInputsGiveHalfGates) {
  ParameterStore<double> store;
  Rng rng(3);
  ChannelAttentionParams<double> p{make_conv(store, "sq", 8, 2, 1, 1, rng),
                                   make_conv(store, "ex", 2, 8, 1, 1, rng)};
  const auto zero = constant(TD(Shape{2, 8, 4, 4}));
  const auto r = channel_attention(zero, zero, p);
  for (double a : r.alpha->value.data()) EXPECT_EQ(a, 0.5);
  for (double v : r.f_c_s->value.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.f_c_d->value.data()) EXPECT_EQ(v, 0.0);
}

TEST(ChannelAttention, ZeroedExciteGivesHalfCalibration) {
  ParameterStore<double> store;
  Rng rng(4);
  HaamBlock<double> block(config(3, 8, Variant::full), store, "b", rng);
  randomize_biases(store, rng);
  zero_parameter(store, "b.ca_excite.weight");
  zero_parameter(store, "b.ca_excite.bias");
  const auto t = block.forward_traced(constant(random_tensor(Shape{2, 3, 8, 8}, rng)));
  for (double a : t.channel.alpha->value.data()) EXPECT_EQ(a, 0.5);
  for (std::int64_t i = 0; i < t.fd->value.numel(); ++i) {
    EXPECT_EQ(t.channel.f_c_d->value[i], 0.5 * t.fd->value[i]);
    EXPECT_EQ(t.channel.f_c_s->value[i], 0.5 * t.f5->value[i]);
  }
}

TEST(ChannelAttention, BottleneckWidth) {
  ParameterStore<double> store;
  Rng rng(5);
  HaamBlock<double> block(config(4, 8, Variant::full, 4), store, "b", rng);
  EXPECT_EQ(store.find("b.ca_squeeze.weight")->value().shape(), (Shape{2, 8, 1, 1}));
  EXPECT_EQ(store.find("b.ca_excite.weight")->value().shape(), (Shape{8, 2, 1, 1}));
}

TEST(SpatialAttention, ZeroedGateGivesHalfBeta) {
  ParameterStore<double> store;
  Rng rng(6);
  HaamBlock<double> block(config(3, 5, Variant::full, 5), store, "b", rng);
  randomize_biases(store, rng);
  zero_parameter(store, "b.sa_gate.weight");
  zero_parameter(store, "b.sa_gate.bias");
  const auto t = block.forward_traced(constant(random_tensor(Shape{1, 3, 6, 6}, rng)));
  for (double b : t.spatial.beta->value.data()) EXPECT_EQ(b, 0.5);
  // out = 1x1(concat(0.5 * cs1, 0.5 * s1))
  const auto halves = concat_channels(scale(t.spatial.cs1, 0.5), scale(t.spatial.s1, 0.5));
  const auto* w = store.find("b.sa_out.weight");
  const auto* b = store.find("b.sa_out.bias");
  const auto expected = conv2d<double>(halves, w->node, b->node);
  for (std::int64_t i = 0; i < expected->value.numel(); ++i) {
    EXPECT_EQ(t.out->value[i], expected->value[i]);
  }
}

TEST(SpatialAttention, FusedWidthMustBeTwiceMid) {
  ParameterStore<double> store;
  Rng rng(7);
  SpatialAttentionParams<double> p{make_conv(store, "l", 4, 4, 1, 1, rng),
                                   make_conv(store, "f", 8, 4, 1, 1, rng),
                                   make_conv(store, "g", 4, 1, 1, 1, rng),
                                   make_conv(store, "o", 8, 3, 1, 1, rng)};
  EXPECT_THROW(spatial_attention(constant(TD(Shape{1, 4, 4, 4})), constant(TD(Shape{1, 6, 4, 4})), p),
               ShapeError);
}

// Replays the calibrated tensors from the exported gates and checks the range.
void expect_complementary(const HaamTrace<double>& t) {
  const auto maps = t.maps();
  if (maps.has_alpha()) {
    const TD& a = maps.alpha();
    for (double v : a.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    const TD& fd = t.fd->value;
    const TD& f5 = t.f5->value;
    for (std::int64_t n = 0; n < fd.shape().n; ++n)
      for (std::int64_t c = 0; c < fd.shape().c; ++c)
        for (std::int64_t y = 0; y < fd.shape().h; ++y)
          for (std::int64_t x = 0; x < fd.shape().w; ++x) {
            const double al = a.at(n, c, 0, 0);
            EXPECT_EQ(t.channel.f_c_d->value.at(n, c, y, x), al * fd.at(n, c, y, x));
            EXPECT_EQ(t.channel.f_c_s->value.at(n, c, y, x), (1.0 - al) * f5.at(n, c, y, x));
          }
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      EXPECT_EQ(t.channel.one_minus_alpha->value[i], 1.0 - a[i]);
    }
  }
  if (maps.has_beta()) {
    const TD& b = maps.beta();
    for (double v : b.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    const TD& cs1 = t.spatial.cs1->value;
    const TD& s1 = t.spatial.s1->value;
    for (std::int64_t n = 0; n < cs1.shape().n; ++n)
      for (std::int64_t c = 0; c < cs1.shape().c; ++c)
        for (std::int64_t y = 0; y < cs1.shape().h; ++y)
          for (std::int64_t x = 0; x < cs1.shape().w; ++x) {
            const double be = b.at(n, 0, y, x);
            EXPECT_EQ(t.spatial.cs1_cal->value.at(n, c, y, x), be * cs1.at(n, c, y, x));
            EXPECT_EQ(t.spatial.s1_cal->value.at(n, c, y, x), (1.0 - be) * s1.at(n, c, y, x));
          }
  }
}

TEST(Haam, ComplementaryGatesReplayExactly) {
  Rng rng(8);
  for (Variant v : kAllVariants) {
    if (v == Variant::plain_conv) continue;
    for (int trial = 0; trial < 5; ++trial) {
      ParameterStore<double> store;
      HaamBlock<double> block(config(3, 8, v), store, "b", rng);
      randomize_biases(store, rng);
      expect_complementary(block.forward_traced(constant(random_tensor(Shape{2, 3, 8, 8}, rng, 2.0))));
    }
  }
}

TEST(Haam, MatchesScalarOracle) {
  Rng rng(9);
  double worst = 0;
  for (Variant v : kAllVariants) {
    for (int trial = 0; trial < 6; ++trial) {
      const std::int64_t n = 1 + trial % 2;
      const std::int64_t in = 1 + trial % 4;
      const std::int64_t side = 4 + 2 * (trial % 3);
      ParameterStore<double> store;
      HaamBlock<double> block(config(in, 8, v), store, "b", rng);
      randomize_biases(store, rng);
      const TD x = random_tensor(Shape{n, in, side, side}, rng);
      const auto got = block.forward_traced(constant(x));
      const auto ref = oracle::haam(block.config(), store, "b", x);
      ASSERT_EQ(got.out->value.numel(), static_cast<std::int64_t>(ref.out.v.size()));
      for (std::int64_t i = 0; i < got.out->value.numel(); ++i) {
        worst = std::max(worst, std::abs(got.out->value[i] - ref.out.v[static_cast<std::size_t>(i)]));
      }
      const auto maps = got.maps();
      if (maps.has_alpha()) {
        for (std::int64_t i = 0; i < maps.alpha().numel(); ++i) {
          worst = std::max(worst, std::abs(maps.alpha()[i] - ref.alpha.v[static_cast<std::size_t>(i)]));
        }
      }
      if (maps.has_beta()) {
        for (std::int64_t i = 0; i < maps.beta().numel(); ++i) {
          worst = std::max(worst, std::abs(maps.beta()[i] - ref.beta.v[static_cast<std::size_t>(i)]));
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Haam, EveryParameterReceivesGradient) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    ParameterStore<double> store;
    // Four bottleneck units, so a fully inactive squeeze layer is unlikely.
    HaamBlock<double> block(config(3, 16, Variant::full), store, "b", rng);
    randomize_biases(store, rng);
    backward(sum(block.forward(constant(random_tensor(Shape{2, 3, 8, 8}, rng)))));
    for (const auto& p : store.all()) {
      ASSERT_TRUE(p.node->grad.has_value()) << p.name;
      double norm = 0;
      for (double g : p.node->grad->data()) norm += std::abs(g);
      EXPECT_GT(norm, 0.0) << p.name << " seed " << seed;
    }
  }
}

TEST(Haam, ParameterCountsOrdered) {
  const auto count = [](Variant v) {
    ParameterStore<double> store;
    Rng rng(1);
    HaamBlock<double> block(config(16, 16, v), store, "b", rng);
    return store.scalar_count();
  };
  EXPECT_GT(count(Variant::full), count(Variant::channel_only));
  EXPECT_GT(count(Variant::channel_only), count(Variant::plain_conv));
}

TEST(Haam, ParameterNamesAreHierarchical) {
  ParameterStore<float> store;
  Rng rng(1);
  HaamBlock<float> block(config(1, 8, Variant::full), store, "enc1.haam1", rng);
  for (const char* leaf : {"conv3", "conv5", "convd", "ca_squeeze", "ca_excite", "sa_local",
                           "sa_fused", "sa_gate", "sa_out"}) {
    EXPECT_NE(store.find(std::string("enc1.haam1.") + leaf + ".weight"), nullptr) << leaf;
    EXPECT_NE(store.find(std::string("enc1.haam1.") + leaf + ".bias"), nullptr) << leaf;
  }
  const auto* w5 = store.find("enc1.haam1.conv5.weight");
  EXPECT_EQ(w5->value().shape(), (Shape{8, 1, 5, 5}));
}

TEST(Haam, FloatAndDoubleAgree) {
  Rng rng(21);
  ParameterStore<double> sd;
  HaamBlock<double> bd(config(2, 8, Variant::full), sd, "b", rng);
  Rng rng2(21);
  ParameterStore<float> sf;
  HaamBlock<float> bf(config(2, 8, Variant::full), sf, "b", rng2);
  Rng data(4);
  const TD x = random_tensor(Shape{1, 2, 8, 8}, data);
  const auto od = bd.forward(constant(x));
  const auto of = bf.forward(constant(x.cast<float>()));
  for (std::int64_t i = 0; i < od->value.numel(); ++i) {
    EXPECT_NEAR(of->value[i], od->value[i], 1e-4);
  }
}

}  // namespace
}  // namespace aaunet
