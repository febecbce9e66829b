#include "aaunet/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "aaunet/haam.hpp"
#include "aaunet/model.hpp"
#include "aaunet/ops.hpp"
#include "aaunet/training.hpp"

namespace aaunet {

bool GradCheckReport::all_passed() const {
  return !cases.empty() &&
         std::all_of(cases.begin(), cases.end(), [](const GradCheckCase& c) { return c.passed; });
}

namespace {

// (4 D(h/2) - D(h)) / 3 with D the central difference; cancels the h^2 term.
// When D(h) and D(h/2) disagree by more than a smooth function allows, a
// ReLU kink lies inside the stencil and the step shrinks. Restores `x`.
template <typename F>
double richardson_difference(double& x, double h, F&& eval) {
  const double orig = x;
  const auto central = [&](double step) {
    x = orig + step;
    const double up = eval();
    x = orig - step;
    const double down = eval();
    x = orig;
    return (up - down) / (2.0 * step);
  };
  const double f0 = std::abs(eval());
  double wide = central(h);
  double narrow = central(0.5 * h);
  for (int shrink = 0; shrink < 6; ++shrink) {
    // Smooth h^2 drift plus the rounding floor of the difference quotient.
    const double allowed = 1e-8 * std::max(std::abs(narrow), 1.0) +
                           64.0 * std::numeric_limits<double>::epsilon() * f0 / h;
    if (std::abs(wide - narrow) <= allowed) break;
    h /= 4.0;
    wide = central(h);
    narrow = central(0.5 * h);
  }
  return (4.0 * narrow - wide) / 3.0;
}

}  // namespace

GradCheckCase check_gradients(const std::string& name,
                              const std::function<Var<double>()>& loss_fn,
                              const std::vector<Var<double>>& inputs, Rng& rng,
                              const GradCheckOptions& opt) {
  for (const auto& v : inputs) v->grad.reset();
  backward(loss_fn());
  std::vector<Tensor<double>> analytic;
  for (const auto& v : inputs) {
    analytic.push_back(v->grad ? *v->grad : Tensor<double>(v->value.shape()));
  }

  GradCheckCase result;
  result.name = name;
  result.tolerance = opt.rtol;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor<double>& x = inputs[t]->value;
    std::vector<std::int64_t> elems;
    if (opt.max_elements > 0 && x.numel() > opt.max_elements) {
      for (std::int64_t k = 0; k < opt.max_elements; ++k) {
        elems.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(x.numel()))));
      }
    } else {
      for (std::int64_t k = 0; k < x.numel(); ++k) elems.push_back(k);
    }
    for (const std::int64_t i : elems) {
      const double numeric = richardson_difference(x[i], opt.step, [&] { return loss_fn()->value.item(); });
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.elements_checked;
    }
  }
  result.passed = result.max_rel_error < opt.rtol;
  return result;
}

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Values bounded away from zero so ReLU kinks sit outside the FD stencil.
Tensor<double> kink_free_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.data()) {
    do {
      v = rng.normal();
    } while (std::abs(v) < 1e-2);
  }
  return t;
}

// Contracts `out` against a fixed random tensor so every element matters.
Var<double> probe(const Var<double>& out, const Tensor<double>& weights) {
  return sum(mul(out, constant(weights)));
}

}  // namespace

GradCheckReport run_gradient_suite(std::uint64_t seed, bool include_model) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  GradCheckReport report;
  const Shape base{2, 4, 8, 8};

  const auto conv_case = [&](const std::string& name, std::int64_t k, Conv2dOptions opt) {
    auto x = leaf(random_tensor(base, rng), true);
    auto w = leaf(random_tensor(Shape{3, base.c, k, k}, rng, 0.5), true);
    auto b = leaf(random_tensor(Shape{1, 3, 1, 1}, rng), true);
    const Shape os{base.n, 3, conv_output_extent(base.h, k, opt), conv_output_extent(base.w, k, opt)};
    const auto r = random_tensor(os, rng);
    report.cases.push_back(check_gradients(
        name, [&] { return probe(conv2d(x, w, b, opt), r); }, {x, w, b}, rng));
  };
  conv_case("conv2d 3x3 pad 1", 3, {1, 1, 1});
  conv_case("conv2d 5x5 pad 2", 5, {1, 2, 1});
  conv_case("conv2d 3x3 dilation 3 pad 3", 3, {1, 3, 3});
  conv_case("conv2d 3x3 dilation 2 pad 2", 3, {1, 2, 2});
  conv_case("conv2d 1x1", 1, {1, 0, 1});
  conv_case("conv2d 3x3 stride 2", 3, {2, 1, 1});

  const auto unary_case = [&](const std::string& name, auto op, Tensor<double> input,
                              Shape out_shape) {
    auto x = leaf(std::move(input), true);
    const auto r = random_tensor(out_shape, rng);
    report.cases.push_back(check_gradients(name, [&] { return probe(op(x), r); }, {x}, rng));
  };
  const Shape pooled{2, 4, 4, 4};
  unary_case("max_pool_2x2", [](const Var<double>& v) { return max_pool_2x2(v); },
             random_tensor(base, rng), pooled);
  unary_case("upsample_nearest_2x", [](const Var<double>& v) { return upsample_nearest_2x(v); },
             random_tensor(pooled, rng), base);
  unary_case("sigmoid", [](const Var<double>& v) { return sigmoid(v); },
             random_tensor(base, rng, 3.0), base);
  unary_case("relu", [](const Var<double>& v) { return relu(v); }, kink_free_tensor(base, rng),
             base);
  unary_case("one_minus", [](const Var<double>& v) { return one_minus(v); },
             random_tensor(base, rng), base);
  unary_case("scale", [](const Var<double>& v) { return scale(v, 2.5); },
             random_tensor(base, rng), base);
  unary_case("global_average_pool",
             [](const Var<double>& v) { return global_average_pool(v); },
             random_tensor(base, rng), Shape{2, 4, 1, 1});
  unary_case("slice_channels", [](const Var<double>& v) { return slice_channels(v, 1, 2); },
             random_tensor(base, rng), Shape{2, 2, 8, 8});
  unary_case("mean", [](const Var<double>& v) { return mean(v); }, random_tensor(base, rng),
             Shape{1, 1, 1, 1});

  const auto binary_case = [&](const std::string& name, auto op, Tensor<double> a_val,
                               Tensor<double> b_val, Shape out_shape) {
    auto a = leaf(std::move(a_val), true);
    auto b = leaf(std::move(b_val), true);
    const auto r = random_tensor(out_shape, rng);
    report.cases.push_back(
        check_gradients(name, [&] { return probe(op(a, b), r); }, {a, b}, rng));
  };
  const auto add_op = [](const Var<double>& a, const Var<double>& b) { return add(a, b); };
  const auto mul_op = [](const Var<double>& a, const Var<double>& b) { return mul(a, b); };
  const auto cat_op = [](const Var<double>& a, const Var<double>& b) {
    return concat_channels(a, b);
  };
  const auto bmul_op = [](const Var<double>& a, const Var<double>& b) {
    return broadcast_mul(a, b);
  };
  binary_case("add", add_op, random_tensor(base, rng), random_tensor(base, rng), base);
  binary_case("mul", mul_op, random_tensor(base, rng), random_tensor(base, rng), base);
  binary_case("concat_channels", cat_op, random_tensor(base, rng),
              random_tensor(Shape{2, 3, 8, 8}, rng), Shape{2, 7, 8, 8});
  binary_case("broadcast_mul channel map", bmul_op, random_tensor(Shape{2, 4, 1, 1}, rng),
              random_tensor(base, rng), base);
  binary_case("broadcast_mul spatial map", bmul_op, random_tensor(Shape{2, 1, 8, 8}, rng),
              random_tensor(base, rng), base);

  {
    // Interior predictions plus entries held by the clamp on both sides.
    Tensor<double> p(Shape{2, 1, 8, 8});
    Tensor<double> y(p.shape());
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      p[i] = rng.uniform(0.02, 0.98);
      y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    // Clamp at 0.01 so the stencil around 1e-3 / 1 - 1e-3 stays clamped.
    p[0] = 1e-3;
    p[1] = 1.0 - 1e-3;
    y[2] = 0.3;
    auto pv = leaf(p, true);
    for (LossReduction red : {LossReduction::mean, LossReduction::sum}) {
      report.cases.push_back(check_gradients(
          std::string("bce_loss ") + std::string(reduction_name(red)),
          [&] { return bce_loss(pv, y, red, 0.01); }, {pv}, rng));
    }
  }

  {
    ParameterStore<double> store;
    const std::int64_t mid = 4;
    ChannelAttentionParams<double> cp{make_conv(store, "sq", mid, 2, 1, 1, rng),
                                      make_conv(store, "ex", 2, mid, 1, 1, rng)};
    for (auto& p : store.all()) {
      for (auto& v : p.mutable_value().data()) v = rng.normal();
    }
    auto f5 = leaf(kink_free_tensor(base, rng), true);
    auto fd = leaf(kink_free_tensor(base, rng), true);
    const auto r1 = random_tensor(base, rng);
    const auto r2 = random_tensor(base, rng);
    std::vector<Var<double>> inputs{f5, fd};
    for (auto& p : store.all()) inputs.push_back(p.node);
    report.cases.push_back(check_gradients(
        "channel_attention",
        [&] {
          auto r = channel_attention(f5, fd, cp);
          return add(probe(r.f_c_s, r1), probe(r.f_c_d, r2));
        },
        inputs, rng));
  }

  {
    ParameterStore<double> store;
    const std::int64_t mid = 4;
    SpatialAttentionParams<double> sp{make_conv(store, "local", mid, mid, 1, 1, rng),
                                      make_conv(store, "fused", 2 * mid, mid, 1, 1, rng),
                                      make_conv(store, "gate", mid, 1, 1, 1, rng),
                                      make_conv(store, "out", 2 * mid, 5, 1, 1, rng)};
    for (auto& p : store.all()) {
      for (auto& v : p.mutable_value().data()) v = 0.5 * rng.normal();
    }
    auto f3 = leaf(random_tensor(base, rng), true);
    auto fused = leaf(random_tensor(Shape{2, 8, 8, 8}, rng), true);
    const auto r = random_tensor(Shape{2, 5, 8, 8}, rng);
    std::vector<Var<double>> inputs{f3, fused};
    for (auto& p : store.all()) inputs.push_back(p.node);
    report.cases.push_back(check_gradients(
        "spatial_attention", [&] { return probe(spatial_attention(f3, fused, sp).out, r); },
        inputs, rng));
  }

  for (Variant v : kAllVariants) {
    ParameterStore<double> store;
    HaamConfig cfg;
    cfg.in_channels = 3;
    cfg.out_channels = 4;
    cfg.reduction_ratio = 2;
    cfg.variant = v;
    HaamBlock<double> block(cfg, store, "haam", rng);
    for (auto& p : store.all()) {
      if (p.name.ends_with(".bias")) {
        for (auto& b : p.mutable_value().data()) b = 0.1 * rng.normal();
      }
    }
    auto x = leaf(random_tensor(Shape{2, 3, 8, 8}, rng), true);
    const auto r = random_tensor(Shape{2, 4, 8, 8}, rng);
    std::vector<Var<double>> inputs{x};
    for (auto& p : store.all()) inputs.push_back(p.node);
    report.cases.push_back(check_gradients("haam " + std::string(variant_name(v)),
                                           [&] { return probe(block.forward(x), r); }, inputs,
                                           rng));
  }

  if (include_model) {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.base_width = 4;
    cfg.height = 16;
    cfg.width = 16;
    AauNet<double> model(cfg, seed);
    const auto x = random_tensor(Shape{1, 1, 16, 16}, rng).cast<double>();
    Tensor<double> target(Shape{1, 1, 16, 16});
    for (auto& v : target.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    auto& params = model.params().all();

    // 50 (parameter, element) pairs drawn uniformly over all scalars.
    const std::int64_t total = model.params().scalar_count();
    std::vector<std::pair<std::size_t, std::int64_t>> picks;
    for (int k = 0; k < 50; ++k) {
      std::int64_t flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
      std::size_t pi = 0;
      while (flat >= params[pi].value().numel()) flat -= params[pi++].value().numel();
      picks.emplace_back(pi, flat);
    }
    const auto loss_fn = [&] { return bce_loss(model.forward(constant(x)), target); };
    model.params().zero_grad();
    backward(loss_fn());
    GradCheckCase c;
    c.name = "aaunet depth 2 base 4 16x16 (50 parameters)";
    c.tolerance = 1e-4;
    {
      NoGradGuard no_grad;
      const double h = 1e-4;
      for (const auto& [pi, ei] : picks) {
        Tensor<double>& w = params[pi].mutable_value();
        const double a = params[pi].node->grad ? (*params[pi].node->grad)[ei] : 0.0;
        const double n = richardson_difference(w[ei], h, [&] { return loss_fn()->value.item(); });
        const double denom = std::max({std::abs(a), std::abs(n), 1e-3});
        c.max_rel_error = std::max(c.max_rel_error, std::abs(a - n) / denom);
        ++c.elements_checked;
      }
    }
    c.passed = c.max_rel_error < c.tolerance;
    report.cases.push_back(c);
  }

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace aaunet
