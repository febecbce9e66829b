#pragma once

// Straight-line scalar reimplementation of the attention block. Uses only
// raw parameter values and nested loops; no op from the library is called.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aaunet/autograd.hpp"
#include "aaunet/haam.hpp"

namespace oracle {

struct Plane {
  std::int64_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::int64_t n_, std::int64_t c_, std::int64_t h_, std::int64_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_ * c_ * h_ * w_), 0.0) {}

  double& at(std::int64_t i, std::int64_t ch, std::int64_t y, std::int64_t x) {
    return v[static_cast<std::size_t>(((i * c + ch) * h + y) * w + x)];
  }
  double at(std::int64_t i, std::int64_t ch, std::int64_t y, std::int64_t x) const {
    return v[static_cast<std::size_t>(((i * c + ch) * h + y) * w + x)];
  }
};

inline Plane from_tensor(const aaunet::Tensor<double>& t) {
  const auto s = t.shape();
  Plane p(s.n, s.c, s.h, s.w);
  for (std::int64_t i = 0; i < t.numel(); ++i) p.v[static_cast<std::size_t>(i)] = t[i];
  return p;
}

inline const aaunet::Tensor<double>& param(const aaunet::ParameterStore<double>& store,
                                           const std::string& name) {
  const auto* p = store.find(name);
  if (p == nullptr) throw std::runtime_error("oracle: missing parameter " + name);
  return p->value();
}

// Zero-padded stride-1 convolution keeping the spatial size.
inline Plane conv(const Plane& x, const aaunet::Tensor<double>& w,
                  const aaunet::Tensor<double>& b, std::int64_t dilation) {
  const auto ws = w.shape();
  const std::int64_t k = ws.h;
  const std::int64_t pad = dilation * (k - 1) / 2;
  Plane out(x.n, ws.n, x.h, x.w);
  for (std::int64_t i = 0; i < x.n; ++i) {
    for (std::int64_t o = 0; o < ws.n; ++o) {
      for (std::int64_t y = 0; y < x.h; ++y) {
        for (std::int64_t xx = 0; xx < x.w; ++xx) {
          double acc = b[o];
          for (std::int64_t ci = 0; ci < ws.c; ++ci) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t sy = y + ky * dilation - pad;
                const std::int64_t sx = xx + kx * dilation - pad;
                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                acc += w.at(o, ci, ky, kx) * x.at(i, ci, sy, sx);
              }
            }
          }
          out.at(i, o, y, xx) = acc;
        }
      }
    }
  }
  return out;
}

inline Plane relu(Plane p) {
  for (auto& v : p.v) v = v > 0 ? v : 0;
  return p;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Plane cat(const Plane& a, const Plane& b) {
  Plane out(a.n, a.c + b.c, a.h, a.w);
  for (std::int64_t i = 0; i < a.n; ++i) {
    for (std::int64_t ch = 0; ch < out.c; ++ch) {
      for (std::int64_t y = 0; y < a.h; ++y) {
        for (std::int64_t x = 0; x < a.w; ++x) {
          out.at(i, ch, y, x) = ch < a.c ? a.at(i, ch, y, x) : b.at(i, ch - a.c, y, x);
        }
      }
    }
  }
  return out;
}

struct Result {
  Plane out;
  Plane alpha;  // (n, mid, 1, 1) when present
  Plane beta;   // (n, 1, h, w) when present
  Plane f_c_s, f_c_d;
};

inline Result haam(const aaunet::HaamConfig& cfg, const aaunet::ParameterStore<double>& store,
                   const std::string& prefix, const aaunet::Tensor<double>& input) {
  using aaunet::Variant;
  const auto P = [&](const std::string& leaf) { return prefix + "." + leaf; };
  const auto W = [&](const std::string& leaf) { return param(store, P(leaf) + ".weight"); };
  const auto B = [&](const std::string& leaf) { return param(store, P(leaf) + ".bias"); };
  const Plane x = from_tensor(input);
  const Variant v = cfg.variant;
  Result r;

  if (v == Variant::plain_conv) {
    r.out = relu(conv(x, W("conv"), B("conv"), 1));
    return r;
  }
  const bool small = v == Variant::small_receptive_field;
  Plane f3;
  if (v != Variant::channel_only) f3 = relu(conv(x, W("conv3"), B("conv3"), 1));
  const Plane f5 = relu(conv(x, W("conv5"), B("conv5"), 1));
  const Plane fd = relu(conv(x, W("convd"), B("convd"), small ? 2 : 3));
  const std::int64_t n = x.n, h = x.h, w = x.w, mid = f5.c;

  Plane fused;
  if (v == Variant::spatial_only) {
    fused = cat(f5, fd);
  } else {
    // Channel gate from the pooled sum of the wide and dilated branches.
    const auto& sq_w = W("ca_squeeze");
    const auto& sq_b = B("ca_squeeze");
    const auto& ex_w = W("ca_excite");
    const auto& ex_b = B("ca_excite");
    const std::int64_t red = sq_w.shape().n;
    r.alpha = Plane(n, mid, 1, 1);
    r.f_c_s = Plane(n, mid, h, w);
    r.f_c_d = Plane(n, mid, h, w);
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> pooled(static_cast<std::size_t>(mid), 0.0);
      for (std::int64_t c = 0; c < mid; ++c) {
        double s = 0;
        for (std::int64_t y = 0; y < h; ++y) {
          for (std::int64_t xx = 0; xx < w; ++xx) s += f5.at(i, c, y, xx) + fd.at(i, c, y, xx);
        }
        pooled[static_cast<std::size_t>(c)] = s / static_cast<double>(h * w);
      }
      std::vector<double> hidden(static_cast<std::size_t>(red), 0.0);
      for (std::int64_t j = 0; j < red; ++j) {
        double s = sq_b[j];
        for (std::int64_t c = 0; c < mid; ++c) s += sq_w.at(j, c, 0, 0) * pooled[static_cast<std::size_t>(c)];
        hidden[static_cast<std::size_t>(j)] = s > 0 ? s : 0;
      }
      for (std::int64_t c = 0; c < mid; ++c) {
        double s = ex_b[c];
        for (std::int64_t j = 0; j < red; ++j) s += ex_w.at(c, j, 0, 0) * hidden[static_cast<std::size_t>(j)];
        const double a = sigmoid(s);
        r.alpha.at(i, c, 0, 0) = a;
        for (std::int64_t y = 0; y < h; ++y) {
          for (std::int64_t xx = 0; xx < w; ++xx) {
            r.f_c_d.at(i, c, y, xx) = a * fd.at(i, c, y, xx);
            r.f_c_s.at(i, c, y, xx) = (1.0 - a) * f5.at(i, c, y, xx);
          }
        }
      }
    }
    fused = cat(r.f_c_s, r.f_c_d);
    if (v == Variant::channel_only) {
      r.out = conv(fused, W("ca_out"), B("ca_out"), 1);
      return r;
    }
  }

  // Pixel gate between the local projection and the fused projection.
  const Plane s1 = conv(f3, W("sa_local"), B("sa_local"), 1);
  const Plane cs1 = conv(fused, W("sa_fused"), B("sa_fused"), 1);
  const auto& g_w = W("sa_gate");
  const auto& g_b = B("sa_gate");
  r.beta = Plane(n, 1, h, w);
  Plane calibrated(n, 2 * mid, h, w);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        double z = g_b[0];
        for (std::int64_t c = 0; c < mid; ++c) {
          const double m = s1.at(i, c, y, xx) + cs1.at(i, c, y, xx);
          z += g_w.at(0, c, 0, 0) * (m > 0 ? m : 0);
        }
        const double beta = sigmoid(z);
        r.beta.at(i, 0, y, xx) = beta;
        for (std::int64_t c = 0; c < mid; ++c) {
          calibrated.at(i, c, y, xx) = beta * cs1.at(i, c, y, xx);
          calibrated.at(i, mid + c, y, xx) = (1.0 - beta) * s1.at(i, c, y, xx);
        }
      }
    }
  }
  r.out = conv(calibrated, W("sa_out"), B("sa_out"), 1);
  return r;
}

}  // namespace oracle
