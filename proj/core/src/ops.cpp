#include "aaunet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace aaunet {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Output positions o in [0, out) whose source index o*stride + offset lies in [0, in).
struct Range {
  std::int64_t lo;
  std::int64_t hi;
};

Range valid_range(std::int64_t in, std::int64_t out, std::int64_t offset, std::int64_t stride) {
  const std::int64_t lo = offset >= 0 ? 0 : ceil_div(-offset, stride);
  const std::int64_t last = in - 1 - offset;
  const std::int64_t hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

template <typename T>
bool wants_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

// Fixed-order dot product with four partial sums.
template <typename T>
T dot_strided(const T* a, const T* b, std::int64_t count, std::int64_t b_stride) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t i = 0;
  if (b_stride == 1) {
    for (; i + 4 <= count; i += 4) {
      s0 += a[i] * b[i];
      s1 += a[i + 1] * b[i + 1];
      s2 += a[i + 2] * b[i + 2];
      s3 += a[i + 3] * b[i + 3];
    }
  }
  for (; i < count; ++i) s0 += a[i] * b[i * b_stride];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, const Conv2dOptions& opt) {
  return (in + 2 * opt.padding - opt.dilation * (kernel - 1) - 1) / opt.stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              const Conv2dOptions& opt) {
  const Shape is = input->value.shape();
  const Shape ws = weight->value.shape();
  if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0) {
    throw std::invalid_argument("conv2d: stride and dilation must be >= 1, padding >= 0");
  }
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + to_string(ws));
  if (ws.c != is.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(is.c) +
                     " do not match weight in_channels " + std::to_string(ws.c));
  }
  if (bias && bias->value.numel() != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias->value.numel()) +
                     " does not match out_channels " + std::to_string(ws.n));
  }
  const std::int64_t k = ws.h;
  const std::int64_t ho = conv_output_extent(is.h, k, opt);
  const std::int64_t wo = conv_output_extent(is.w, k, opt);
  if (ho < 1) throw ShapeError("conv2d: output height would be " + std::to_string(ho));
  if (wo < 1) throw ShapeError("conv2d: output width would be " + std::to_string(wo));

  const Shape os{is.n, ws.n, ho, wo};
  Tensor<T> out(os);
  const std::int64_t s = opt.stride, p = opt.padding, d = opt.dilation;
  const T* in = input->value.raw();
  const T* w = weight->value.raw();
  T* o = out.raw();

  for (std::int64_t n = 0; n < is.n; ++n) {
    for (std::int64_t oc = 0; oc < ws.n; ++oc) {
      T* oplane = o + (n * ws.n + oc) * ho * wo;
      const T b0 = bias ? bias->value[oc] : T(0);
      std::fill(oplane, oplane + ho * wo, b0);
      for (std::int64_t ic = 0; ic < is.c; ++ic) {
        const T* iplane = in + (n * is.c + ic) * is.h * is.w;
        const T* wk = w + (oc * ws.c + ic) * k * k;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const Range ry = valid_range(is.h, ho, ky * d - p, s);
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const T wv = wk[ky * k + kx];
            const Range rx = valid_range(is.w, wo, kx * d - p, s);
            const std::int64_t span = rx.hi - rx.lo;
            if (span <= 0) continue;
            for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
              T* orow = oplane + oy * wo + rx.lo;
              const T* irow = iplane + (oy * s + ky * d - p) * is.w + rx.lo * s + kx * d - p;
              if (s == 1) {
                for (std::int64_t x = 0; x < span; ++x) orow[x] += wv * irow[x];
              } else {
                for (std::int64_t x = 0; x < span; ++x) orow[x] += wv * irow[x * s];
              }
            }
          }
        }
      }
    }
  }

  std::vector<Var<T>> parents{input, weight};
  if (bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), "conv2d", [opt, k, ho, wo](Node<T>& self) {
    const Var<T>& x = self.parents[0];
    const Var<T>& wt = self.parents[1];
    const Var<T> b = self.parents.size() > 2 ? self.parents[2] : nullptr;
    const Shape is = x->value.shape();
    const Shape ws = wt->value.shape();
    const std::int64_t s = opt.stride, p = opt.padding, d = opt.dilation;
    const T* g = self.grad->raw();

    if (wants_grad(b)) {
      T* gb = b->grad_buffer().raw();
      for (std::int64_t oc = 0; oc < ws.n; ++oc) {
        T acc = 0;
        for (std::int64_t n = 0; n < is.n; ++n) {
          const T* gplane = g + (n * ws.n + oc) * ho * wo;
          for (std::int64_t i = 0; i < ho * wo; ++i) acc += gplane[i];
        }
        gb[oc] += acc;
      }
    }

    if (wants_grad(wt)) {
      T* gw = wt->grad_buffer().raw();
      const T* in = x->value.raw();
      for (std::int64_t oc = 0; oc < ws.n; ++oc) {
        for (std::int64_t ic = 0; ic < is.c; ++ic) {
          T* gwk = gw + (oc * ws.c + ic) * k * k;
          for (std::int64_t ky = 0; ky < k; ++ky) {
            const Range ry = valid_range(is.h, ho, ky * d - p, s);
            for (std::int64_t kx = 0; kx < k; ++kx) {
              const Range rx = valid_range(is.w, wo, kx * d - p, s);
              const std::int64_t span = rx.hi - rx.lo;
              if (span <= 0) continue;
              T acc = 0;
              for (std::int64_t n = 0; n < is.n; ++n) {
                const T* gplane = g + (n * ws.n + oc) * ho * wo;
                const T* iplane = in + (n * is.c + ic) * is.h * is.w;
                for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const T* grow = gplane + oy * wo + rx.lo;
                  const T* irow =
                      iplane + (oy * s + ky * d - p) * is.w + rx.lo * s + kx * d - p;
                  acc += dot_strided(grow, irow, span, s);
                }
              }
              gwk[ky * k + kx] += acc;
            }
          }
        }
      }
    }

    if (wants_grad(x)) {
      T* gx = x->grad_buffer().raw();
      const T* w = wt->value.raw();
      for (std::int64_t n = 0; n < is.n; ++n) {
        for (std::int64_t ic = 0; ic < is.c; ++ic) {
          T* gplane_in = gx + (n * is.c + ic) * is.h * is.w;
          for (std::int64_t oc = 0; oc < ws.n; ++oc) {
            const T* gplane = g + (n * ws.n + oc) * ho * wo;
            const T* wk = w + (oc * ws.c + ic) * k * k;
            for (std::int64_t ky = 0; ky < k; ++ky) {
              const Range ry = valid_range(is.h, ho, ky * d - p, s);
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const T wv = wk[ky * k + kx];
                const Range rx = valid_range(is.w, wo, kx * d - p, s);
                const std::int64_t span = rx.hi - rx.lo;
                if (span <= 0) continue;
                for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const T* grow = gplane + oy * wo + rx.lo;
                  T* girow = gplane_in + (oy * s + ky * d - p) * is.w + rx.lo * s + kx * d - p;
                  if (s == 1) {
                    for (std::int64_t xx = 0; xx < span; ++xx) girow[xx] += wv * grow[xx];
                  } else {
                    for (std::int64_t xx = 0; xx < span; ++xx) girow[xx * s] += wv * grow[xx];
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool_2x2(const Var<T>& input) {
  const Shape is = input->value.shape();
  if (is.h % 2 != 0 || is.w % 2 != 0) {
    throw ShapeError("max_pool_2x2: spatial extent " + std::to_string(is.h) + "x" +
                     std::to_string(is.w) + " is odd; pad inputs to an even size");
  }
  const Shape os{is.n, is.c, is.h / 2, is.w / 2};
  Tensor<T> out(os);
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(os.numel()));
  const T* in = input->value.raw();
  std::int64_t oi = 0;
  for (std::int64_t plane = 0; plane < is.n * is.c; ++plane) {
    const std::int64_t base = plane * is.h * is.w;
    for (std::int64_t y = 0; y < os.h; ++y) {
      for (std::int64_t x = 0; x < os.w; ++x, ++oi) {
        const std::int64_t r0 = base + 2 * y * is.w + 2 * x;
        const std::int64_t cand[4] = {r0, r0 + 1, r0 + is.w, r0 + is.w + 1};
        std::int64_t best = cand[0];
        for (int j = 1; j < 4; ++j) {
          if (in[cand[j]] > in[best]) best = cand[j];
        }
        out[oi] = in[best];
        argmax[static_cast<std::size_t>(oi)] = best;
      }
    }
  }
  return make_node<T>(std::move(out), {input}, "max_pool_2x2",
                      [argmax = std::move(argmax)](Node<T>& self) {
                        Tensor<T>& gx = self.parents[0]->grad_buffer();
                        const Tensor<T>& g = *self.grad;
                        for (std::size_t i = 0; i < argmax.size(); ++i) {
                          gx[argmax[i]] += g[static_cast<std::int64_t>(i)];
                        }
                      });
}

template <typename T>
Var<T> upsample_nearest_2x(const Var<T>& input) {
  const Shape is = input->value.shape();
  const Shape os{is.n, is.c, is.h * 2, is.w * 2};
  Tensor<T> out(os);
  const T* in = input->value.raw();
  T* o = out.raw();
  for (std::int64_t plane = 0; plane < is.n * is.c; ++plane) {
    for (std::int64_t y = 0; y < os.h; ++y) {
      const T* irow = in + (plane * is.h + y / 2) * is.w;
      T* orow = o + (plane * os.h + y) * os.w;
      for (std::int64_t x = 0; x < os.w; ++x) orow[x] = irow[x / 2];
    }
  }
  return make_node<T>(std::move(out), {input}, "upsample_nearest_2x", [](Node<T>& self) {
    Tensor<T>& gx = self.parents[0]->grad_buffer();
    const Shape is = gx.shape();
    const std::int64_t ow = is.w * 2;
    const T* g = self.grad->raw();
    T* gi = gx.raw();
    for (std::int64_t plane = 0; plane < is.n * is.c; ++plane) {
      for (std::int64_t y = 0; y < is.h; ++y) {
        const T* g0 = g + (plane * is.h * 2 + 2 * y) * ow;
        const T* g1 = g0 + ow;
        T* row = gi + (plane * is.h + y) * is.w;
        for (std::int64_t x = 0; x < is.w; ++x) {
          row[x] += (g0[2 * x] + g0[2 * x + 1]) + (g1[2 * x] + g1[2 * x + 1]);
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a->value.shape();
  const Shape sb = b->value.shape();
  if (sa.n != sb.n) {
    throw ShapeError("concat_channels: batch " + std::to_string(sa.n) + " vs " +
                     std::to_string(sb.n));
  }
  if (sa.h != sb.h) {
    throw ShapeError("concat_channels: height " + std::to_string(sa.h) + " vs " +
                     std::to_string(sb.h));
  }
  if (sa.w != sb.w) {
    throw ShapeError("concat_channels: width " + std::to_string(sa.w) + " vs " +
                     std::to_string(sb.w));
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor<T> out(os);
  const std::int64_t na = sa.c * sa.plane();
  const std::int64_t nb = sb.c * sb.plane();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a->value.raw() + n * na, na, out.raw() + n * (na + nb));
    std::copy_n(b->value.raw() + n * nb, nb, out.raw() + n * (na + nb) + na);
  }
  return make_node<T>(std::move(out), {a, b}, "concat_channels", [na, nb](Node<T>& self) {
    const T* g = self.grad->raw();
    const std::int64_t batches = self.value.shape().n;
    for (int side = 0; side < 2; ++side) {
      const Var<T>& p = self.parents[static_cast<std::size_t>(side)];
      if (!p->requires_grad) continue;
      T* gp = p->grad_buffer().raw();
      const std::int64_t len = side == 0 ? na : nb;
      const std::int64_t off = side == 0 ? 0 : na;
      for (std::int64_t n = 0; n < batches; ++n) {
        const T* src = g + n * (na + nb) + off;
        T* dst = gp + n * len;
        for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& input, std::int64_t begin, std::int64_t count) {
  const Shape is = input->value.shape();
  if (begin < 0 || count < 1 || begin + count > is.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside channels " +
                     std::to_string(is.c));
  }
  const Shape os{is.n, count, is.h, is.w};
  Tensor<T> out(os);
  const std::int64_t plane = is.plane();
  for (std::int64_t n = 0; n < is.n; ++n) {
    std::copy_n(input->value.raw() + (n * is.c + begin) * plane, count * plane,
                out.raw() + n * count * plane);
  }
  return make_node<T>(std::move(out), {input}, "slice_channels",
                      [begin, count, plane](Node<T>& self) {
                        Tensor<T>& gx = self.parents[0]->grad_buffer();
                        const std::int64_t c = gx.shape().c;
                        const T* g = self.grad->raw();
                        for (std::int64_t n = 0; n < gx.shape().n; ++n) {
                          T* dst = gx.raw() + (n * c + begin) * plane;
                          const T* src = g + n * count * plane;
                          for (std::int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                        }
                      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  out += b->value;
  return make_node<T>(std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (const auto& p : self.parents) {
      if (p->requires_grad) p->grad_buffer() += *self.grad;
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<T>(std::move(out), {a, b}, "mul", [](Node<T>& self) {
    const Var<T>& pa = self.parents[0];
    const Var<T>& pb = self.parents[1];
    const Tensor<T>& g = *self.grad;
    if (pa->requires_grad) {
      Tensor<T>& ga = pa->grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor<T>& gb = pb->grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * pa->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * factor;
  return make_node<T>(std::move(out), {a}, "scale", [factor](Node<T>& self) {
    Tensor<T>& ga = self.parents[0]->grad_buffer();
    const Tensor<T>& g = *self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const T v = a->value[i];
    // Evaluate on the side that cannot overflow exp().
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_node<T>(std::move(out), {a}, "sigmoid", [](Node<T>& self) {
    Tensor<T>& ga = self.parents[0]->grad_buffer();
    const Tensor<T>& g = *self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const T y = self.value[i];
      ga[i] += g[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(a->value[i], T(0));
  return make_node<T>(std::move(out), {a}, "relu", [](Node<T>& self) {
    const Var<T>& pa = self.parents[0];
    Tensor<T>& ga = pa->grad_buffer();
    const Tensor<T>& g = *self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      if (pa->value[i] > T(0)) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> one_minus(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) - a->value[i];
  return make_node<T>(std::move(out), {a}, "one_minus", [](Node<T>& self) {
    Tensor<T>& ga = self.parents[0]->grad_buffer();
    const Tensor<T>& g = *self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] -= g[i];
  });
}

template <typename T>
Var<T> broadcast_mul(const Var<T>& map, const Var<T>& features) {
  const Shape ms = map->value.shape();
  const Shape fs = features->value.shape();
  const bool channel_map = ms.n == fs.n && ms.c == fs.c && ms.h == 1 && ms.w == 1;
  const bool spatial_map = ms.n == fs.n && ms.c == 1 && ms.h == fs.h && ms.w == fs.w;
  if (!channel_map && !spatial_map) {
    throw ShapeError("broadcast_mul: map " + to_string(ms) +
                     " is neither (n, c, 1, 1) nor (n, 1, h, w) for features " + to_string(fs));
  }
  Tensor<T> out(fs);
  const std::int64_t plane = fs.plane();
  const T* m = map->value.raw();
  const T* f = features->value.raw();
  T* o = out.raw();
  for (std::int64_t n = 0; n < fs.n; ++n) {
    for (std::int64_t c = 0; c < fs.c; ++c) {
      const std::int64_t off = (n * fs.c + c) * plane;
      if (channel_map) {
        const T mv = m[n * fs.c + c];
        for (std::int64_t i = 0; i < plane; ++i) o[off + i] = mv * f[off + i];
      } else {
        const T* mrow = m + n * plane;
        for (std::int64_t i = 0; i < plane; ++i) o[off + i] = mrow[i] * f[off + i];
      }
    }
  }
  return make_node<T>(
      std::move(out), {map, features}, "broadcast_mul", [channel_map](Node<T>& self) {
        const Var<T>& pm = self.parents[0];
        const Var<T>& pf = self.parents[1];
        const Shape fs = pf->value.shape();
        const std::int64_t plane = fs.plane();
        const T* g = self.grad->raw();
        const T* m = pm->value.raw();
        const T* f = pf->value.raw();
        if (pm->requires_grad) {
          T* gm = pm->grad_buffer().raw();
          for (std::int64_t n = 0; n < fs.n; ++n) {
            for (std::int64_t c = 0; c < fs.c; ++c) {
              const std::int64_t off = (n * fs.c + c) * plane;
              if (channel_map) {
                gm[n * fs.c + c] += dot_strided(g + off, f + off, plane, 1);
              } else {
                T* gmrow = gm + n * plane;
                for (std::int64_t i = 0; i < plane; ++i) gmrow[i] += g[off + i] * f[off + i];
              }
            }
          }
        }
        if (pf->requires_grad) {
          T* gf = pf->grad_buffer().raw();
          for (std::int64_t n = 0; n < fs.n; ++n) {
            for (std::int64_t c = 0; c < fs.c; ++c) {
              const std::int64_t off = (n * fs.c + c) * plane;
              if (channel_map) {
                const T mv = m[n * fs.c + c];
                for (std::int64_t i = 0; i < plane; ++i) gf[off + i] += g[off + i] * mv;
              } else {
                const T* mrow = m + n * plane;
                for (std::int64_t i = 0; i < plane; ++i) gf[off + i] += g[off + i] * mrow[i];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> global_average_pool(const Var<T>& input) {
  const Shape is = input->value.shape();
  const std::int64_t plane = is.plane();
  Tensor<T> out(Shape{is.n, is.c, 1, 1});
  for (std::int64_t i = 0; i < is.n * is.c; ++i) {
    const T* src = input->value.raw() + i * plane;
    T acc = 0;
    for (std::int64_t j = 0; j < plane; ++j) acc += src[j];
    out[i] = acc / static_cast<T>(plane);
  }
  return make_node<T>(std::move(out), {input}, "global_average_pool", [plane](Node<T>& self) {
    Tensor<T>& gx = self.parents[0]->grad_buffer();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::int64_t i = 0; i < self.grad->numel(); ++i) {
      const T gv = (*self.grad)[i] * inv;
      T* dst = gx.raw() + i * plane;
      for (std::int64_t j = 0; j < plane; ++j) dst[j] += gv;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  T acc = 0;
  for (const T v : input->value.data()) acc += v;
  return make_node<T>(Tensor<T>::scalar(acc), {input}, "sum", [](Node<T>& self) {
    Tensor<T>& gx = self.parents[0]->grad_buffer();
    const T g = self.grad->item();
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& input) {
  return scale(sum(input), T(1) / static_cast<T>(input->value.numel()));
}

#define AAUNET_INSTANTIATE_OPS(T)                                                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&); \
  template Var<T> max_pool_2x2(const Var<T>&);                                             \
  template Var<T> upsample_nearest_2x(const Var<T>&);                                      \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                           \
  template Var<T> slice_channels(const Var<T>&, std::int64_t, std::int64_t);               \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> sigmoid(const Var<T>&);                                                  \
  template Var<T> relu(const Var<T>&);                                                     \
  template Var<T> one_minus(const Var<T>&);                                                \
  template Var<T> broadcast_mul(const Var<T>&, const Var<T>&);                             \
  template Var<T> global_average_pool(const Var<T>&);                                      \
  template Var<T> sum(const Var<T>&);                                                      \
  template Var<T> mean(const Var<T>&);

AAUNET_INSTANTIATE_OPS(float)
AAUNET_INSTANTIATE_OPS(double)

}  // namespace aaunet
