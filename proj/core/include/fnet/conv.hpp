#pragma once

#include "fnet/tensor.hpp"

namespace fnet::conv {

namespace detail {

using fnet::detail::check;

inline i64 ceil_div(i64 a, i64 b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline i64 floor_div(i64 a, i64 b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

inline void check_conv_args(const Shape& x, const Shape& w, int stride, const char* op) {
  check(x.size() == 3 || x.size() == 4,
        std::string(op) + ": input must be (C, H, W) or (C, D, H, W), got " + shape_str(x));
  check(w.size() == x.size() + 1, std::string(op) + ": weight rank for input " + shape_str(x) +
                                      " must be " + std::to_string(x.size() + 1) + ", got " +
                                      shape_str(w));
  const i64 k = w[2];
  for (std::size_t a = 2; a < w.size(); ++a)
    check(w[a] == k, std::string(op) + ": kernel must be square, got " + shape_str(w));
  check(k % 2 == 1, std::string(op) + ": kernel size must be odd for same padding, got " +
                        std::to_string(k));
  check(stride >= 1, std::string(op) + ": stride must be >= 1");
}

}  // namespace detail

/// Output length of a same-padded strided convolution: ceil(n / s).
inline i64 conv_out_len(i64 n, int stride) { return (n + stride - 1) / stride; }

/// Same-padded convolution. x is (Ci, spatial...), w is (Co, Ci, k, ...),
/// b is (Co) or empty. Output spatial dims are ceil(n/stride).
template <class R>
Tensor<R> conv_forward(const Tensor<R>& x, const Tensor<R>& w, const Tensor<R>& b, int stride) {
  detail::check_conv_args(x.shape(), w.shape(), stride, "conv");
  const i64 Ci = x.dim(0), Co = w.dim(0);
  detail::check(w.dim(1) == Ci, "conv: weight " + shape_str(w.shape()) +
                                    " does not accept input " + shape_str(x.shape()));
  detail::check(b.empty() || (b.rank() == 1 && b.dim(0) == Co),
                "conv: bias must be (Co), got " + shape_str(b.shape()));
  const i64 k = w.dim(2), p = (k - 1) / 2;
  const i64 s = stride;

  if (x.rank() == 3) {
    const i64 H = x.dim(1), W = x.dim(2);
    const i64 OH = conv_out_len(H, stride), OW = conv_out_len(W, stride);
    Tensor<R> y({Co, OH, OW});
    for (i64 co = 0; co < Co; ++co) {
      if (!b.empty()) std::fill_n(y.data() + co * OH * OW, OH * OW, b[co]);
      for (i64 oy = 0; oy < OH; ++oy) {
        R* yrow = y.data() + (co * OH + oy) * OW;
        for (i64 ci = 0; ci < Ci; ++ci) {
          for (i64 ky = 0; ky < k; ++ky) {
            const i64 iy = oy * s + ky - p;
            if (iy < 0 || iy >= H) continue;
            const R* xrow = x.data() + (ci * H + iy) * W;
            const R* wrow = w.data() + ((co * Ci + ci) * k + ky) * k;
            for (i64 kx = 0; kx < k; ++kx) {
              const i64 dx = kx - p;
              const R wv = wrow[kx];
              const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
              const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
              if (s == 1) {
                const R* xs = xrow + dx;
                for (i64 ox = lo; ox <= hi; ++ox) yrow[ox] += wv * xs[ox];
              } else {
                for (i64 ox = lo; ox <= hi; ++ox) yrow[ox] += wv * xrow[ox * s + dx];
              }
            }
          }
        }
      }
    }
    return y;
  }

  const i64 D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const i64 OD = conv_out_len(D, stride), OH = conv_out_len(H, stride),
            OW = conv_out_len(W, stride);
  Tensor<R> y({Co, OD, OH, OW});
  for (i64 co = 0; co < Co; ++co) {
    if (!b.empty()) std::fill_n(y.data() + co * OD * OH * OW, OD * OH * OW, b[co]);
    for (i64 oz = 0; oz < OD; ++oz) {
      for (i64 oy = 0; oy < OH; ++oy) {
        R* yrow = y.data() + ((co * OD + oz) * OH + oy) * OW;
        for (i64 ci = 0; ci < Ci; ++ci) {
          for (i64 kz = 0; kz < k; ++kz) {
            const i64 iz = oz * s + kz - p;
            if (iz < 0 || iz >= D) continue;
            for (i64 ky = 0; ky < k; ++ky) {
              const i64 iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              const R* xrow = x.data() + ((ci * D + iz) * H + iy) * W;
              const R* wrow = w.data() + (((co * Ci + ci) * k + kz) * k + ky) * k;
              for (i64 kx = 0; kx < k; ++kx) {
                const i64 dx = kx - p;
                const R wv = wrow[kx];
                const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
                const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
                if (s == 1) {
                  const R* xs = xrow + dx;
                  for (i64 ox = lo; ox <= hi; ++ox) yrow[ox] += wv * xs[ox];
                } else {
                  for (i64 ox = lo; ox <= hi; ++ox) yrow[ox] += wv * xrow[ox * s + dx];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

/// Gradient of conv_forward w.r.t. its input: scatters g (Co, out spatial)
/// through w back onto the input grid `in_spatial`. Also the forward pass of
/// the transpose convolution (with g as input and in_spatial = stride * n).
template <class R>
Tensor<R> conv_input_grad(const Tensor<R>& g, const Tensor<R>& w, const Shape& in_spatial,
                          int stride) {
  detail::check_conv_args(g.shape(), w.shape(), stride, "conv_input_grad");
  const i64 Co = w.dim(0), Ci = w.dim(1);
  detail::check(g.dim(0) == Co, "conv_input_grad: cotangent " + shape_str(g.shape()) +
                                    " does not match weight " + shape_str(w.shape()));
  detail::check(static_cast<int>(in_spatial.size()) + 1 == g.rank(),
                "conv_input_grad: spatial rank mismatch");
  const i64 k = w.dim(2), p = (k - 1) / 2;
  const i64 s = stride;

  if (g.rank() == 3) {
    const i64 OH = g.dim(1), OW = g.dim(2);
    const i64 H = in_spatial[0], W = in_spatial[1];
    detail::check(conv_out_len(H, stride) == OH && conv_out_len(W, stride) == OW,
                  "conv_input_grad: cotangent " + shape_str(g.shape()) +
                      " is not the conv output for input spatial " + shape_str(in_spatial));
    Tensor<R> gx({Ci, H, W});
    for (i64 co = 0; co < Co; ++co) {
      for (i64 oy = 0; oy < OH; ++oy) {
        const R* grow = g.data() + (co * OH + oy) * OW;
        for (i64 ci = 0; ci < Ci; ++ci) {
          for (i64 ky = 0; ky < k; ++ky) {
            const i64 iy = oy * s + ky - p;
            if (iy < 0 || iy >= H) continue;
            R* gxrow = gx.data() + (ci * H + iy) * W;
            const R* wrow = w.data() + ((co * Ci + ci) * k + ky) * k;
            for (i64 kx = 0; kx < k; ++kx) {
              const i64 dx = kx - p;
              const R wv = wrow[kx];
              const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
              const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
              if (s == 1) {
                R* gxs = gxrow + dx;
                for (i64 ox = lo; ox <= hi; ++ox) gxs[ox] += wv * grow[ox];
              } else {
                for (i64 ox = lo; ox <= hi; ++ox) gxrow[ox * s + dx] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
    return gx;
  }

  const i64 OD = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  const i64 D = in_spatial[0], H = in_spatial[1], W = in_spatial[2];
  detail::check(conv_out_len(D, stride) == OD && conv_out_len(H, stride) == OH &&
                    conv_out_len(W, stride) == OW,
                "conv_input_grad: cotangent " + shape_str(g.shape()) +
                    " is not the conv output for input spatial " + shape_str(in_spatial));
  Tensor<R> gx({Ci, D, H, W});
  for (i64 co = 0; co < Co; ++co) {
    for (i64 oz = 0; oz < OD; ++oz) {
      for (i64 oy = 0; oy < OH; ++oy) {
        const R* grow = g.data() + ((co * OD + oz) * OH + oy) * OW;
        for (i64 ci = 0; ci < Ci; ++ci) {
          for (i64 kz = 0; kz < k; ++kz) {
            const i64 iz = oz * s + kz - p;
            if (iz < 0 || iz >= D) continue;
            for (i64 ky = 0; ky < k; ++ky) {
              const i64 iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              R* gxrow = gx.data() + ((ci * D + iz) * H + iy) * W;
              const R* wrow = w.data() + (((co * Ci + ci) * k + kz) * k + ky) * k;
              for (i64 kx = 0; kx < k; ++kx) {
                const i64 dx = kx - p;
                const R wv = wrow[kx];
                const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
                const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
                if (s == 1) {
                  R* gxs = gxrow + dx;
                  for (i64 ox = lo; ox <= hi; ++ox) gxs[ox] += wv * grow[ox];
                } else {
                  for (i64 ox = lo; ox <= hi; ++ox) gxrow[ox * s + dx] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

/// Gradient of conv_forward w.r.t. the weights: gw[co,ci,k...] =
/// sum_out g[co,out] * x[ci, out*s + k - p].
template <class R>
Tensor<R> conv_weight_grad(const Tensor<R>& x, const Tensor<R>& g, i64 k, int stride) {
  detail::check(x.rank() == g.rank() && (x.rank() == 3 || x.rank() == 4),
                "conv_weight_grad: bad ranks " + shape_str(x.shape()) + " / " +
                    shape_str(g.shape()));
  const i64 Ci = x.dim(0), Co = g.dim(0);
  const i64 p = (k - 1) / 2;
  const i64 s = stride;

  if (x.rank() == 3) {
    const i64 H = x.dim(1), W = x.dim(2);
    const i64 OH = g.dim(1), OW = g.dim(2);
    Tensor<R> gw({Co, Ci, k, k});
    for (i64 co = 0; co < Co; ++co) {
      for (i64 ci = 0; ci < Ci; ++ci) {
        for (i64 ky = 0; ky < k; ++ky) {
          for (i64 kx = 0; kx < k; ++kx) {
            const i64 dx = kx - p;
            const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
            const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
            R acc = 0;
            for (i64 oy = 0; oy < OH; ++oy) {
              const i64 iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              const R* grow = g.data() + (co * OH + oy) * OW;
              const R* xrow = x.data() + (ci * H + iy) * W;
              if (s == 1) {
                const R* xs = xrow + dx;
                for (i64 ox = lo; ox <= hi; ++ox) acc += grow[ox] * xs[ox];
              } else {
                for (i64 ox = lo; ox <= hi; ++ox) acc += grow[ox] * xrow[ox * s + dx];
              }
            }
            gw[((co * Ci + ci) * k + ky) * k + kx] = acc;
          }
        }
      }
    }
    return gw;
  }

  const i64 D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const i64 OD = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  Tensor<R> gw({Co, Ci, k, k, k});
  for (i64 co = 0; co < Co; ++co) {
    for (i64 ci = 0; ci < Ci; ++ci) {
      for (i64 kz = 0; kz < k; ++kz) {
        for (i64 ky = 0; ky < k; ++ky) {
          for (i64 kx = 0; kx < k; ++kx) {
            const i64 dx = kx - p;
            const i64 lo = std::max<i64>(0, detail::ceil_div(-dx, s));
            const i64 hi = std::min<i64>(OW - 1, detail::floor_div(W - 1 - dx, s));
            R acc = 0;
            for (i64 oz = 0; oz < OD; ++oz) {
              const i64 iz = oz * s + kz - p;
              if (iz < 0 || iz >= D) continue;
              for (i64 oy = 0; oy < OH; ++oy) {
                const i64 iy = oy * s + ky - p;
                if (iy < 0 || iy >= H) continue;
                const R* grow = g.data() + ((co * OD + oz) * OH + oy) * OW;
                const R* xrow = x.data() + ((ci * D + iz) * H + iy) * W;
                if (s == 1) {
                  const R* xs = xrow + dx;
                  for (i64 ox = lo; ox <= hi; ++ox) acc += grow[ox] * xs[ox];
                } else {
                  for (i64 ox = lo; ox <= hi; ++ox) acc += grow[ox] * xrow[ox * s + dx];
                }
              }
            }
            gw[(((co * Ci + ci) * k + kz) * k + ky) * k + kx] = acc;
          }
        }
      }
    }
  }
  return gw;
}

/// Gradient of conv_forward w.r.t. the bias: per-channel sum of g.
template <class R>
Tensor<R> conv_bias_grad(const Tensor<R>& g) {
  const i64 Co = g.dim(0);
  const i64 n = g.size() / Co;
  Tensor<R> gb({Co});
  for (i64 co = 0; co < Co; ++co) {
    R acc = 0;
    const R* gc = g.data() + co * n;
    for (i64 i = 0; i < n; ++i) acc += gc[i];
    gb[co] = acc;
  }
  return gb;
}

/// Transpose ("fractionally strided") convolution. x is (Ci, spatial...),
/// w is (Ci, Co, k, ...), output spatial dims are exactly stride * n. This is
/// the adjoint of conv_forward, so it reuses conv_input_grad.
template <class R>
Tensor<R> conv_transpose_forward(const Tensor<R>& x, const Tensor<R>& w, const Tensor<R>& b,
                                 int stride) {
  detail::check_conv_args(x.shape(), w.shape(), stride, "conv_transpose");
  detail::check(w.dim(0) == x.dim(0), "conv_transpose: weight " + shape_str(w.shape()) +
                                          " does not accept input " + shape_str(x.shape()));
  const i64 Co = w.dim(1);
  detail::check(b.empty() || (b.rank() == 1 && b.dim(0) == Co),
                "conv_transpose: bias must be (Co), got " + shape_str(b.shape()));
  Shape out_spatial(x.shape().begin() + 1, x.shape().end());
  for (auto& d : out_spatial) d *= stride;
  Tensor<R> y = conv_input_grad(x, w, out_spatial, stride);
  if (!b.empty()) {
    const i64 n = y.size() / Co;
    for (i64 co = 0; co < Co; ++co) {
      R* yc = y.data() + co * n;
      for (i64 i = 0; i < n; ++i) yc[i] += b[co];
    }
  }
  return y;
}

/// Gradient of conv_transpose_forward w.r.t. its input (= conv_forward with
/// the same weights, reading w as (out=Ci, in=Co)).
template <class R>
Tensor<R> conv_transpose_input_grad(const Tensor<R>& g, const Tensor<R>& w, int stride) {
  return conv_forward(g, w, Tensor<R>(), stride);
}

/// Gradient of conv_transpose_forward w.r.t. the weights (= conv_weight_grad
/// with input and cotangent swapped).
template <class R>
Tensor<R> conv_transpose_weight_grad(const Tensor<R>& x, const Tensor<R>& g, i64 k, int stride) {
  return conv_weight_grad(g, x, k, stride);
}

}  // namespace fnet::conv
