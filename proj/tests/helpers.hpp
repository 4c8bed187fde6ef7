#pragma once

// Scalar-loop reference implementations used by the tests. Each one is written
// directly from the mathematical definition it checks and stays independent of
// the library kernels (no FFTs, no prefix sums, no vector fast paths).

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "fnet/tensor.hpp"

namespace oracle {

using fnet::i64;
using fnet::Shape;
using fnet::Tensor;
using cd = std::complex<double>;

inline double urand(std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
}

inline Tensor<double> random_real(std::mt19937_64& g, const Shape& shape, double lo = -1.0,
                                  double hi = 1.0) {
  Tensor<double> t(shape);
  for (i64 i = 0; i < t.size(); ++i) t[i] = urand(g, lo, hi);
  return t;
}

inline Tensor<cd> random_complex(std::mt19937_64& g, const Shape& shape) {
  Tensor<cd> t(shape);
  for (i64 i = 0; i < t.size(); ++i) t[i] = cd(urand(g), urand(g));
  return t;
}

/// Smooth random 2-d image: a few random low-frequency cosine waves.
inline Tensor<double> smooth_image(std::mt19937_64& g, i64 h, i64 w, int waves = 5) {
  Tensor<double> img(Shape{h, w});
  for (int k = 0; k < waves; ++k) {
    const double fy = urand(g, -2.5, 2.5), fx = urand(g, -2.5, 2.5);
    const double ph = urand(g, 0, 6.28318530717958648), amp = urand(g, 0.1, 0.4);
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x)
        img[y * w + x] += amp * std::cos(6.28318530717958648 *
                                             (fy * static_cast<double>(y) / static_cast<double>(h) +
                                              fx * static_cast<double>(x) / static_cast<double>(w)) +
                                         ph);
  }
  return img;
}

/// Smooth random displacement field (2, h, w) with max magnitude about `amp`.
inline Tensor<double> smooth_field(std::mt19937_64& g, i64 h, i64 w, double amp) {
  Tensor<double> u(Shape{2, h, w});
  for (int c = 0; c < 2; ++c) {
    Tensor<double> ch = smooth_image(g, h, w, 3);
    double m = 0;
    for (i64 i = 0; i < ch.size(); ++i) m = std::max(m, std::abs(ch[i]));
    const double s = m > 0 ? amp / m : 0.0;
    for (i64 i = 0; i < ch.size(); ++i) u[c * h * w + i] = s * ch[i];
  }
  return u;
}

// ---- direct DFT ----

/// Unnormalized forward DFT over the trailing `axes` axes, direct O(N^2) sums.
inline Tensor<cd> naive_dft(const Tensor<cd>& x, int axes, bool inverse = false) {
  const int rank = static_cast<int>(x.rank());
  i64 lead = 1;
  for (int a = 0; a < rank - axes; ++a) lead *= x.dim(a);
  Shape sp(x.shape().end() - axes, x.shape().end());
  i64 n = 1;
  for (i64 d : sp) n *= d;

  Tensor<cd> out(x.shape());
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<i64> ki(axes), ni(axes);
  for (i64 l = 0; l < lead; ++l) {
    const cd* in = x.data() + l * n;
    cd* o = out.data() + l * n;
    std::fill(ki.begin(), ki.end(), 0);
    for (i64 k = 0; k < n; ++k) {
      cd acc = 0;
      std::fill(ni.begin(), ni.end(), 0);
      for (i64 j = 0; j < n; ++j) {
        double phase = 0;
        for (int a = 0; a < axes; ++a)
          phase += static_cast<double>(ki[a]) * static_cast<double>(ni[a]) /
                   static_cast<double>(sp[a]);
        phase *= sign * 6.28318530717958648;
        acc += in[j] * cd(std::cos(phase), std::sin(phase));
        for (int a = axes - 1; a >= 0; --a)
          if (++ni[a] < sp[a]) break; else ni[a] = 0;
      }
      o[k] = inverse ? acc / static_cast<double>(n) : acc;
      for (int a = axes - 1; a >= 0; --a)
        if (++ki[a] < sp[a]) break; else ki[a] = 0;
    }
  }
  return out;
}

// ---- interpolation ----

/// Clamp-to-edge bilinear sample of a (h, w) image at real coordinates.
inline double bilerp(const Tensor<double>& img, double y, double x) {
  const i64 h = img.dim(0), w = img.dim(1);
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  i64 y0 = static_cast<i64>(std::floor(y)), x0 = static_cast<i64>(std::floor(x));
  y0 = std::min(y0, h - 2 < 0 ? i64(0) : h - 2);
  x0 = std::min(x0, w - 2 < 0 ? i64(0) : w - 2);
  const i64 y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double v00 = img[y0 * w + x0], v01 = img[y0 * w + x1];
  const double v10 = img[y1 * w + x0], v11 = img[y1 * w + x1];
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

/// warp oracle: out(p) = img(p + u(p)).
inline Tensor<double> warp2(const Tensor<double>& img, const Tensor<double>& u) {
  const i64 h = img.dim(0), w = img.dim(1);
  Tensor<double> out(img.shape());
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x)
      out[y * w + x] = bilerp(img, static_cast<double>(y) + u[0 * h * w + y * w + x],
                              static_cast<double>(x) + u[1 * h * w + y * w + x]);
  return out;
}

/// Nearest-neighbour label warp oracle (round half up, clamp to edge).
inline Tensor<std::int32_t> warp2_nn(const Tensor<std::int32_t>& labels, const Tensor<double>& u) {
  const i64 h = labels.dim(0), w = labels.dim(1);
  Tensor<std::int32_t> out(labels.shape());
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      i64 sy = static_cast<i64>(std::floor(static_cast<double>(y) + u[0 * h * w + y * w + x] + 0.5));
      i64 sx = static_cast<i64>(std::floor(static_cast<double>(x) + u[1 * h * w + y * w + x] + 0.5));
      sy = std::min(std::max(sy, i64(0)), h - 1);
      sx = std::min(std::max(sx, i64(0)), w - 1);
      out[y * w + x] = labels[sy * w + sx];
    }
  return out;
}

// ---- convolution ----

/// Zero-padded strided 2-d convolution oracle; x (Ci,H,W), w (Co,Ci,k,k),
/// bias (Co) optional, same padding (k-1)/2.
inline Tensor<double> conv2(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>* bias, i64 stride) {
  const i64 ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const i64 co = w.dim(0), k = w.dim(2), p = (k - 1) / 2;
  const i64 oh = (h + stride - 1) / stride, ow = (wd + stride - 1) / stride;
  Tensor<double> out(Shape{co, oh, ow});
  for (i64 oc = 0; oc < co; ++oc)
    for (i64 oy = 0; oy < oh; ++oy)
      for (i64 ox = 0; ox < ow; ++ox) {
        double acc = bias ? (*bias)[oc] : 0.0;
        for (i64 ic = 0; ic < ci; ++ic)
          for (i64 ky = 0; ky < k; ++ky)
            for (i64 kx = 0; kx < k; ++kx) {
              const i64 iy = oy * stride + ky - p, ix = ox * stride + kx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += w[((oc * ci + ic) * k + ky) * k + kx] * x[(ic * h + iy) * wd + ix];
            }
        out[(oc * oh + oy) * ow + ox] = acc;
      }
  return out;
}

// ---- local NCC ----

/// Windowed NCC oracle with clipped boxes (true per-window counts), matching
/// the documented convention: cross = sab - mu_b*sa, variances clamped at 0,
/// denominator sqrt(va*vb + eps); returns -mean(cc).
inline double ncc2(const Tensor<double>& a, const Tensor<double>& b, int window, double eps) {
  const i64 h = a.dim(0), w = a.dim(1);
  const int r = (window - 1) / 2;
  double total = 0;
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0, cnt = 0;
      for (i64 yy = std::max<i64>(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
        for (i64 xx = std::max<i64>(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          const double va = a[yy * w + xx], vb = b[yy * w + xx];
          sa += va; sb += vb; saa += va * va; sbb += vb * vb; sab += va * vb;
          cnt += 1;
        }
      const double mu_a = sa / cnt, mu_b = sb / cnt;
      const double cross = sab - mu_b * sa;
      const double var_a = std::max(0.0, saa - mu_a * sa);
      const double var_b = std::max(0.0, sbb - mu_b * sb);
      total += cross / std::sqrt(var_a * var_b + eps);
    }
  return -total / static_cast<double>(h * w);
}

// ---- misc ----

inline double rel_err(double got, double want) {
  const double den = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / den;
}

template <class T>
double max_abs_diff_c(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (i64 i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace oracle
