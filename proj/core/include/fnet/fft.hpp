#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "fnet/tensor.hpp"

namespace fnet::fft {

/// 1-d complex transform of a fixed length. Mixed-radix Cooley-Tukey with
/// specialized radix 2/3/4 butterflies and a generic O(p^2) butterfly for
/// other prime factors (so prime lengths degrade to a correct direct DFT).
/// Twiddles are evaluated in double precision. forward() is the unnormalized
/// e^{-2*pi*i} transform; inverse() is unnormalized e^{+2*pi*i} (callers
/// divide by N where needed). Instances are cached per length and are not
/// thread-safe (the scratch buffers are shared).
template <class R>
class Fft1d {
 public:
  explicit Fft1d(i64 n) : n_(n) {
    detail::check(n >= 1, "fft: length must be positive");
    tw_.resize(static_cast<std::size_t>(n));
    for (i64 k = 0; k < n; ++k) {
      const double a = -2.0 * pi_ * static_cast<double>(k) / static_cast<double>(n);
      tw_[static_cast<std::size_t>(k)] =
          std::complex<R>(static_cast<R>(std::cos(a)), static_cast<R>(std::sin(a)));
    }
    i64 m = n;
    int max_radix = 1;
    while (m > 1) {
      int p = 4;
      if (m % 4) {
        p = 2;
        if (m % 2) {
          p = 3;
          while (m % p) p += 2;
        }
      }
      m /= p;
      stages_.push_back({p, m});
      max_radix = std::max(max_radix, p);
    }
    in_scratch_.resize(static_cast<std::size_t>(n));
    bfly_scratch_.resize(static_cast<std::size_t>(max_radix));
  }

  i64 length() const { return n_; }

  void forward(std::complex<R>* buf) { run<false>(buf); }
  void inverse(std::complex<R>* buf) { run<true>(buf); }

 private:
  using C = std::complex<R>;

  template <bool Inv>
  C tw(i64 idx) {
    const C w = tw_[static_cast<std::size_t>(idx % n_)];
    if constexpr (Inv)
      return std::conj(w);
    else
      return w;
  }

  template <bool Inv>
  void run(C* buf) {
    if (n_ == 1) return;
    std::copy(buf, buf + n_, in_scratch_.begin());
    work<Inv>(buf, in_scratch_.data(), 1, stages_.data());
  }

  template <bool Inv>
  void work(C* out, const C* in, i64 fstride, const std::pair<int, i64>* stage) {
    const int p = stage->first;
    const i64 m = stage->second;
    if (m == 1) {
      for (i64 j = 0; j < p; ++j) out[j] = in[j * fstride];
    } else {
      for (i64 j = 0; j < p; ++j) work<Inv>(out + j * m, in + j * fstride, fstride * p, stage + 1);
    }
    switch (p) {
      case 2:
        bfly2<Inv>(out, fstride, m);
        break;
      case 3:
        bfly3<Inv>(out, fstride, m);
        break;
      case 4:
        bfly4<Inv>(out, fstride, m);
        break;
      default:
        bfly_generic<Inv>(out, fstride, m, p);
        break;
    }
  }

  template <bool Inv>
  void bfly2(C* out, i64 fstride, i64 m) {
    for (i64 k = 0; k < m; ++k) {
      const C t = out[m + k] * tw<Inv>(k * fstride);
      out[m + k] = out[k] - t;
      out[k] += t;
    }
  }

  template <bool Inv>
  void bfly3(C* out, i64 fstride, i64 m) {
    const R sin3 = static_cast<R>(std::sin(2.0 * pi_ / 3.0)) * (Inv ? R(-1) : R(1));
    for (i64 k = 0; k < m; ++k) {
      const C t0 = out[k];
      const C t1 = out[m + k] * tw<Inv>(k * fstride);
      const C t2 = out[2 * m + k] * tw<Inv>(2 * k * fstride);
      const C s = t1 + t2;
      const C d = t1 - t2;
      const C rot(d.imag() * sin3, -d.real() * sin3);  // -i*sin3*d
      const C half = t0 - R(0.5) * s;
      out[k] = t0 + s;
      out[m + k] = half + rot;
      out[2 * m + k] = half - rot;
    }
  }

  template <bool Inv>
  void bfly4(C* out, i64 fstride, i64 m) {
    for (i64 k = 0; k < m; ++k) {
      const C t0 = out[k];
      const C t1 = out[m + k] * tw<Inv>(k * fstride);
      const C t2 = out[2 * m + k] * tw<Inv>(2 * k * fstride);
      const C t3 = out[3 * m + k] * tw<Inv>(3 * k * fstride);
      const C s02 = t0 + t2, d02 = t0 - t2;
      const C s13 = t1 + t3, d13 = t1 - t3;
      // forward: +-(-i)*d13, inverse: +-(+i)*d13
      const C jd13 = Inv ? C(-d13.imag(), d13.real()) : C(d13.imag(), -d13.real());
      out[k] = s02 + s13;
      out[2 * m + k] = s02 - s13;
      out[m + k] = d02 + jd13;
      out[3 * m + k] = d02 - jd13;
    }
  }

  template <bool Inv>
  void bfly_generic(C* out, i64 fstride, i64 m, int p) {
    C* t = bfly_scratch_.data();
    const i64 wstep = m * fstride;  // == n/p
    for (i64 k = 0; k < m; ++k) {
      t[0] = out[k];
      for (i64 j = 1; j < p; ++j) t[j] = out[j * m + k] * tw<Inv>(j * k * fstride);
      for (i64 r = 0; r < p; ++r) {
        C acc = t[0];
        for (i64 j = 1; j < p; ++j) acc += t[j] * tw<Inv>(j * r * wstep);
        out[r * m + k] = acc;
      }
    }
  }

  static constexpr double pi_ = 3.141592653589793238462643383279502884;
  i64 n_;
  std::vector<std::pair<int, i64>> stages_;
  std::vector<C> tw_;
  std::vector<C> in_scratch_;
  std::vector<C> bfly_scratch_;
};

template <class R>
Fft1d<R>& plan_for(i64 n) {
  static std::map<i64, std::unique_ptr<Fft1d<R>>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<Fft1d<R>>(n)).first;
  return *it->second;
}

namespace detail {

/// Applies fn to every line of `t` along `axis` (gather/transform/scatter;
/// lines along the last axis are transformed in place).
template <class R, class Fn>
void transform_axis(Tensor<std::complex<R>>& t, int axis, Fn&& fn) {
  const Shape& s = t.shape();
  const i64 n = s[static_cast<std::size_t>(axis)];
  i64 inner = 1;
  for (int a = axis + 1; a < t.rank(); ++a) inner *= s[static_cast<std::size_t>(a)];
  i64 outer = 1;
  for (int a = 0; a < axis; ++a) outer *= s[static_cast<std::size_t>(a)];
  if (inner == 1) {
    for (i64 o = 0; o < outer; ++o) fn(t.data() + o * n);
    return;
  }
  std::vector<std::complex<R>> line(static_cast<std::size_t>(n));
  for (i64 o = 0; o < outer; ++o) {
    std::complex<R>* base = t.data() + o * n * inner;
    for (i64 i = 0; i < inner; ++i) {
      for (i64 k = 0; k < n; ++k) line[static_cast<std::size_t>(k)] = base[k * inner + i];
      fn(line.data());
      for (i64 k = 0; k < n; ++k) base[k * inner + i] = line[static_cast<std::size_t>(k)];
    }
  }
}

template <class R>
void check_spatial_axes(const Tensor<std::complex<R>>& x, int spatial_axes, const char* op) {
  fnet::detail::check(spatial_axes >= 1, std::string(op) + ": needs at least one spatial axis");
  fnet::detail::check(spatial_axes <= x.rank(),
                      std::string(op) + ": " + std::to_string(spatial_axes) +
                          " spatial axes exceed tensor rank of shape " + shape_str(x.shape()));
}

}  // namespace detail

/// Unnormalized forward DFT over the trailing `spatial_axes` axes.
template <class R>
Tensor<std::complex<R>> dft(const Tensor<std::complex<R>>& x, int spatial_axes) {
  detail::check_spatial_axes(x, spatial_axes, "dft");
  Tensor<std::complex<R>> out = x;
  for (int a = x.rank() - spatial_axes; a < x.rank(); ++a) {
    auto& plan = plan_for<R>(out.dim(a));
    detail::transform_axis<R>(out, a, [&](std::complex<R>* line) { plan.forward(line); });
  }
  return out;
}

/// Inverse DFT over the trailing `spatial_axes` axes, normalized by 1/N
/// where N is the product of the transformed lengths.
template <class R>
Tensor<std::complex<R>> idft(const Tensor<std::complex<R>>& x, int spatial_axes) {
  detail::check_spatial_axes(x, spatial_axes, "idft");
  Tensor<std::complex<R>> out = x;
  i64 total = 1;
  for (int a = x.rank() - spatial_axes; a < x.rank(); ++a) {
    total *= out.dim(a);
    auto& plan = plan_for<R>(out.dim(a));
    detail::transform_axis<R>(out, a, [&](std::complex<R>* line) { plan.inverse(line); });
  }
  const R inv = R(1) / static_cast<R>(total);
  for (i64 i = 0; i < out.size(); ++i) out[i] *= inv;
  return out;
}

}  // namespace fnet::fft
