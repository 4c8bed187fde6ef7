#pragma once

#include "fnet/fft.hpp"
#include "fnet/tensor.hpp"

namespace fnet::fourier {

namespace detail {

using fnet::detail::check;

inline void check_spatial(const Shape& shape, int spatial_axes) {
  check(spatial_axes >= 1, "codec: needs at least one spatial axis");
  check(spatial_axes <= static_cast<int>(shape.size()),
        "codec: spatial rank exceeds tensor rank for shape " + shape_str(shape));
}

inline void split_spatial(const Shape& shape, int spatial_axes, Shape& lead, Shape& spatial) {
  check_spatial(shape, spatial_axes);
  lead.assign(shape.begin(), shape.end() - spatial_axes);
  spatial.assign(shape.end() - spatial_axes, shape.end());
}

}  // namespace detail

/// Circular roll along one axis: out[(i + offset) mod n] = in[i].
template <class T>
Tensor<T> roll(const Tensor<T>& t, int axis, i64 offset) {
  const i64 n = t.dim(axis);
  i64 off = offset % n;
  if (off < 0) off += n;
  Tensor<T> out(t.shape());
  i64 inner = 1;
  for (int a = axis + 1; a < t.rank(); ++a) inner *= t.dim(a);
  const i64 outer = t.size() / (n * inner);
  for (i64 o = 0; o < outer; ++o) {
    const T* src = t.data() + o * n * inner;
    T* dst = out.data() + o * n * inner;
    for (i64 i = 0; i < n; ++i) {
      const i64 j = (i + off) % n;
      std::copy(src + i * inner, src + (i + 1) * inner, dst + j * inner);
    }
  }
  return out;
}

/// Moves DC (index 0) to index floor(n/2) on each trailing spatial axis.
template <class T>
Tensor<T> center_shift(const Tensor<T>& x, int spatial_axes) {
  detail::check_spatial(x.shape(), spatial_axes);
  Tensor<T> out = x;
  for (int a = x.rank() - spatial_axes; a < x.rank(); ++a) out = roll(out, a, x.dim(a) / 2);
  return out;
}

/// Inverse of center_shift (offset ceil(n/2) per trailing spatial axis).
template <class T>
Tensor<T> center_unshift(const Tensor<T>& x, int spatial_axes) {
  detail::check_spatial(x.shape(), spatial_axes);
  Tensor<T> out = x;
  for (int a = x.rank() - spatial_axes; a < x.rank(); ++a)
    out = roll(out, a, x.dim(a) - x.dim(a) / 2);
  return out;
}

/// Centered low-frequency block of a spectrum: the band kept when reducing a
/// length-N axis by factor r is the n = N/r consecutive indices starting at
/// (N - n)/2 in centered (center_shift) layout.
struct BandSpec {
  Shape full_spatial;
  Shape reduction;

  Shape patch_spatial() const {
    Shape p(full_spatial.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = full_spatial[i] / reduction[i];
    return p;
  }

  Shape starts() const {
    Shape s(full_spatial.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = (full_spatial[i] - full_spatial[i] / reduction[i]) / 2;
    return s;
  }

  void validate() const {
    detail::check(!full_spatial.empty(), "band spec: empty spatial shape");
    detail::check(reduction.size() == full_spatial.size(),
                  "band spec: reduction rank " + shape_str(reduction) +
                      " does not match spatial shape " + shape_str(full_spatial));
    for (std::size_t i = 0; i < reduction.size(); ++i) {
      const i64 n = full_spatial[i], r = reduction[i];
      detail::check(r >= 1, "band spec: reduction factors must be positive, got " + shape_str(reduction));
      detail::check(n % r == 0, "band spec: reduction " + std::to_string(r) +
                                    " does not divide axis length " + std::to_string(n));
      detail::check(r == 1 || (n / r) % 2 == 0,
                    "band spec: reduced length " + std::to_string(n / r) +
                        " must be even (axis length " + std::to_string(n) + ", reduction " +
                        std::to_string(r) + ")");
    }
  }
};

/// Band-limited spectral patch: the kept complex coefficients (centered
/// layout, trailing spatial axes) plus the full-resolution geometry needed to
/// re-embed them.
template <class R>
struct BandLimitedPatch {
  Tensor<std::complex<R>> coeffs;
  BandSpec band;
};

/// Extracts the centered low-frequency block from a centered spectrum. The
/// trailing `reduction.size()` axes are spatial; leading axes are kept as is.
template <class R>
BandLimitedPatch<R> crop_center(const Tensor<std::complex<R>>& x_centered, const Shape& reduction) {
  Shape lead, spatial;
  detail::split_spatial(x_centered.shape(), static_cast<int>(reduction.size()), lead, spatial);
  BandSpec band{spatial, reduction};
  band.validate();
  const Shape patch = band.patch_spatial();
  const Shape start = band.starts();

  Shape out_shape = lead;
  out_shape.insert(out_shape.end(), patch.begin(), patch.end());
  Tensor<std::complex<R>> out(out_shape);

  const i64 lead_n = shape_size(lead.empty() ? Shape{1} : lead);
  const Shape src_strides = row_major_strides(spatial);
  const i64 spatial_full = shape_size(spatial);
  const i64 spatial_patch = shape_size(patch);
  const int sr = static_cast<int>(spatial.size());

  std::vector<i64> idx(static_cast<std::size_t>(sr), 0);
  for (i64 l = 0; l < lead_n; ++l) {
    const std::complex<R>* src = x_centered.data() + l * spatial_full;
    std::complex<R>* dst = out.data() + l * spatial_patch;
    std::fill(idx.begin(), idx.end(), 0);
    for (i64 p = 0; p < spatial_patch; ++p) {
      i64 off = 0;
      for (int a = 0; a < sr; ++a) off += (start[a] + idx[a]) * src_strides[a];
      dst[p] = src[off];
      for (int a = sr - 1; a >= 0; --a) {
        if (++idx[a] < patch[a]) break;
        idx[a] = 0;
      }
    }
  }
  return {std::move(out), std::move(band)};
}

/// Embeds a patch back into a zero full-resolution centered spectrum.
template <class R>
Tensor<std::complex<R>> pad_center(const BandLimitedPatch<R>& p) {
  p.band.validate();
  const Shape patch = p.band.patch_spatial();
  const Shape start = p.band.starts();
  const int sr = static_cast<int>(patch.size());
  Shape lead, coeff_spatial;
  detail::split_spatial(p.coeffs.shape(), sr, lead, coeff_spatial);
  detail::check(coeff_spatial == patch, "pad_center: patch coefficients " +
                                            shape_str(p.coeffs.shape()) +
                                            " do not match band spec patch " + shape_str(patch));

  Shape out_shape = lead;
  out_shape.insert(out_shape.end(), p.band.full_spatial.begin(), p.band.full_spatial.end());
  Tensor<std::complex<R>> out(out_shape);

  const i64 lead_n = shape_size(lead.empty() ? Shape{1} : lead);
  const Shape dst_strides = row_major_strides(p.band.full_spatial);
  const i64 spatial_full = shape_size(p.band.full_spatial);
  const i64 spatial_patch = shape_size(patch);

  std::vector<i64> idx(static_cast<std::size_t>(sr), 0);
  for (i64 l = 0; l < lead_n; ++l) {
    const std::complex<R>* src = p.coeffs.data() + l * spatial_patch;
    std::complex<R>* dst = out.data() + l * spatial_full;
    std::fill(idx.begin(), idx.end(), 0);
    for (i64 q = 0; q < spatial_patch; ++q) {
      i64 off = 0;
      for (int a = 0; a < sr; ++a) off += (start[a] + idx[a]) * dst_strides[a];
      dst[off] = src[q];
      for (int a = sr - 1; a >= 0; --a) {
        if (++idx[a] < patch[a]) break;
        idx[a] = 0;
      }
    }
  }
  return out;
}

/// {0,1} indicator of the kept band, in centered layout over the full grid.
template <class R>
Tensor<R> freq_mask(const Shape& full_spatial, const Shape& reduction) {
  BandSpec band{full_spatial, reduction};
  band.validate();
  const Shape patch = band.patch_spatial();
  const Shape start = band.starts();
  Tensor<R> out(full_spatial);
  const Shape strides = row_major_strides(full_spatial);
  const int sr = static_cast<int>(full_spatial.size());
  std::vector<i64> idx(static_cast<std::size_t>(sr), 0);
  const i64 n_patch = shape_size(patch);
  for (i64 q = 0; q < n_patch; ++q) {
    i64 off = 0;
    for (int a = 0; a < sr; ++a) off += (start[a] + idx[a]) * strides[a];
    out[off] = R(1);
    for (int a = sr - 1; a >= 0; --a) {
      if (++idx[a] < patch[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

/// Zeroes the leading (most negative frequency) slice of each even-length
/// trailing spatial axis of a centered patch. A real band-limited field has
/// no energy there: the block is asymmetric (it keeps -n/2 but not +n/2), so
/// any content on that slice has no conjugate partner and would leak an
/// imaginary part / out-of-band energy through the decoder.
template <class R>
Tensor<std::complex<R>> zero_nyquist(const Tensor<std::complex<R>>& patch, int spatial_axes) {
  detail::check_spatial(patch.shape(), spatial_axes);
  Tensor<std::complex<R>> out = patch;
  for (int a = out.rank() - spatial_axes; a < out.rank(); ++a) {
    if (out.dim(a) % 2 != 0) continue;
    const i64 n = out.dim(a);
    i64 inner = 1;
    for (int b = a + 1; b < out.rank(); ++b) inner *= out.dim(b);
    const i64 outer = out.size() / (n * inner);
    for (i64 o = 0; o < outer; ++o)
      std::fill_n(out.data() + o * n * inner, inner, std::complex<R>{});
  }
  return out;
}

template <class R>
struct DecodeResult {
  Tensor<R> field;
  R max_imag = 0;        // largest |imag| discarded by the real() projection
  R imag_ratio = 0;      // ||imag||_2 / max(||real||_2, tiny)
};

/// Decodes a band-limited patch to the real full-resolution field:
/// real(idft(center_unshift(pad_center(patch)))). The imaginary residue is
/// recorded; it is ~1e-15 for genuinely band-limited (conjugate-symmetric)
/// patches and grows when the patch carries asymmetric content.
template <class R>
DecodeResult<R> decode_field(const BandLimitedPatch<R>& p) {
  Tensor<std::complex<R>> full = pad_center(p);
  full = center_unshift(full, static_cast<int>(p.band.full_spatial.size()));
  full = fft::idft(full, static_cast<int>(p.band.full_spatial.size()));
  DecodeResult<R> out;
  out.field = real(full);
  const Tensor<R> im = imag(full);
  out.max_imag = max_abs(im);
  out.imag_ratio = norm_l2(im) / std::max(norm_l2(out.field), R(1e-30));
  return out;
}

/// Band-limited spatial miniature of a real image: the centered low band of
/// its spectrum, inverse-transformed on the small grid. The small inverse
/// DFT's own 1/(prod n/r) normalization gives values scaled by prod(r)
/// relative to a plain subsampling of the ideal low-pass image, i.e. for a
/// field phi whose spectrum lies inside the band, the miniature equals
/// prod(r) * phi at the subsampled grid points.
template <class R>
Tensor<R> encode_band_limited_image(const Tensor<R>& image, const Shape& reduction) {
  const int sr = static_cast<int>(reduction.size());
  Tensor<std::complex<R>> spec = fft::dft(to_complex(image), sr);
  spec = center_shift(spec, sr);
  BandLimitedPatch<R> patch = crop_center(spec, reduction);
  Tensor<std::complex<R>> small = center_unshift(patch.coeffs, sr);
  small = fft::idft(small, sr);
  return real(small);
}

/// max |X| outside the band / max |X| inside, for the spectrum of a real
/// field. Zero (to rounding) when the field is band-limited.
template <class R>
R out_of_band_ratio(const Tensor<R>& field, const Shape& reduction) {
  const int sr = static_cast<int>(reduction.size());
  Shape lead, spatial;
  detail::split_spatial(field.shape(), sr, lead, spatial);
  Tensor<std::complex<R>> spec = center_shift(fft::dft(to_complex(field), sr), sr);
  const Tensor<R> mask = freq_mask<R>(spatial, reduction);
  const i64 spatial_n = shape_size(spatial);
  R in_max = 0, out_max = 0;
  for (i64 i = 0; i < spec.size(); ++i) {
    const R a = std::abs(spec[i]);
    if (mask[i % spatial_n] > R(0.5))
      in_max = std::max(in_max, a);
    else
      out_max = std::max(out_max, a);
  }
  return out_max / std::max(in_max, R(1e-30));
}

}  // namespace fnet::fourier
