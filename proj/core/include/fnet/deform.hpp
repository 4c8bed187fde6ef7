#pragma once

#include "fnet/tensor.hpp"

namespace fnet::deform {

namespace detail {

using fnet::detail::check;

inline void check_field(const Shape& field, const char* op) {
  check(field.size() >= 3 && field.size() <= 4,
        std::string(op) + ": displacement field must be (2, H, W) or (3, D, H, W), got " +
            shape_str(field));
  check(static_cast<std::size_t>(field[0]) + 1 == field.size(),
        std::string(op) + ": leading axis of " + shape_str(field) +
            " must equal the spatial rank");
}

inline Shape field_spatial(const Shape& field) { return Shape(field.begin() + 1, field.end()); }

}  // namespace detail

/// (S, spatial...) grid of voxel coordinates: channel a holds the index along
/// spatial axis a, so grid(0, i, j) == i and grid(1, i, j) == j in 2-d.
template <class R>
Tensor<R> identity_grid(const Shape& spatial) {
  detail::check(spatial.size() == 2 || spatial.size() == 3,
                "identity_grid: spatial shape must be rank 2 or 3, got " + shape_str(spatial));
  Shape shape;
  shape.push_back(static_cast<i64>(spatial.size()));
  shape.insert(shape.end(), spatial.begin(), spatial.end());
  Tensor<R> g(shape);
  const i64 n = shape_size(spatial);
  const Shape strides = row_major_strides(spatial);
  for (std::size_t a = 0; a < spatial.size(); ++a) {
    R* ch = g.data() + static_cast<i64>(a) * n;
    for (i64 i = 0; i < n; ++i) ch[i] = static_cast<R>((i / strides[a]) % spatial[a]);
  }
  return g;
}

namespace detail {

template <class R>
struct AxisSample {
  i64 i0, i1;
  R frac;
  bool clamped;  // raw position fell outside [0, n-1]
};

template <class R>
inline AxisSample<R> axis_sample(R pos, i64 n) {
  AxisSample<R> s;
  s.clamped = pos < R(0) || pos > R(n - 1);
  const R p = std::min(std::max(pos, R(0)), static_cast<R>(n - 1));
  s.i0 = static_cast<i64>(std::floor(p));
  if (s.i0 > n - 2) s.i0 = std::max<i64>(n - 2, 0);
  s.i1 = std::min<i64>(s.i0 + 1, n - 1);
  s.frac = p - static_cast<R>(s.i0);
  return s;
}

}  // namespace detail

/// Multi-linear resampling of each channel of f at positions x + u(x), with
/// clamp-to-edge boundary handling. f is (C, spatial...), u is (S, spatial...)
/// over the same spatial grid; the result has f's shape.
template <class R>
Tensor<R> warp_channels(const Tensor<R>& f, const Tensor<R>& u) {
  detail::check_field(u.shape(), "warp");
  const Shape spatial = detail::field_spatial(u.shape());
  detail::check(f.rank() == static_cast<int>(spatial.size()) + 1 &&
                    Shape(f.shape().begin() + 1, f.shape().end()) == spatial,
                "warp: channels tensor " + shape_str(f.shape()) +
                    " does not sit on the field grid " + shape_str(u.shape()));
  Tensor<R> out(f.shape());
  const i64 C = f.dim(0);
  const i64 n = shape_size(spatial);

  if (spatial.size() == 2) {
    const i64 H = spatial[0], W = spatial[1];
    const R* u0 = u.data();
    const R* u1 = u.data() + n;
    for (i64 y = 0; y < H; ++y) {
      for (i64 x = 0; x < W; ++x) {
        const i64 v = y * W + x;
        const auto sy = detail::axis_sample<R>(static_cast<R>(y) + u0[v], H);
        const auto sx = detail::axis_sample<R>(static_cast<R>(x) + u1[v], W);
        const R w00 = (1 - sy.frac) * (1 - sx.frac), w01 = (1 - sy.frac) * sx.frac;
        const R w10 = sy.frac * (1 - sx.frac), w11 = sy.frac * sx.frac;
        for (i64 c = 0; c < C; ++c) {
          const R* fc = f.data() + c * n;
          out[c * n + v] = w00 * fc[sy.i0 * W + sx.i0] + w01 * fc[sy.i0 * W + sx.i1] +
                           w10 * fc[sy.i1 * W + sx.i0] + w11 * fc[sy.i1 * W + sx.i1];
        }
      }
    }
  } else {
    const i64 D = spatial[0], H = spatial[1], W = spatial[2];
    const R* u0 = u.data();
    const R* u1 = u.data() + n;
    const R* u2 = u.data() + 2 * n;
    for (i64 z = 0; z < D; ++z) {
      for (i64 y = 0; y < H; ++y) {
        for (i64 x = 0; x < W; ++x) {
          const i64 v = (z * H + y) * W + x;
          const auto sz = detail::axis_sample<R>(static_cast<R>(z) + u0[v], D);
          const auto sy = detail::axis_sample<R>(static_cast<R>(y) + u1[v], H);
          const auto sx = detail::axis_sample<R>(static_cast<R>(x) + u2[v], W);
          for (i64 c = 0; c < C; ++c) {
            const R* fc = f.data() + c * n;
            R acc = 0;
            for (int dz = 0; dz < 2; ++dz) {
              const R wz = dz ? sz.frac : 1 - sz.frac;
              const i64 iz = dz ? sz.i1 : sz.i0;
              for (int dy = 0; dy < 2; ++dy) {
                const R wy = dy ? sy.frac : 1 - sy.frac;
                const i64 iy = dy ? sy.i1 : sy.i0;
                for (int dx = 0; dx < 2; ++dx) {
                  const R wx = dx ? sx.frac : 1 - sx.frac;
                  const i64 ix = dx ? sx.i1 : sx.i0;
                  acc += wz * wy * wx * fc[(iz * H + iy) * W + ix];
                }
              }
            }
            out[c * n + v] = acc;
          }
        }
      }
    }
  }
  return out;
}

/// warp of a single image (spatial rank only, no channel axis).
template <class R>
Tensor<R> warp(const Tensor<R>& image, const Tensor<R>& u) {
  detail::check_field(u.shape(), "warp");
  Shape chan_shape = u.shape();
  chan_shape[0] = 1;
  const Tensor<R> warped = warp_channels(image.reshaped(chan_shape), u);
  return warped.reshaped(image.shape());
}

/// Gradients of warp_channels under a cotangent g_out: accumulates into g_f
/// (scatter of the interpolation weights) and g_u (image-gradient times
/// cotangent, zero where the sample position was clamped). Pass nullptr to
/// skip either output. 2-d only companion in 3-d follows the same scheme.
template <class R>
void warp_channels_backward(const Tensor<R>& f, const Tensor<R>& u, const Tensor<R>& g_out,
                            Tensor<R>* g_f, Tensor<R>* g_u) {
  detail::check_field(u.shape(), "warp_backward");
  fnet::detail::check_same_shape(f, g_out, "warp_backward");
  const Shape spatial = detail::field_spatial(u.shape());
  const i64 C = f.dim(0);
  const i64 n = shape_size(spatial);
  if (g_f && g_f->shape() != f.shape()) *g_f = Tensor<R>(f.shape());
  if (g_u && g_u->shape() != u.shape()) *g_u = Tensor<R>(u.shape());

  if (spatial.size() == 2) {
    const i64 H = spatial[0], W = spatial[1];
    const R* u0 = u.data();
    const R* u1 = u.data() + n;
    for (i64 y = 0; y < H; ++y) {
      for (i64 x = 0; x < W; ++x) {
        const i64 v = y * W + x;
        const auto sy = detail::axis_sample<R>(static_cast<R>(y) + u0[v], H);
        const auto sx = detail::axis_sample<R>(static_cast<R>(x) + u1[v], W);
        R gy_acc = 0, gx_acc = 0;
        for (i64 c = 0; c < C; ++c) {
          const R g = g_out[c * n + v];
          const R* fc = f.data() + c * n;
          const R f00 = fc[sy.i0 * W + sx.i0], f01 = fc[sy.i0 * W + sx.i1];
          const R f10 = fc[sy.i1 * W + sx.i0], f11 = fc[sy.i1 * W + sx.i1];
          if (g_f) {
            R* gf = g_f->data() + c * n;
            gf[sy.i0 * W + sx.i0] += (1 - sy.frac) * (1 - sx.frac) * g;
            gf[sy.i0 * W + sx.i1] += (1 - sy.frac) * sx.frac * g;
            gf[sy.i1 * W + sx.i0] += sy.frac * (1 - sx.frac) * g;
            gf[sy.i1 * W + sx.i1] += sy.frac * sx.frac * g;
          }
          gy_acc += g * ((1 - sx.frac) * (f10 - f00) + sx.frac * (f11 - f01));
          gx_acc += g * ((1 - sy.frac) * (f01 - f00) + sy.frac * (f11 - f10));
        }
        if (g_u) {
          (*g_u)[v] += sy.clamped ? R(0) : gy_acc;
          (*g_u)[n + v] += sx.clamped ? R(0) : gx_acc;
        }
      }
    }
  } else {
    const i64 D = spatial[0], H = spatial[1], W = spatial[2];
    const R* u0 = u.data();
    const R* u1 = u.data() + n;
    const R* u2 = u.data() + 2 * n;
    for (i64 z = 0; z < D; ++z) {
      for (i64 y = 0; y < H; ++y) {
        for (i64 x = 0; x < W; ++x) {
          const i64 v = (z * H + y) * W + x;
          const auto sz = detail::axis_sample<R>(static_cast<R>(z) + u0[v], D);
          const auto sy = detail::axis_sample<R>(static_cast<R>(y) + u1[v], H);
          const auto sx = detail::axis_sample<R>(static_cast<R>(x) + u2[v], W);
          R gz_acc = 0, gy_acc = 0, gx_acc = 0;
          for (i64 c = 0; c < C; ++c) {
            const R g = g_out[c * n + v];
            const R* fc = f.data() + c * n;
            R* gf = g_f ? g_f->data() + c * n : nullptr;
            for (int dz = 0; dz < 2; ++dz) {
              const R wz = dz ? sz.frac : 1 - sz.frac;
              const R dwz = dz ? R(1) : R(-1);
              const i64 iz = dz ? sz.i1 : sz.i0;
              for (int dy = 0; dy < 2; ++dy) {
                const R wy = dy ? sy.frac : 1 - sy.frac;
                const R dwy = dy ? R(1) : R(-1);
                const i64 iy = dy ? sy.i1 : sy.i0;
                for (int dx = 0; dx < 2; ++dx) {
                  const R wx = dx ? sx.frac : 1 - sx.frac;
                  const R dwx = dx ? R(1) : R(-1);
                  const i64 ix = dx ? sx.i1 : sx.i0;
                  const i64 idx = (iz * H + iy) * W + ix;
                  if (gf) gf[idx] += wz * wy * wx * g;
                  const R fv = fc[idx];
                  gz_acc += g * dwz * wy * wx * fv;
                  gy_acc += g * wz * dwy * wx * fv;
                  gx_acc += g * wz * wy * dwx * fv;
                }
              }
            }
          }
          if (g_u) {
            (*g_u)[v] += sz.clamped ? R(0) : gz_acc;
            (*g_u)[n + v] += sy.clamped ? R(0) : gy_acc;
            (*g_u)[2 * n + v] += sx.clamped ? R(0) : gx_acc;
          }
        }
      }
    }
  }
}

/// Nearest-neighbour warp of an integer label map (positions x + u(x),
/// rounded, clamp-to-edge).
template <class R>
Tensor<std::int32_t> warp_nn(const Tensor<std::int32_t>& labels, const Tensor<R>& u) {
  detail::check_field(u.shape(), "warp_nn");
  const Shape spatial = detail::field_spatial(u.shape());
  detail::check(labels.shape() == spatial, "warp_nn: label map " + shape_str(labels.shape()) +
                                               " does not match field grid " +
                                               shape_str(u.shape()));
  Tensor<std::int32_t> out(spatial);
  const i64 n = shape_size(spatial);
  const int S = static_cast<int>(spatial.size());
  const Shape strides = row_major_strides(spatial);
  for (i64 v = 0; v < n; ++v) {
    i64 off = 0;
    for (int a = 0; a < S; ++a) {
      const i64 coord = (v / strides[a]) % spatial[a];
      const R p = static_cast<R>(coord) + u[a * n + v];
      i64 idx = static_cast<i64>(std::floor(p + R(0.5)));
      idx = std::min(std::max<i64>(idx, 0), spatial[a] - 1);
      off += idx * strides[a];
    }
    out[v] = labels[off];
  }
  return out;
}

/// Composition of displacement fields: the field of warp(. , u) after
/// warp(. , v), i.e. compose(u, v)(x) = v(x) + u(x + v(x)).
template <class R>
Tensor<R> compose(const Tensor<R>& u, const Tensor<R>& v) {
  fnet::detail::check_same_shape(u, v, "compose");
  return add(v, warp_channels(u, v));
}

/// Scaling and squaring of a stationary velocity field: v / 2^steps followed
/// by `steps` self-compositions. Returns a displacement field.
template <class R>
Tensor<R> exp_svf(const Tensor<R>& v, int steps = 7) {
  detail::check_field(v.shape(), "exp_svf");
  detail::check(steps >= 0, "exp_svf: steps must be non-negative");
  Tensor<R> u = scale(v, static_cast<R>(std::ldexp(1.0, -steps)));
  for (int s = 0; s < steps; ++s) u = compose(u, u);
  return u;
}

namespace detail {

template <class R>
struct ResizeAxis {
  std::vector<i64> i0, i1;
  std::vector<R> frac;
};

template <class R>
ResizeAxis<R> resize_axis(i64 n_in, i64 n_out) {
  ResizeAxis<R> ax;
  ax.i0.resize(static_cast<std::size_t>(n_out));
  ax.i1.resize(static_cast<std::size_t>(n_out));
  ax.frac.resize(static_cast<std::size_t>(n_out));
  const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
  for (i64 o = 0; o < n_out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const auto s = axis_sample<R>(static_cast<R>(src), n_in);
    ax.i0[static_cast<std::size_t>(o)] = s.i0;
    ax.i1[static_cast<std::size_t>(o)] = s.i1;
    ax.frac[static_cast<std::size_t>(o)] = s.frac;
  }
  return ax;
}

}  // namespace detail

/// Multi-linear resize of (C, spatial...) to out_spatial, half-pixel index
/// mapping src = (dst + 0.5) * in/out - 0.5 with clamp-to-edge.
template <class R>
Tensor<R> resize_linear(const Tensor<R>& f, const Shape& out_spatial) {
  detail::check(f.rank() >= 3 && f.rank() <= 4,
                "resize: input must be (C, H, W) or (C, D, H, W), got " + shape_str(f.shape()));
  detail::check(static_cast<int>(out_spatial.size()) + 1 == f.rank(),
                "resize: output spatial rank " + shape_str(out_spatial) +
                    " does not match input " + shape_str(f.shape()));
  const i64 C = f.dim(0);
  Shape out_shape;
  out_shape.push_back(C);
  out_shape.insert(out_shape.end(), out_spatial.begin(), out_spatial.end());
  Tensor<R> out(out_shape);

  if (f.rank() == 3) {
    const i64 H = f.dim(1), W = f.dim(2);
    const i64 OH = out_spatial[0], OW = out_spatial[1];
    const auto ay = detail::resize_axis<R>(H, OH);
    const auto ax = detail::resize_axis<R>(W, OW);
    for (i64 c = 0; c < C; ++c) {
      const R* fc = f.data() + c * H * W;
      R* oc = out.data() + c * OH * OW;
      for (i64 oy = 0; oy < OH; ++oy) {
        const R fy = ay.frac[oy];
        const R* r0 = fc + ay.i0[oy] * W;
        const R* r1 = fc + ay.i1[oy] * W;
        for (i64 ox = 0; ox < OW; ++ox) {
          const R fx = ax.frac[ox];
          const i64 x0 = ax.i0[ox], x1 = ax.i1[ox];
          oc[oy * OW + ox] = (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x1]) +
                             fy * ((1 - fx) * r1[x0] + fx * r1[x1]);
        }
      }
    }
    return out;
  }

  const i64 D = f.dim(1), H = f.dim(2), W = f.dim(3);
  const i64 OD = out_spatial[0], OH = out_spatial[1], OW = out_spatial[2];
  const auto az = detail::resize_axis<R>(D, OD);
  const auto ay = detail::resize_axis<R>(H, OH);
  const auto ax = detail::resize_axis<R>(W, OW);
  for (i64 c = 0; c < C; ++c) {
    const R* fc = f.data() + c * D * H * W;
    R* oc = out.data() + c * OD * OH * OW;
    for (i64 oz = 0; oz < OD; ++oz) {
      for (i64 oy = 0; oy < OH; ++oy) {
        for (i64 ox = 0; ox < OW; ++ox) {
          R acc = 0;
          for (int dz = 0; dz < 2; ++dz) {
            const R wz = dz ? az.frac[oz] : 1 - az.frac[oz];
            const i64 iz = dz ? az.i1[oz] : az.i0[oz];
            for (int dy = 0; dy < 2; ++dy) {
              const R wy = dy ? ay.frac[oy] : 1 - ay.frac[oy];
              const i64 iy = dy ? ay.i1[oy] : ay.i0[oy];
              for (int dx = 0; dx < 2; ++dx) {
                const R wx = dx ? ax.frac[ox] : 1 - ax.frac[ox];
                const i64 ix = dx ? ax.i1[ox] : ax.i0[ox];
                acc += wz * wy * wx * fc[(iz * H + iy) * W + ix];
              }
            }
          }
          oc[(oz * OH + oy) * OW + ox] = acc;
        }
      }
    }
  }
  return out;
}

/// Adjoint of resize_linear: scatters the cotangent (C, out spatial) back
/// onto the input grid.
template <class R>
Tensor<R> resize_linear_adjoint(const Tensor<R>& g, const Shape& in_spatial) {
  detail::check(g.rank() >= 3 && g.rank() <= 4,
                "resize_adjoint: cotangent must be (C, H, W) or (C, D, H, W), got " +
                    shape_str(g.shape()));
  const i64 C = g.dim(0);
  Shape in_shape;
  in_shape.push_back(C);
  in_shape.insert(in_shape.end(), in_spatial.begin(), in_spatial.end());
  Tensor<R> out(in_shape);

  if (g.rank() == 3) {
    const i64 OH = g.dim(1), OW = g.dim(2);
    const i64 H = in_spatial[0], W = in_spatial[1];
    const auto ay = detail::resize_axis<R>(H, OH);
    const auto ax = detail::resize_axis<R>(W, OW);
    for (i64 c = 0; c < C; ++c) {
      const R* gc = g.data() + c * OH * OW;
      R* oc = out.data() + c * H * W;
      for (i64 oy = 0; oy < OH; ++oy) {
        const R fy = ay.frac[oy];
        R* r0 = oc + ay.i0[oy] * W;
        R* r1 = oc + ay.i1[oy] * W;
        for (i64 ox = 0; ox < OW; ++ox) {
          const R fx = ax.frac[ox];
          const i64 x0 = ax.i0[ox], x1 = ax.i1[ox];
          const R gv = gc[oy * OW + ox];
          r0[x0] += (1 - fy) * (1 - fx) * gv;
          r0[x1] += (1 - fy) * fx * gv;
          r1[x0] += fy * (1 - fx) * gv;
          r1[x1] += fy * fx * gv;
        }
      }
    }
    return out;
  }

  const i64 OD = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  const i64 D = in_spatial[0], H = in_spatial[1], W = in_spatial[2];
  const auto az = detail::resize_axis<R>(D, OD);
  const auto ay = detail::resize_axis<R>(H, OH);
  const auto ax = detail::resize_axis<R>(W, OW);
  for (i64 c = 0; c < C; ++c) {
    const R* gc = g.data() + c * OD * OH * OW;
    R* oc = out.data() + c * D * H * W;
    for (i64 oz = 0; oz < OD; ++oz) {
      for (i64 oy = 0; oy < OH; ++oy) {
        for (i64 ox = 0; ox < OW; ++ox) {
          const R gv = gc[(oz * OH + oy) * OW + ox];
          for (int dz = 0; dz < 2; ++dz) {
            const R wz = dz ? az.frac[oz] : 1 - az.frac[oz];
            const i64 iz = dz ? az.i1[oz] : az.i0[oz];
            for (int dy = 0; dy < 2; ++dy) {
              const R wy = dy ? ay.frac[oy] : 1 - ay.frac[oy];
              const i64 iy = dy ? ay.i1[oy] : ay.i0[oy];
              for (int dx = 0; dx < 2; ++dx) {
                const R wx = dx ? ax.frac[ox] : 1 - ax.frac[ox];
                const i64 ix = dx ? ax.i1[ox] : ax.i0[ox];
                oc[(iz * H + iy) * W + ix] += wz * wy * wx * gv;
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Determinant of the Jacobian of phi = id + u at every voxel (central
/// differences inside, one-sided at the borders).
template <class R>
Tensor<R> jacobian_det(const Tensor<R>& u) {
  detail::check_field(u.shape(), "jacobian_det");
  const Shape spatial = detail::field_spatial(u.shape());
  const int S = static_cast<int>(spatial.size());
  const i64 n = shape_size(spatial);
  const Shape strides = row_major_strides(spatial);
  Tensor<R> det(spatial);

  // J[i][j] = d phi_i / d x_j at one voxel
  auto deriv = [&](int i, int j, i64 v, const std::vector<i64>& coord) -> R {
    const i64 c = coord[static_cast<std::size_t>(j)];
    const i64 nj = spatial[static_cast<std::size_t>(j)];
    const i64 st = strides[static_cast<std::size_t>(j)];
    const R* ui = u.data() + static_cast<i64>(i) * n;
    R d;
    if (c == 0)
      d = ui[v + st] - ui[v];
    else if (c == nj - 1)
      d = ui[v] - ui[v - st];
    else
      d = (ui[v + st] - ui[v - st]) / R(2);
    return d + (i == j ? R(1) : R(0));
  };

  std::vector<i64> coord(static_cast<std::size_t>(S), 0);
  for (i64 v = 0; v < n; ++v) {
    for (int a = 0; a < S; ++a) coord[static_cast<std::size_t>(a)] = (v / strides[a]) % spatial[a];
    if (S == 2) {
      const R a00 = deriv(0, 0, v, coord), a01 = deriv(0, 1, v, coord);
      const R a10 = deriv(1, 0, v, coord), a11 = deriv(1, 1, v, coord);
      det[v] = a00 * a11 - a01 * a10;
    } else {
      R J[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) J[i][j] = deriv(i, j, v, coord);
      det[v] = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
               J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
               J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    }
  }
  return det;
}

/// Percentage of voxels whose Jacobian determinant is <= 0.
template <class R>
double neg_jac_fraction(const Tensor<R>& u) {
  const Tensor<R> det = jacobian_det(u);
  i64 bad = 0;
  for (i64 i = 0; i < det.size(); ++i)
    if (det[i] <= R(0)) ++bad;
  return 100.0 * static_cast<double>(bad) / static_cast<double>(det.size());
}

}  // namespace fnet::deform
