#pragma once

#include <functional>
#include <memory>
#include <random>
#include <unordered_set>

#include "fnet/conv.hpp"
#include "fnet/deform.hpp"
#include "fnet/fft.hpp"
#include "fnet/fourier.hpp"
#include "fnet/tensor.hpp"

namespace fnet::ad {

/// Reverse-mode autodiff over tensor-valued nodes. Complex-valued segments of
/// the graph propagate cotangents of the real inner product Re<a, b>, so the
/// backward of every C-linear op is its conjugate-transpose.
struct NodeBase {
  std::vector<std::shared_ptr<NodeBase>> parents;
  std::function<void()> backprop;
  bool requires_grad = false;
  virtual ~NodeBase() = default;
};

template <class S>
struct Node final : NodeBase {
  Tensor<S> value;
  Tensor<S> grad;  // empty until something flows back

  void accumulate(Tensor<S> g) {
    if (grad.empty()) {
      grad = std::move(g);
      return;
    }
    fnet::detail::check_same_shape(grad, g, "grad accumulate");
    for (i64 i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<S> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<S> value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<S>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Accumulated gradient; zeros when nothing flowed back (e.g. the root does
  /// not depend on this leaf).
  Tensor<S> grad() const {
    return node_->grad.empty() ? Tensor<S>(node_->value.shape()) : node_->grad;
  }

  std::shared_ptr<Node<S>> node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

using fnet::detail::check;

template <class S>
Var<S> make_op(Tensor<S> value, std::vector<std::shared_ptr<NodeBase>> parents,
               std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  if (n->requires_grad && backprop) {
    Node<S>* self = n.get();
    n->backprop = [self, bp = std::move(backprop)]() { bp(*self); };
  }
  return Var<S>(std::move(n));
}

template <class S>
Node<S>& as(NodeBase& n) {
  return static_cast<Node<S>&>(n);
}

}  // namespace detail

/// Backpropagates from a scalar root through every ancestor that requires a
/// gradient. Reverse post-order DFS; each node's closure runs after all of
/// its live consumers.
template <class S>
void backward(const Var<S>& root) {
  detail::check(root.defined(), "backward: undefined root");
  detail::check(root.value().size() == 1,
                "backward: root must be a scalar, got shape " + shape_str(root.shape()));
  if (!root.node()->requires_grad) return;

  std::vector<NodeBase*> order;
  std::unordered_set<NodeBase*> seen;
  struct Frame {
    NodeBase* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      NodeBase* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor<S>(root.shape(), S(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

// ---- elementwise real ops ----

template <class R>
Var<R> add(const Var<R>& a, const Var<R>& b) {
  auto an = a.node(), bn = b.node();
  return detail::make_op<R>(fnet::add(a.value(), b.value()), {an, bn}, [an, bn](Node<R>& self) {
    if (an->requires_grad) detail::as<R>(*an).accumulate(self.grad);
    if (bn->requires_grad) detail::as<R>(*bn).accumulate(self.grad);
  });
}

template <class R>
Var<R> sub(const Var<R>& a, const Var<R>& b) {
  auto an = a.node(), bn = b.node();
  return detail::make_op<R>(fnet::sub(a.value(), b.value()), {an, bn}, [an, bn](Node<R>& self) {
    if (an->requires_grad) detail::as<R>(*an).accumulate(self.grad);
    if (bn->requires_grad) detail::as<R>(*bn).accumulate(fnet::scale(self.grad, R(-1)));
  });
}

template <class R>
Var<R> mul(const Var<R>& a, const Var<R>& b) {
  auto an = a.node(), bn = b.node();
  return detail::make_op<R>(fnet::mul(a.value(), b.value()), {an, bn}, [an, bn](Node<R>& self) {
    if (an->requires_grad) detail::as<R>(*an).accumulate(fnet::mul(self.grad, detail::as<R>(*bn).value));
    if (bn->requires_grad) detail::as<R>(*bn).accumulate(fnet::mul(self.grad, detail::as<R>(*an).value));
  });
}

template <class R>
Var<R> div(const Var<R>& a, const Var<R>& b) {
  fnet::detail::check_same_shape(a.value(), b.value(), "div");
  Tensor<R> y(a.shape());
  for (i64 i = 0; i < y.size(); ++i) y[i] = a.value()[i] / b.value()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<R>(std::move(y), {an, bn}, [an, bn](Node<R>& self) {
    const Tensor<R>& bv = detail::as<R>(*bn).value;
    if (an->requires_grad) {
      Tensor<R> ga(self.grad.shape());
      for (i64 i = 0; i < ga.size(); ++i) ga[i] = self.grad[i] / bv[i];
      detail::as<R>(*an).accumulate(std::move(ga));
    }
    if (bn->requires_grad) {
      Tensor<R> gb(self.grad.shape());
      for (i64 i = 0; i < gb.size(); ++i) gb[i] = -self.grad[i] * self.value[i] / bv[i];
      detail::as<R>(*bn).accumulate(std::move(gb));
    }
  });
}

template <class R>
Var<R> neg(const Var<R>& a) {
  auto an = a.node();
  return detail::make_op<R>(fnet::scale(a.value(), R(-1)), {an}, [an](Node<R>& self) {
    detail::as<R>(*an).accumulate(fnet::scale(self.grad, R(-1)));
  });
}

template <class R>
Var<R> scale(const Var<R>& a, R s) {
  auto an = a.node();
  return detail::make_op<R>(fnet::scale(a.value(), s), {an}, [an, s](Node<R>& self) {
    detail::as<R>(*an).accumulate(fnet::scale(self.grad, s));
  });
}

template <class R>
Var<R> sqrtv(const Var<R>& a) {
  Tensor<R> y(a.shape());
  for (i64 i = 0; i < y.size(); ++i) y[i] = std::sqrt(a.value()[i]);
  auto an = a.node();
  return detail::make_op<R>(std::move(y), {an}, [an](Node<R>& self) {
    Tensor<R> ga(self.grad.shape());
    for (i64 i = 0; i < ga.size(); ++i) ga[i] = self.grad[i] / (R(2) * self.value[i]);
    detail::as<R>(*an).accumulate(std::move(ga));
  });
}

/// max(x, c); subgradient 0 on the clamped set (including x == c).
template <class R>
Var<R> clamp_min(const Var<R>& a, R c) {
  Tensor<R> y(a.shape());
  for (i64 i = 0; i < y.size(); ++i) y[i] = std::max(a.value()[i], c);
  auto an = a.node();
  return detail::make_op<R>(std::move(y), {an}, [an, c](Node<R>& self) {
    const Tensor<R>& av = detail::as<R>(*an).value;
    Tensor<R> ga(self.grad.shape());
    for (i64 i = 0; i < ga.size(); ++i) ga[i] = av[i] > c ? self.grad[i] : R(0);
    detail::as<R>(*an).accumulate(std::move(ga));
  });
}

template <class R>
Var<R> sum(const Var<R>& a) {
  auto an = a.node();
  return detail::make_op<R>(Tensor<R>({1}, fnet::sum(a.value())), {an}, [an](Node<R>& self) {
    detail::as<R>(*an).accumulate(Tensor<R>(detail::as<R>(*an).value.shape(), self.grad[0]));
  });
}

template <class R>
Var<R> mean(const Var<R>& a) {
  const R inv = R(1) / static_cast<R>(a.value().size());
  auto an = a.node();
  return detail::make_op<R>(Tensor<R>({1}, fnet::sum(a.value()) * inv), {an},
                            [an, inv](Node<R>& self) {
                              detail::as<R>(*an).accumulate(
                                  Tensor<R>(detail::as<R>(*an).value.shape(), self.grad[0] * inv));
                            });
}

/// Stacks rank-S spatial tensors into (n, spatial...).
template <class R>
Var<R> stack_channels(const std::vector<Var<R>>& parts) {
  detail::check(!parts.empty(), "stack_channels: needs at least one tensor");
  std::vector<Tensor<R>> values;
  std::vector<std::shared_ptr<NodeBase>> parents;
  for (const auto& p : parts) {
    values.push_back(p.value());
    parents.push_back(p.node());
  }
  return detail::make_op<R>(fnet::stack(values), parents, [](Node<R>& self) {
    const i64 n = self.value.size() / self.value.dim(0);
    for (std::size_t c = 0; c < self.parents.size(); ++c) {
      auto& p = detail::as<R>(*self.parents[c]);
      if (!p.requires_grad) continue;
      Tensor<R> g(p.value.shape());
      std::copy(self.grad.data() + static_cast<i64>(c) * n,
                self.grad.data() + static_cast<i64>(c + 1) * n, g.data());
      p.accumulate(std::move(g));
    }
  });
}

// ---- CNN ops ----

template <class R>
Var<R> conv(const Var<R>& x, const Var<R>& w, const Var<R>& b, int stride) {
  auto xn = x.node(), wn = w.node(), bn = b.node();
  Shape in_spatial(x.shape().begin() + 1, x.shape().end());
  const i64 k = w.value().dim(2);
  return detail::make_op<R>(
      conv::conv_forward(x.value(), w.value(), b.value(), stride), {xn, wn, bn},
      [xn, wn, bn, in_spatial, k, stride](Node<R>& self) {
        if (xn->requires_grad)
          detail::as<R>(*xn).accumulate(
              conv::conv_input_grad(self.grad, detail::as<R>(*wn).value, in_spatial, stride));
        if (wn->requires_grad)
          detail::as<R>(*wn).accumulate(
              conv::conv_weight_grad(detail::as<R>(*xn).value, self.grad, k, stride));
        if (bn->requires_grad) detail::as<R>(*bn).accumulate(conv::conv_bias_grad(self.grad));
      });
}

template <class R>
Var<R> conv_transpose(const Var<R>& x, const Var<R>& w, const Var<R>& b, int stride) {
  auto xn = x.node(), wn = w.node(), bn = b.node();
  const i64 k = w.value().dim(2);
  return detail::make_op<R>(
      conv::conv_transpose_forward(x.value(), w.value(), b.value(), stride), {xn, wn, bn},
      [xn, wn, bn, k, stride](Node<R>& self) {
        if (xn->requires_grad)
          detail::as<R>(*xn).accumulate(
              conv::conv_transpose_input_grad(self.grad, detail::as<R>(*wn).value, stride));
        if (wn->requires_grad)
          detail::as<R>(*wn).accumulate(
              conv::conv_transpose_weight_grad(detail::as<R>(*xn).value, self.grad, k, stride));
        if (bn->requires_grad) detail::as<R>(*bn).accumulate(conv::conv_bias_grad(self.grad));
      });
}

/// PReLU with one learnable slope per channel; the derivative at exactly 0 is
/// the right derivative (identity branch).
template <class R>
Var<R> prelu(const Var<R>& x, const Var<R>& slopes) {
  detail::check(slopes.value().rank() == 1 && slopes.value().dim(0) == x.value().dim(0),
                "prelu: slopes " + shape_str(slopes.shape()) + " must be (C) for input " +
                    shape_str(x.shape()));
  const i64 C = x.value().dim(0);
  const i64 n = x.value().size() / C;
  Tensor<R> y(x.shape());
  for (i64 c = 0; c < C; ++c) {
    const R a = slopes.value()[c];
    const R* xc = x.value().data() + c * n;
    R* yc = y.data() + c * n;
    for (i64 i = 0; i < n; ++i) yc[i] = xc[i] >= R(0) ? xc[i] : a * xc[i];
  }
  auto xn = x.node(), an = slopes.node();
  return detail::make_op<R>(std::move(y), {xn, an}, [xn, an, C, n](Node<R>& self) {
    const Tensor<R>& xv = detail::as<R>(*xn).value;
    const Tensor<R>& av = detail::as<R>(*an).value;
    if (xn->requires_grad) {
      Tensor<R> gx(xv.shape());
      for (i64 c = 0; c < C; ++c) {
        const R a = av[c];
        const R* xc = xv.data() + c * n;
        const R* gc = self.grad.data() + c * n;
        R* gxc = gx.data() + c * n;
        for (i64 i = 0; i < n; ++i) gxc[i] = xc[i] >= R(0) ? gc[i] : a * gc[i];
      }
      detail::as<R>(*xn).accumulate(std::move(gx));
    }
    if (an->requires_grad) {
      Tensor<R> ga(av.shape());
      for (i64 c = 0; c < C; ++c) {
        const R* xc = xv.data() + c * n;
        const R* gc = self.grad.data() + c * n;
        R acc = 0;
        for (i64 i = 0; i < n; ++i)
          if (xc[i] < R(0)) acc += gc[i] * xc[i];
        ga[c] = acc;
      }
      detail::as<R>(*an).accumulate(std::move(ga));
    }
  });
}

// ---- spatial ops ----

template <class R>
Var<R> warp_channels(const Var<R>& f, const Var<R>& u) {
  auto fn = f.node(), un = u.node();
  return detail::make_op<R>(deform::warp_channels(f.value(), u.value()), {fn, un},
                            [fn, un](Node<R>& self) {
                              Tensor<R> gf, gu;
                              deform::warp_channels_backward(
                                  detail::as<R>(*fn).value, detail::as<R>(*un).value, self.grad,
                                  fn->requires_grad ? &gf : nullptr,
                                  un->requires_grad ? &gu : nullptr);
                              if (fn->requires_grad) detail::as<R>(*fn).accumulate(std::move(gf));
                              if (un->requires_grad) detail::as<R>(*un).accumulate(std::move(gu));
                            });
}

/// warp of a plain rank-S image (no channel axis).
template <class R>
Var<R> warp_image(const Var<R>& image, const Var<R>& u) {
  auto in = image.node(), un = u.node();
  return detail::make_op<R>(
      deform::warp(image.value(), u.value()), {in, un}, [in, un](Node<R>& self) {
        const Tensor<R>& img = detail::as<R>(*in).value;
        const Tensor<R>& uv = detail::as<R>(*un).value;
        Shape chan = uv.shape();
        chan[0] = 1;
        Tensor<R> gf, gu;
        deform::warp_channels_backward(img.reshaped(chan), uv, self.grad.reshaped(chan),
                                       in->requires_grad ? &gf : nullptr,
                                       un->requires_grad ? &gu : nullptr);
        if (in->requires_grad) detail::as<R>(*in).accumulate(gf.reshaped(img.shape()));
        if (un->requires_grad) detail::as<R>(*un).accumulate(std::move(gu));
      });
}

/// compose(u, v)(x) = v(x) + u(x + v(x)).
template <class R>
Var<R> compose(const Var<R>& u, const Var<R>& v) {
  return add(v, warp_channels(u, v));
}

/// Scaling and squaring, traced through `steps` self-compositions.
template <class R>
Var<R> exp_svf(const Var<R>& v, int steps = 7) {
  Var<R> u = scale(v, static_cast<R>(std::ldexp(1.0, -steps)));
  for (int s = 0; s < steps; ++s) u = compose(u, u);
  return u;
}

template <class R>
Var<R> resize_linear(const Var<R>& x, const Shape& out_spatial) {
  auto xn = x.node();
  Shape in_spatial(x.shape().begin() + 1, x.shape().end());
  return detail::make_op<R>(deform::resize_linear(x.value(), out_spatial), {xn},
                            [xn, in_spatial](Node<R>& self) {
                              detail::as<R>(*xn).accumulate(
                                  deform::resize_linear_adjoint(self.grad, in_spatial));
                            });
}

/// Forward difference along `axis` with a zero last slice (output shape equals
/// input shape).
template <class R>
Var<R> diff_forward(const Var<R>& x, int axis) {
  detail::check(axis >= 0 && axis < x.value().rank(), "diff_forward: axis out of range");
  const i64 n = x.value().dim(axis);
  i64 inner = 1;
  for (int a = axis + 1; a < x.value().rank(); ++a) inner *= x.value().dim(a);
  const i64 outer = x.value().size() / (n * inner);

  Tensor<R> y(x.shape());
  for (i64 o = 0; o < outer; ++o) {
    const R* src = x.value().data() + o * n * inner;
    R* dst = y.data() + o * n * inner;
    for (i64 i = 0; i + 1 < n; ++i)
      for (i64 j = 0; j < inner; ++j) dst[i * inner + j] = src[(i + 1) * inner + j] - src[i * inner + j];
    std::fill_n(dst + (n - 1) * inner, inner, R(0));
  }
  auto xn = x.node();
  return detail::make_op<R>(std::move(y), {xn}, [xn, n, inner, outer](Node<R>& self) {
    Tensor<R> gx(self.grad.shape());
    for (i64 o = 0; o < outer; ++o) {
      const R* g = self.grad.data() + o * n * inner;
      R* dst = gx.data() + o * n * inner;
      for (i64 i = 0; i < n; ++i) {
        for (i64 j = 0; j < inner; ++j) {
          R v = 0;
          if (i > 0) v += g[(i - 1) * inner + j];
          if (i < n - 1) v -= g[i * inner + j];
          dst[i * inner + j] = v;
        }
      }
    }
    detail::as<R>(*xn).accumulate(std::move(gx));
  });
}

namespace detail {

/// Separable box sum with windows clipped at the borders; self-adjoint.
template <class R>
Tensor<R> box_sum_raw(const Tensor<R>& x, int radius) {
  Tensor<R> out = x;
  std::vector<R> prefix;
  for (int axis = 0; axis < x.rank(); ++axis) {
    const i64 n = out.dim(axis);
    i64 inner = 1;
    for (int a = axis + 1; a < out.rank(); ++a) inner *= out.dim(a);
    const i64 outer = out.size() / (n * inner);
    prefix.assign(static_cast<std::size_t>(n + 1), R(0));
    std::vector<R> line(static_cast<std::size_t>(n));
    for (i64 o = 0; o < outer; ++o) {
      R* base = out.data() + o * n * inner;
      for (i64 j = 0; j < inner; ++j) {
        for (i64 i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = base[i * inner + j];
        for (i64 i = 0; i < n; ++i)
          prefix[static_cast<std::size_t>(i + 1)] = prefix[static_cast<std::size_t>(i)] + line[static_cast<std::size_t>(i)];
        for (i64 i = 0; i < n; ++i) {
          const i64 lo = std::max<i64>(0, i - radius);
          const i64 hi = std::min<i64>(n, i + radius + 1);
          base[i * inner + j] = prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)];
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Sum over the (2r+1)^rank window centred at each element, clipped at the
/// borders. Self-adjoint, so backward reuses the same kernel.
template <class R>
Var<R> box_sum(const Var<R>& x, int radius) {
  detail::check(radius >= 0, "box_sum: radius must be non-negative");
  auto xn = x.node();
  return detail::make_op<R>(detail::box_sum_raw(x.value(), radius), {xn},
                            [xn, radius](Node<R>& self) {
                              detail::as<R>(*xn).accumulate(
                                  detail::box_sum_raw(self.grad, radius));
                            });
}

// ---- real <-> complex and spectral ops ----

template <class R>
Var<std::complex<R>> to_complex(const Var<R>& x) {
  auto xn = x.node();
  return detail::make_op<std::complex<R>>(fnet::to_complex(x.value()), {xn},
                                          [xn](Node<std::complex<R>>& self) {
                                            detail::as<R>(*xn).accumulate(fnet::real(self.grad));
                                          });
}

template <class R>
Var<R> real_part(const Var<std::complex<R>>& z) {
  auto zn = z.node();
  return detail::make_op<R>(fnet::real(z.value()), {zn}, [zn](Node<R>& self) {
    detail::as<std::complex<R>>(*zn).accumulate(fnet::to_complex(self.grad));
  });
}

template <class R>
Var<std::complex<R>> dft(const Var<std::complex<R>>& z, int spatial_axes) {
  auto zn = z.node();
  i64 total = 1;
  for (int a = z.value().rank() - spatial_axes; a < z.value().rank(); ++a)
    total *= z.value().dim(a);
  return detail::make_op<std::complex<R>>(
      fft::dft(z.value(), spatial_axes), {zn},
      [zn, spatial_axes, total](Node<std::complex<R>>& self) {
        // adjoint of the unnormalized forward DFT = unnormalized inverse
        detail::as<std::complex<R>>(*zn).accumulate(
            fnet::scale(fft::idft(self.grad, spatial_axes), static_cast<R>(total)));
      });
}

template <class R>
Var<std::complex<R>> idft(const Var<std::complex<R>>& z, int spatial_axes) {
  auto zn = z.node();
  i64 total = 1;
  for (int a = z.value().rank() - spatial_axes; a < z.value().rank(); ++a)
    total *= z.value().dim(a);
  return detail::make_op<std::complex<R>>(
      fft::idft(z.value(), spatial_axes), {zn},
      [zn, spatial_axes, total](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fnet::scale(fft::dft(self.grad, spatial_axes), R(1) / static_cast<R>(total)));
      });
}

template <class R>
Var<std::complex<R>> center_shift(const Var<std::complex<R>>& z, int spatial_axes) {
  auto zn = z.node();
  return detail::make_op<std::complex<R>>(
      fourier::center_shift(z.value(), spatial_axes), {zn},
      [zn, spatial_axes](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fourier::center_unshift(self.grad, spatial_axes));
      });
}

template <class R>
Var<std::complex<R>> center_unshift(const Var<std::complex<R>>& z, int spatial_axes) {
  auto zn = z.node();
  return detail::make_op<std::complex<R>>(
      fourier::center_unshift(z.value(), spatial_axes), {zn},
      [zn, spatial_axes](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fourier::center_shift(self.grad, spatial_axes));
      });
}

/// Crop of the centered band; `band_out`, when given, receives the geometry.
template <class R>
Var<std::complex<R>> crop_center(const Var<std::complex<R>>& z, const Shape& reduction,
                                 fourier::BandSpec* band_out = nullptr) {
  auto zn = z.node();
  fourier::BandLimitedPatch<R> p = fourier::crop_center(z.value(), reduction);
  fourier::BandSpec band = p.band;
  if (band_out) *band_out = band;
  return detail::make_op<std::complex<R>>(
      std::move(p.coeffs), {zn}, [zn, band](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fourier::pad_center(fourier::BandLimitedPatch<R>{self.grad, band}));
      });
}

template <class R>
Var<std::complex<R>> pad_center(const Var<std::complex<R>>& z, const fourier::BandSpec& band) {
  auto zn = z.node();
  return detail::make_op<std::complex<R>>(
      fourier::pad_center(fourier::BandLimitedPatch<R>{z.value(), band}), {zn},
      [zn, band](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fourier::crop_center(self.grad, band.reduction).coeffs);
      });
}

template <class R>
Var<std::complex<R>> zero_nyquist(const Var<std::complex<R>>& z, int spatial_axes) {
  auto zn = z.node();
  return detail::make_op<std::complex<R>>(
      fourier::zero_nyquist(z.value(), spatial_axes), {zn},
      [zn, spatial_axes](Node<std::complex<R>>& self) {
        detail::as<std::complex<R>>(*zn).accumulate(
            fourier::zero_nyquist(self.grad, spatial_axes));
      });
}

/// Max relative error between analytic and central-difference gradients over
/// randomly probed parameter entries. `f` must build a scalar loss from leaf
/// vars created from `params` (in order). Probes where both gradients are
/// below 1e-7 in magnitude count as exact.
template <class R>
double grad_check(const std::function<Var<R>(const std::vector<Var<R>>&)>& f,
                  const std::vector<Tensor<R>>& params, int n_probes, double eps,
                  std::uint64_t seed) {
  detail::check(!params.empty(), "grad_check: needs at least one parameter tensor");
  detail::check(eps > 0, "grad_check: step must be positive");

  auto eval = [&](const std::vector<Tensor<R>>& p, bool want_grad,
                  std::vector<Tensor<R>>* grads) -> double {
    std::vector<Var<R>> leafs;
    leafs.reserve(p.size());
    for (const auto& t : p) leafs.push_back(Var<R>::leaf(t, want_grad));
    Var<R> loss = f(leafs);
    detail::check(loss.value().size() == 1, "grad_check: f must return a scalar");
    if (want_grad) {
      backward(loss);
      grads->clear();
      for (const auto& l : leafs) grads->push_back(l.grad());
    }
    return static_cast<double>(loss.value()[0]);
  };

  std::vector<Tensor<R>> analytic;
  eval(params, true, &analytic);

  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int probe = 0; probe < n_probes; ++probe) {
    const std::size_t pi = static_cast<std::size_t>(rng() % params.size());
    const i64 ei = static_cast<i64>(rng() % static_cast<std::uint64_t>(params[pi].size()));

    std::vector<Tensor<R>> shifted = params;
    shifted[pi][ei] = params[pi][ei] + static_cast<R>(eps);
    const double lp = eval(shifted, false, nullptr);
    shifted[pi][ei] = params[pi][ei] - static_cast<R>(eps);
    const double lm = eval(shifted, false, nullptr);

    const double fd = (lp - lm) / (2 * eps);
    const double an = static_cast<double>(analytic[pi][ei]);
    const double mag = std::max(std::abs(fd), std::abs(an));
    if (mag < 1e-7) continue;
    worst = std::max(worst, std::abs(fd - an) / mag);
  }
  return worst;
}

}  // namespace fnet::ad
