#pragma once

#include <cmath>
#include <random>

#include "fnet/autodiff.hpp"

namespace fnet::model {

enum class NetKind { FourierNet, FourierNetPlus, UNetBaseline, BilinearNet, BilinearNetPlus };

inline const char* to_string(NetKind k) {
  switch (k) {
    case NetKind::FourierNet: return "fourier-net";
    case NetKind::FourierNetPlus: return "fourier-net-plus";
    case NetKind::UNetBaseline: return "unet";
    case NetKind::BilinearNet: return "bilinear-net";
    case NetKind::BilinearNetPlus: return "bilinear-net-plus";
  }
  return "?";
}

inline NetKind parse_net_kind(const std::string& s) {
  if (s == "fourier-net") return NetKind::FourierNet;
  if (s == "fourier-net-plus") return NetKind::FourierNetPlus;
  if (s == "unet") return NetKind::UNetBaseline;
  if (s == "bilinear-net") return NetKind::BilinearNet;
  if (s == "bilinear-net-plus") return NetKind::BilinearNetPlus;
  fnet::detail::fail("unknown variant '" + s +
                     "' (expected fourier-net, fourier-net-plus, unet, bilinear-net, "
                     "bilinear-net-plus)");
}

/// Architecture selector. image_reduction m is the input miniature factor
/// (1 for full-resolution variants), field_reduction r the band-limit factor
/// of the produced field; both are per-axis but must be isotropic powers of
/// two for the layer ladder to line up.
struct NetVariant {
  NetKind kind = NetKind::FourierNet;
  int spatial_rank = 2;
  int base_channels = 8;
  Shape image_reduction;
  Shape field_reduction;
  int cascades = 1;
  bool diffeomorphic = false;
  int svf_steps = 7;

  bool reduced_input() const {
    return kind == NetKind::FourierNetPlus || kind == NetKind::BilinearNetPlus;
  }
  bool uses_codec() const {
    return kind == NetKind::FourierNet || kind == NetKind::FourierNetPlus;
  }
  bool uses_resize_decode() const {
    return kind == NetKind::BilinearNet || kind == NetKind::BilinearNetPlus;
  }

  i64 image_factor() const { return image_reduction.empty() ? 1 : image_reduction[0]; }
  i64 field_factor() const { return field_reduction.empty() ? 1 : field_reduction[0]; }

  void validate() const {
    using fnet::detail::check;
    check(spatial_rank == 2 || spatial_rank == 3, "variant: spatial_rank must be 2 or 3");
    check(base_channels >= 1, "variant: base_channels must be >= 1");
    check(cascades >= 1, "variant: cascades must be >= 1");
    check(svf_steps >= 0, "variant: svf_steps must be >= 0");

    auto check_reduction = [&](const Shape& r, const char* name, bool must_be_one) {
      check(static_cast<int>(r.size()) == spatial_rank,
            std::string("variant: ") + name + " " + shape_str(r) + " must have one factor per spatial axis");
      for (i64 f : r) {
        check(f >= 1, std::string("variant: ") + name + " factors must be positive");
        check(f == r[0], std::string("variant: ") + name + " " + shape_str(r) + " must be isotropic");
        check((f & (f - 1)) == 0, std::string("variant: ") + name + " factors must be powers of two");
        if (must_be_one) check(f == 1, std::string("variant: ") + name + " must be 1 for this kind");
      }
    };
    check_reduction(image_reduction, "image_reduction", !reduced_input());
    if (kind == NetKind::UNetBaseline)
      check_reduction(field_reduction, "field_reduction", true);
    else
      check_reduction(field_reduction, "field_reduction", false);

    if (reduced_input())
      check(field_factor() >= image_factor(),
            "variant: field_reduction " + shape_str(field_reduction) +
                " must be >= image_reduction " + shape_str(image_reduction) +
                " (the small CNN only downsamples)");
    else
      check(field_factor() <= 16, "variant: field_reduction must be <= 16 (encoder stops at /16)");
  }
};

inline NetVariant make_variant(NetKind kind, int spatial_rank, int base_channels, i64 image_red,
                               i64 field_red, int cascades = 1, bool diffeomorphic = false) {
  NetVariant v;
  v.kind = kind;
  v.spatial_rank = spatial_rank;
  v.base_channels = base_channels;
  v.image_reduction = Shape(static_cast<std::size_t>(spatial_rank), image_red);
  v.field_reduction = Shape(static_cast<std::size_t>(spatial_rank), field_red);
  v.cascades = cascades;
  v.diffeomorphic = diffeomorphic;
  v.validate();
  return v;
}

/// One convolution layer of the per-cascade CNN (kernel is always 3).
struct ConvSpec {
  int in_ch;
  int out_ch;
  int stride;       // downsampling factor, or upsampling factor when transpose
  bool transpose;
  bool activation;  // PReLU after the conv
};

/// The per-cascade CNN. Full-resolution variants run a 5-stage contracting
/// ladder to 1/16 resolution and expand back to the field band; reduced-input
/// variants run a small ladder from 1/m to 1/r.
inline std::vector<ConvSpec> cnn_plan(const NetVariant& v) {
  v.validate();
  const int C = v.base_channels;
  const int dims = v.spatial_rank;
  std::vector<ConvSpec> plan;

  if (v.reduced_input()) {
    plan.push_back({2, C, 1, false, true});
    int ch = C;
    i64 res = v.image_factor();
    while (res < v.field_factor()) {
      plan.push_back({ch, ch, 1, false, true});
      plan.push_back({ch, 2 * ch, 2, false, true});
      ch *= 2;
      res *= 2;
    }
    plan.push_back({ch, ch, 1, false, true});
    plan.push_back({ch, dims, 1, false, false});
    return plan;
  }

  plan.push_back({2, C, 1, false, true});
  int ch = C;
  for (int j = 0; j < 4; ++j) {
    plan.push_back({ch, ch, 1, false, true});
    plan.push_back({ch, 2 * ch, 2, false, true});
    ch *= 2;
  }
  i64 res = 16;
  while (res > v.field_factor()) {
    plan.push_back({ch, ch / 2, 2, true, true});
    ch /= 2;
    plan.push_back({ch, ch, 1, false, true});
    plan.push_back({ch, ch, 1, false, true});
    res /= 2;
  }
  plan.push_back({ch, dims, 1, false, false});
  return plan;
}

template <class R>
struct ParamEntry {
  std::string name;
  Tensor<R> value;
  Tensor<R> grad;  // same shape as value, zero-initialized
};

template <class R>
struct ModelParams {
  std::vector<ParamEntry<R>> entries;

  i64 count() const {
    i64 n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  ParamEntry<R>* find(const std::string& name) {
    for (auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  void zero_grads() {
    for (auto& e : entries) std::fill(e.grad.begin(), e.grad.end(), R(0));
  }
};

template <class R>
struct Model {
  NetVariant variant;
  std::vector<ConvSpec> plan;  // one cascade; cascades repeat it with their own params
  ModelParams<R> params;       // ordered casc-major, layer-minor: w, b, then slope if PReLU
};

/// Builds a model with freshly initialized parameters: conv weights uniform
/// with a He-style bound sqrt(6 / ((1 + a^2) * fan_in)) where a = 0.25 is the
/// PReLU slope and fan_in counts the taps feeding one output (in_ch * 3^rank
/// for plain convs, in_ch * (3/2)^rank for stride-2 transpose convs). Biases
/// zero, PReLU slopes 0.25. The decoder has no skip connections, so anything
/// weaker lets activations and gradients decay geometrically over the 16
/// layers and the net starts in a dead region.
template <class R>
Model<R> build(const NetVariant& v, std::uint64_t seed = 0) {
  v.validate();
  Model<R> m;
  m.variant = v;
  m.plan = cnn_plan(v);
  std::mt19937_64 rng(seed);

  const i64 k = 3;
  i64 ktotal = 1;
  for (int a = 0; a < v.spatial_rank; ++a) ktotal *= k;

  for (int casc = 0; casc < v.cascades; ++casc) {
    const std::string prefix = "c" + std::to_string(casc) + ".l";
    for (std::size_t li = 0; li < m.plan.size(); ++li) {
      const ConvSpec& spec = m.plan[li];
      const std::string base = prefix + std::to_string(li);
      Shape wshape;
      if (spec.transpose)
        wshape = {spec.in_ch, spec.out_ch};
      else
        wshape = {spec.out_ch, spec.in_ch};
      for (int a = 0; a < v.spatial_rank; ++a) wshape.push_back(k);

      Tensor<R> w(wshape);
      double fan_in = static_cast<double>(spec.in_ch) * static_cast<double>(ktotal);
      if (spec.transpose) fan_in /= static_cast<double>(i64(1) << v.spatial_rank);
      const double bound = std::sqrt(6.0 / ((1.0 + 0.25 * 0.25) * fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (i64 i = 0; i < w.size(); ++i) w[i] = static_cast<R>(dist(rng));
      m.params.entries.push_back({base + ".w", std::move(w), Tensor<R>(wshape)});

      Tensor<R> b({spec.out_ch});
      m.params.entries.push_back({base + ".b", b, Tensor<R>({spec.out_ch})});

      if (spec.activation) {
        Tensor<R> a({spec.out_ch}, R(0.25));
        m.params.entries.push_back({base + ".a", std::move(a), Tensor<R>({spec.out_ch})});
      }
    }
  }
  return m;
}

/// Leaf vars aligned with params.entries (the order forward() consumes).
template <class R>
std::vector<ad::Var<R>> make_leafs(const ModelParams<R>& params, bool requires_grad = true) {
  std::vector<ad::Var<R>> leafs;
  leafs.reserve(params.entries.size());
  for (const auto& e : params.entries) leafs.push_back(ad::Var<R>::leaf(e.value, requires_grad));
  return leafs;
}

/// Adds the leaf gradients back into params.entries (scaled by `scale`).
template <class R>
void accumulate_grads(ModelParams<R>& params, const std::vector<ad::Var<R>>& leafs, R scale) {
  fnet::detail::check(leafs.size() == params.entries.size(),
                      "accumulate_grads: leaf count does not match parameter count");
  for (std::size_t i = 0; i < leafs.size(); ++i) {
    const Tensor<R> g = leafs[i].grad();
    Tensor<R>& dst = params.entries[i].grad;
    for (i64 j = 0; j < g.size(); ++j) dst[j] += scale * g[j];
  }
}

template <class R>
struct ForwardResult {
  ad::Var<R> field;      // displacement to apply to the moving image
  ad::Var<R> reg_field;  // what the smoothness term sees (velocity if diffeomorphic)
  std::vector<ad::Var<R>> increments;                 // decoded per-cascade fields
  std::vector<ad::Var<std::complex<R>>> patches;      // per-cascade band patches (codec kinds)
};

namespace detail {

template <class R>
ad::Var<R> run_cnn(const std::vector<ConvSpec>& plan, const std::vector<ad::Var<R>>& leafs,
                   std::size_t& cursor, ad::Var<R> x) {
  for (const ConvSpec& spec : plan) {
    const ad::Var<R>& w = leafs[cursor++];
    const ad::Var<R>& b = leafs[cursor++];
    x = spec.transpose ? ad::conv_transpose(x, w, b, spec.stride) : ad::conv(x, w, b, spec.stride);
    if (spec.activation) x = ad::prelu(x, leafs[cursor++]);
  }
  return x;
}

/// Band-limited miniature of a traced image (real part of the small inverse
/// DFT of the centered low band).
template <class R>
ad::Var<R> encode_miniature(const ad::Var<R>& image, const Shape& reduction) {
  const int sr = static_cast<int>(reduction.size());
  auto spec = ad::center_shift(ad::dft(ad::to_complex(image), sr), sr);
  fourier::BandSpec band;
  auto patch = ad::crop_center(spec, reduction, &band);
  return ad::real_part(ad::idft(ad::center_unshift(patch, sr), sr));
}

inline void check_grid(const NetVariant& v, const Shape& spatial) {
  using fnet::detail::check;
  check(static_cast<int>(spatial.size()) == v.spatial_rank,
        "forward: image rank " + shape_str(spatial) + " does not match variant spatial_rank " +
            std::to_string(v.spatial_rank));
  const i64 need = v.reduced_input() ? v.field_factor() : 16;
  for (i64 d : spatial)
    check(d % need == 0, "forward: spatial shape " + shape_str(spatial) +
                             " must be divisible by " + std::to_string(need) +
                             " for this variant");
}

}  // namespace detail

/// Traced forward pass. `leafs` must be make_leafs(m.params) (or equivalent
/// vars in the same order); moving/fixed are rank-S image vars on a common
/// grid.
template <class R>
ForwardResult<R> forward(const Model<R>& m, const std::vector<ad::Var<R>>& leafs,
                         const ad::Var<R>& moving, const ad::Var<R>& fixed) {
  const NetVariant& v = m.variant;
  fnet::detail::check_same_shape(moving.value(), fixed.value(), "forward images");
  const Shape spatial = moving.shape();
  detail::check_grid(v, spatial);
  const int sr = v.spatial_rank;

  ForwardResult<R> out;
  Shape small_spatial(spatial);
  for (auto& d : small_spatial) d /= v.image_factor();

  std::size_t cursor = 0;
  ad::Var<R> total;
  for (int casc = 0; casc < v.cascades; ++casc) {
    ad::Var<R> mov = (casc == 0) ? moving : ad::warp_image(moving, total);

    ad::Var<R> x;
    if (v.kind == NetKind::FourierNetPlus) {
      x = ad::stack_channels<R>({detail::encode_miniature(mov, v.image_reduction),
                                 detail::encode_miniature(fixed, v.image_reduction)});
    } else if (v.kind == NetKind::BilinearNetPlus) {
      x = ad::resize_linear(ad::stack_channels<R>({mov, fixed}), small_spatial);
    } else {
      x = ad::stack_channels<R>({mov, fixed});
    }

    ad::Var<R> s = detail::run_cnn(m.plan, leafs, cursor, x);

    ad::Var<R> delta;
    if (v.uses_codec()) {
      auto patch = ad::center_shift(ad::dft(ad::to_complex(s), sr), sr);
      patch = ad::zero_nyquist(patch, sr);
      out.patches.push_back(patch);
      fourier::BandSpec band{spatial, v.field_reduction};
      band.validate();
      auto full = ad::pad_center(patch, band);
      delta = ad::real_part(ad::idft(ad::center_unshift(full, sr), sr));
    } else if (v.uses_resize_decode()) {
      delta = ad::resize_linear(s, spatial);
    } else {
      delta = s;
    }

    out.increments.push_back(delta);
    total = (casc == 0) ? delta : ad::compose(total, delta);
  }

  out.reg_field = total;
  out.field = v.diffeomorphic ? ad::exp_svf(total, v.svf_steps) : total;
  return out;
}

/// Untraced convenience: the predicted displacement field for an image pair.
template <class R>
Tensor<R> predict_field(const Model<R>& m, const Tensor<R>& moving, const Tensor<R>& fixed) {
  std::vector<ad::Var<R>> leafs = make_leafs(m.params, false);
  auto fw = forward(m, leafs, ad::Var<R>::constant(moving), ad::Var<R>::constant(fixed));
  return fw.field.value();
}

struct Cost {
  i64 params = 0;
  i64 mult_adds = 0;
};

/// Analytic parameter and multiply-add counts for one registration pass at
/// the given full resolution. Conventions: a (transpose) conv of kernel k
/// costs out_voxels * out_ch * in_ch * k^rank mult-adds and owns
/// out_ch * (in_ch * k^rank + 1) parameters; PReLU, padding, cropping and
/// shifts count zero; each n-d (i)DFT of N total samples costs
/// 5 N log2(N); interpolation (warps, resizes, scaling-and-squaring) counts
/// zero.
inline Cost count_costs(const NetVariant& v, const Shape& full_spatial) {
  v.validate();
  fnet::detail::check(static_cast<int>(full_spatial.size()) == v.spatial_rank,
                      "count_costs: spatial shape " + shape_str(full_spatial) +
                          " does not match variant rank");
  const std::vector<ConvSpec> plan = cnn_plan(v);
  i64 ktotal = 1;
  for (int a = 0; a < v.spatial_rank; ++a) ktotal *= 3;

  Cost cost;
  Shape sp(full_spatial);
  for (auto& d : sp) d /= v.image_factor();
  const Shape in_sp = sp;

  double mults = 0;
  for (const ConvSpec& spec : plan) {
    for (auto& d : sp) d = spec.transpose ? d * spec.stride : conv::conv_out_len(d, spec.stride);
    const double vox = static_cast<double>(shape_size(sp));
    mults += vox * spec.out_ch * spec.in_ch * static_cast<double>(ktotal);
    cost.params += static_cast<i64>(spec.out_ch) *
                   (static_cast<i64>(spec.in_ch) * ktotal + 1);
  }

  auto fft_cost = [](const Shape& s) {
    const double n = static_cast<double>(shape_size(s));
    return 5.0 * n * std::log2(n);
  };
  double codec = 0;
  if (v.uses_codec()) {
    Shape band_sp(full_spatial);
    for (std::size_t i = 0; i < band_sp.size(); ++i) band_sp[i] /= v.field_reduction[i];
    // decode: small forward DFT + full inverse DFT per field channel
    codec += v.spatial_rank * (fft_cost(band_sp) + fft_cost(full_spatial));
    if (v.kind == NetKind::FourierNetPlus)
      // encode: full forward DFT + small inverse DFT per input image
      codec += 2 * (fft_cost(full_spatial) + fft_cost(in_sp));
  }

  const double per_cascade = mults + codec;
  cost.mult_adds = static_cast<i64>(std::llround(per_cascade)) * v.cascades;
  cost.params *= v.cascades;
  return cost;
}

/// Human-readable layer listing used by the CLI inspect command.
inline std::vector<std::string> describe(const NetVariant& v, const Shape& full_spatial) {
  v.validate();
  const std::vector<ConvSpec> plan = cnn_plan(v);
  std::vector<std::string> lines;
  std::ostringstream head;
  head << to_string(v.kind) << " (C=" << v.base_channels << ", image_reduction="
       << v.image_factor() << ", field_reduction=" << v.field_factor()
       << ", cascades=" << v.cascades << ", diff=" << (v.diffeomorphic ? "yes" : "no") << ")";
  lines.push_back(head.str());

  auto shape_of = [](int ch, const Shape& s) {
    std::ostringstream os;
    os << ch;
    for (i64 d : s) os << "x" << d;
    return os.str();
  };

  Shape sp(full_spatial);
  for (auto& d : sp) d /= v.image_factor();
  if (v.kind == NetKind::FourierNetPlus)
    lines.push_back("  encode: band-limited miniature " + shape_of(2, sp));
  else if (v.kind == NetKind::BilinearNetPlus)
    lines.push_back("  encode: bilinear miniature " + shape_of(2, sp));
  std::size_t li = 0;
  for (const ConvSpec& spec : plan) {
    for (auto& d : sp) d = spec.transpose ? d * spec.stride : conv::conv_out_len(d, spec.stride);
    std::ostringstream os;
    os << "  l" << li++ << ": " << (spec.transpose ? "convT " : "conv ") << spec.in_ch << "->"
       << spec.out_ch << " k3 s" << spec.stride << (spec.activation ? " prelu" : "") << " -> "
       << shape_of(spec.out_ch, sp);
    lines.push_back(os.str());
  }
  if (v.uses_codec()) {
    Shape band_sp(full_spatial);
    for (std::size_t i = 0; i < band_sp.size(); ++i) band_sp[i] /= v.field_reduction[i];
    lines.push_back("  decode: dft -> band patch " + shape_of(v.spatial_rank, band_sp) +
                    " (complex) -> pad+idft -> field " + shape_of(v.spatial_rank, full_spatial));
  } else if (v.uses_resize_decode()) {
    lines.push_back("  decode: bilinear resize -> field " + shape_of(v.spatial_rank, full_spatial));
  }
  if (v.cascades > 1) lines.push_back("  cascades: " + std::to_string(v.cascades) + " (composed)");
  if (v.diffeomorphic)
    lines.push_back("  output: scaling-and-squaring exp, " + std::to_string(v.svf_steps) + " steps");
  return lines;
}

}  // namespace fnet::model
