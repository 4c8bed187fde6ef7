#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "fnet/autodiff.hpp"
#include "fnet/model.hpp"
#include "helpers.hpp"

using fnet::i64;
using fnet::Shape;
using fnet::Tensor;
using cd = std::complex<double>;
namespace ad = fnet::ad;
namespace cv = fnet::conv;
namespace fr = fnet::fourier;
namespace md = fnet::model;

using VarD = ad::Var<double>;

namespace {

VarD sumsq(const VarD& x) { return ad::sum(ad::mul(x, x)); }

double tape_dot(const VarD& y, const Tensor<double>& c, const VarD& leaf,
                Tensor<double>* grad_out) {
  VarD loss = ad::sum(ad::mul(y, VarD::constant(c)));
  ad::backward(loss);
  *grad_out = leaf.grad();
  return loss.value()[0];
}

}  // namespace

TEST_CASE("sum and mean push uniform gradients") {
  auto x = VarD::leaf(Tensor<double>({2, 3}, 1.5), true);
  ad::backward(ad::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = VarD::leaf(Tensor<double>({2, 3}, 1.5), true);
  ad::backward(ad::mean(y));
  for (double g : y.grad()) CHECK(g == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("a leaf reused twice accumulates both paths") {
  auto x = VarD::leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}), true);
  ad::backward(ad::sum(ad::add(x, x)));
  for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("a leaf the root does not depend on gets zero gradients") {
  auto x = VarD::leaf(Tensor<double>({3}, 1.0), true);
  auto y = VarD::leaf(Tensor<double>({4}, 2.0), true);
  ad::backward(ad::sum(x));
  CHECK(fnet::max_abs(y.grad()) == 0.0);
  CHECK(y.grad().shape() == Shape{4});
}

TEST_CASE("backward requires a scalar root") {
  auto x = VarD::leaf(Tensor<double>({2}, 1.0), true);
  CHECK_THROWS_AS(ad::backward(ad::add(x, x)), std::invalid_argument);
}

TEST_CASE("raw spectral adjoints") {
  std::mt19937_64 g(3);
  const Shape sp{6, 8};
  const double n = 48.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto x = oracle::random_complex(g, sp);
    auto y = oracle::random_complex(g, sp);

    // <dft x, y> = <x, N idft y>
    CHECK(std::abs(fnet::dot_real(fnet::fft::dft(x, 2), y) -
                   fnet::dot_real(x, fnet::scale(fnet::fft::idft(y, 2), n))) < 1e-10);
    // <idft x, y> = <x, dft y / N>
    CHECK(std::abs(fnet::dot_real(fnet::fft::idft(x, 2), y) -
                   fnet::dot_real(x, fnet::scale(fnet::fft::dft(y, 2), 1.0 / n))) < 1e-12);
    // <shift x, y> = <x, unshift y>
    CHECK(std::abs(fnet::dot_real(fr::center_shift(x, 2), y) -
                   fnet::dot_real(x, fr::center_unshift(y, 2))) < 1e-12);
    // zero_nyquist is self-adjoint
    CHECK(std::abs(fnet::dot_real(fr::zero_nyquist(x, 2), y) -
                   fnet::dot_real(x, fr::zero_nyquist(y, 2))) < 1e-12);
  }
}

TEST_CASE("crop and pad are mutually adjoint") {
  std::mt19937_64 g(5);
  fr::BandSpec band{{8, 8}, {2, 2}};
  for (int trial = 0; trial < 5; ++trial) {
    auto x = oracle::random_complex(g, {8, 8});
    auto y = oracle::random_complex(g, {4, 4});
    const double lhs = fnet::dot_real(fr::crop_center(x, {2, 2}).coeffs, y);
    const double rhs = fnet::dot_real(x, fr::pad_center(fr::BandLimitedPatch<double>{y, band}));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("real projection and complex embedding are mutually adjoint") {
  std::mt19937_64 g(7);
  auto z = oracle::random_complex(g, {5, 5});
  auto r = oracle::random_real(g, {5, 5});
  CHECK(std::abs(fnet::dot_real(fnet::real(z), r) -
                 fnet::dot_real(z, fnet::to_complex(r))) < 1e-12);
}

TEST_CASE("conv kernel adjoints") {
  std::mt19937_64 g(9);
  for (int stride : {1, 2}) {
    auto x = oracle::random_real(g, {3, 6, 8});
    auto w = oracle::random_real(g, {4, 3, 3, 3});
    const Shape out_sp{cv::conv_out_len(6, stride), cv::conv_out_len(8, stride)};
    auto gy = oracle::random_real(g, {4, out_sp[0], out_sp[1]});

    auto y = cv::conv_forward(x, w, Tensor<double>(), stride);
    CHECK(std::abs(fnet::dot_real(y, gy) -
                   fnet::dot_real(x, cv::conv_input_grad(gy, w, {6, 8}, stride))) < 1e-10);
    CHECK(std::abs(fnet::dot_real(y, gy) -
                   fnet::dot_real(w, cv::conv_weight_grad(x, gy, 3, stride))) < 1e-10);

    Tensor<double> b({4}, 0.3);
    auto yb = cv::conv_forward(x, w, b, stride);
    const double bias_term = fnet::dot_real(yb, gy) - fnet::dot_real(y, gy);
    CHECK(std::abs(bias_term - fnet::dot_real(b, cv::conv_bias_grad(gy))) < 1e-10);
  }
}

TEST_CASE("conv_transpose kernel adjoints") {
  std::mt19937_64 g(11);
  const int stride = 2;
  auto x = oracle::random_real(g, {3, 4, 5});
  auto w = oracle::random_real(g, {3, 2, 3, 3});
  auto gy = oracle::random_real(g, {2, 8, 10});
  auto y = cv::conv_transpose_forward(x, w, Tensor<double>(), stride);
  CHECK(std::abs(fnet::dot_real(y, gy) -
                 fnet::dot_real(x, cv::conv_transpose_input_grad(gy, w, stride))) < 1e-10);
  CHECK(std::abs(fnet::dot_real(y, gy) -
                 fnet::dot_real(w, cv::conv_transpose_weight_grad(x, gy, 3, stride))) < 1e-10);
}

TEST_CASE("box_sum is self-adjoint") {
  std::mt19937_64 g(13);
  auto x = oracle::random_real(g, {7, 9});
  auto y = oracle::random_real(g, {7, 9});
  const auto bx = ad::detail::box_sum_raw(x, 2);
  const auto by = ad::detail::box_sum_raw(y, 2);
  CHECK(std::abs(fnet::dot_real(bx, y) - fnet::dot_real(x, by)) < 1e-10);
}

TEST_CASE("diff_forward backward matches the hand adjoint") {
  std::mt19937_64 g(17);
  const i64 n = 6;
  auto xv = oracle::random_real(g, {n});
  auto c = oracle::random_real(g, {n});
  auto x = VarD::leaf(xv, true);
  Tensor<double> grad;
  tape_dot(ad::diff_forward(x, 0), c, x, &grad);
  for (i64 i = 0; i < n; ++i) {
    double want = 0;
    if (i > 0) want += c[i - 1];
    if (i < n - 1) want -= c[i];
    CHECK(grad[i] == doctest::Approx(want));
  }
}

TEST_CASE("diff_forward zeroes the last slice") {
  Tensor<double> v({2, 3}, {1, 2, 4, 8, 16, 32});
  auto y = ad::diff_forward(VarD::constant(v), 1);
  CHECK(y.value().at({0, 0}) == 1.0);
  CHECK(y.value().at({0, 1}) == 2.0);
  CHECK(y.value().at({0, 2}) == 0.0);
  CHECK(y.value().at({1, 2}) == 0.0);
  auto y0 = ad::diff_forward(VarD::constant(v), 0);
  CHECK(y0.value().at({0, 1}) == 14.0);
  CHECK(y0.value().at({1, 1}) == 0.0);
}

TEST_CASE("warp gradient at integer positions uses the forward cell") {
  std::mt19937_64 g(19);
  const i64 h = 5, w = 6;
  auto img = oracle::random_real(g, {h, w});
  auto c = oracle::random_real(g, {h, w});
  auto u = VarD::leaf(Tensor<double>({2, h, w}), true);
  Tensor<double> gu;
  tape_dot(ad::warp_image(VarD::constant(img), u), c, u, &gu);
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      const double dy = y < h - 1 ? img.at({y + 1, x}) - img.at({y, x})
                                  : img.at({y, x}) - img.at({y - 1, x});
      const double dx = x < w - 1 ? img.at({y, x + 1}) - img.at({y, x})
                                  : img.at({y, x}) - img.at({y, x - 1});
      CHECK(gu.at({0, y, x}) == doctest::Approx(c.at({y, x}) * dy));
      CHECK(gu.at({1, y, x}) == doctest::Approx(c.at({y, x}) * dx));
    }
}

TEST_CASE("warp gradient vanishes where the sample position clamps") {
  std::mt19937_64 g(23);
  auto img = oracle::random_real(g, {5, 5});
  auto c = oracle::random_real(g, {5, 5});
  auto u = VarD::leaf(Tensor<double>({2, 5, 5}, -5.0), true);
  Tensor<double> gu;
  tape_dot(ad::warp_image(VarD::constant(img), u), c, u, &gu);
  CHECK(fnet::max_abs(gu) == 0.0);
}

TEST_CASE("grad_check is near machine precision for linear and quadratic maps") {
  std::mt19937_64 g(29);
  auto c = oracle::random_real(g, {4, 4});
  const double lin = ad::grad_check<double>(
      [&](const std::vector<VarD>& p) { return ad::sum(ad::mul(p[0], VarD::constant(c))); },
      {oracle::random_real(g, {4, 4})}, 32, 1e-5, 0);
  CHECK(lin < 1e-9);
  const double quad = ad::grad_check<double>(
      [](const std::vector<VarD>& p) { return sumsq(p[0]); },
      {oracle::random_real(g, {4, 4})}, 32, 1e-5, 1);
  CHECK(quad < 1e-7);
}

TEST_CASE("finite differences confirm the elementwise op gradients") {
  std::mt19937_64 g(31);
  auto a = oracle::random_real(g, {3, 4}, 0.5, 2.0);
  auto b = oracle::random_real(g, {3, 4}, 0.5, 2.0);

  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return ad::sum(ad::div(p[0], p[1]));
            },
            {a, b}, 24, 1e-6, 2) < 1e-6);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) { return ad::sum(ad::sqrtv(p[0])); },
            {a}, 16, 1e-6, 3) < 1e-6);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::clamp_min(p[0], 1.0));
            },
            {a}, 16, 1e-6, 4) < 1e-6);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return ad::sum(ad::neg(ad::scale(p[0], 1.7)));
            },
            {a}, 16, 1e-6, 5) < 1e-9);
}

TEST_CASE("clamp_min passes no gradient on the clamped set") {
  auto x = VarD::leaf(Tensor<double>({3}, {0.5, 1.0, 2.0}), true);
  ad::backward(ad::sum(ad::clamp_min(x, 1.0)));
  auto gx = x.grad();
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 0.0);  // boundary x == c counts as clamped
  CHECK(gx[2] == 1.0);
}

TEST_CASE("stack_channels splits gradients back per part") {
  std::mt19937_64 g(37);
  auto a = oracle::random_real(g, {4, 4});
  auto b = oracle::random_real(g, {4, 4});
  auto va = VarD::leaf(a, true);
  auto vb = VarD::leaf(b, true);
  ad::backward(sumsq(ad::stack_channels<double>({va, vb})));
  CHECK(fnet::max_abs_diff(va.grad(), fnet::scale(a, 2.0)) < 1e-12);
  CHECK(fnet::max_abs_diff(vb.grad(), fnet::scale(b, 2.0)) < 1e-12);
}

TEST_CASE("finite differences confirm the CNN op gradients") {
  std::mt19937_64 g(41);
  auto x = oracle::random_real(g, {2, 6, 6});
  auto w = oracle::random_real(g, {3, 2, 3, 3});
  auto b = oracle::random_real(g, {3});
  for (int stride : {1, 2}) {
    CHECK(ad::grad_check<double>(
              [stride](const std::vector<VarD>& p) {
                return sumsq(ad::conv(p[0], p[1], p[2], stride));
              },
              {x, w, b}, 60, 1e-5, 6) < 1e-6);
  }
  auto wt = oracle::random_real(g, {2, 3, 3, 3});
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::conv_transpose(p[0], p[1], p[2], 2));
            },
            {x, wt, b}, 60, 1e-5, 7) < 1e-6);

  // PReLU probed away from the kink.
  Tensor<double> xk({2, 4, 4});
  for (i64 i = 0; i < xk.size(); ++i) {
    const double v = oracle::urand(g, 0.2, 1.0);
    xk[i] = (g() & 1) ? v : -v;
  }
  auto slopes = oracle::random_real(g, {2}, 0.1, 0.5);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) { return sumsq(ad::prelu(p[0], p[1])); },
            {xk, slopes}, 40, 1e-6, 8) < 1e-6);

  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) { return sumsq(ad::box_sum(p[0], 1)); },
            {oracle::random_real(g, {5, 5})}, 24, 1e-6, 9) < 1e-6);
}

TEST_CASE("finite differences confirm the spatial op gradients") {
  std::mt19937_64 g(43);
  auto img = oracle::smooth_image(g, 8, 8);
  auto f = fnet::stack<double>({oracle::smooth_image(g, 8, 8), oracle::smooth_image(g, 8, 8)});
  // Keep sampling positions away from integers so bilinear kinks stay clear
  // of the finite-difference probes.
  Tensor<double> u({2, 8, 8});
  for (i64 i = 0; i < u.size(); ++i) u[i] = 0.3 + 0.2 * oracle::urand(g);

  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::warp_image(p[0], p[1]));
            },
            {img, u}, 50, 1e-5, 10) < 1e-5);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::warp_channels(p[0], p[1]));
            },
            {f, u}, 50, 1e-5, 11) < 1e-5);

  auto v = oracle::smooth_field(g, 8, 8, 0.4);
  Tensor<double> v2(v.shape());
  for (i64 i = 0; i < v2.size(); ++i) v2[i] = 0.3 + 0.15 * oracle::urand(g);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) { return sumsq(ad::compose(p[0], p[1])); },
            {v, v2}, 50, 1e-5, 12) < 1e-5);
  // exp_svf positions stay off the integer lattice when the velocity is
  // bounded away from zero.
  Tensor<double> vp(v.shape());
  for (i64 i = 0; i < vp.size(); ++i) vp[i] = 0.4 + 0.2 * oracle::urand(g);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) { return sumsq(ad::exp_svf(p[0], 3)); },
            {vp}, 40, 1e-5, 13) < 1e-5);

  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::resize_linear(p[0], {12, 12}));
            },
            {f}, 40, 1e-5, 14) < 1e-6);
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              return sumsq(ad::resize_linear(p[0], {5, 5}));
            },
            {f}, 40, 1e-5, 15) < 1e-6);
}

TEST_CASE("finite differences confirm the codec chain gradient") {
  std::mt19937_64 g(47);
  auto s = oracle::random_real(g, {2, 8, 8});
  CHECK(ad::grad_check<double>(
            [](const std::vector<VarD>& p) {
              fr::BandSpec band;
              auto z = ad::center_shift(ad::dft(ad::to_complex(p[0]), 2), 2);
              auto patch = ad::zero_nyquist(ad::crop_center(z, {2, 2}, &band), 2);
              auto full = ad::pad_center(patch, band);
              auto field = ad::real_part(ad::idft(ad::center_unshift(full, 2), 2));
              return sumsq(field);
            },
            {s}, 60, 1e-5, 16) < 1e-6);
}

TEST_CASE("MSE gradient matches its closed form") {
  std::mt19937_64 g(53);
  auto a = oracle::random_real(g, {6, 6});
  auto b = oracle::random_real(g, {6, 6});
  auto va = VarD::leaf(a, true);
  auto diff = ad::sub(va, VarD::constant(b));
  ad::backward(ad::mean(ad::mul(diff, diff)));
  auto want = fnet::scale(fnet::sub(a, b), 2.0 / static_cast<double>(a.size()));
  CHECK(fnet::max_abs_diff(va.grad(), want) < 1e-14);
}

TEST_CASE("finite differences confirm the full registration pipelines") {
  std::mt19937_64 g(59);
  auto moving = oracle::smooth_image(g, 16, 16);
  auto fixed = oracle::smooth_image(g, 16, 16);
  auto mv = VarD::constant(moving);
  auto fx = VarD::constant(fixed);

  auto check_net = [&](md::NetVariant v, std::uint64_t seed) {
    auto m = md::build<double>(v, seed);
    std::vector<Tensor<double>> params;
    for (const auto& e : m.params.entries) params.push_back(e.value);
    const double err = ad::grad_check<double>(
        [&](const std::vector<VarD>& leafs) {
          auto fw = md::forward(m, leafs, mv, fx);
          auto diff = ad::sub(ad::warp_image(mv, fw.field), fx);
          auto sim = ad::mean(ad::mul(diff, diff));
          auto reg = ad::mean(ad::mul(fw.reg_field, fw.reg_field));
          return ad::add(sim, ad::scale(reg, 0.01));
        },
        params, 60, 1e-5, 17);
    CHECK(err < 1e-4);
  };

  check_net(md::make_variant(md::NetKind::FourierNet, 2, 2, 1, 4), 3);
  check_net(md::make_variant(md::NetKind::FourierNetPlus, 2, 2, 2, 4), 4);
  check_net(md::make_variant(md::NetKind::BilinearNetPlus, 2, 2, 2, 4), 5);
}
