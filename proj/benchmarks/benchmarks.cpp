// Microbenchmarks for the kernels that dominate training time.
// Run with: ./build/benchmarks/fnet_benchmarks [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <complex>
#include <random>

#include "fnet/deform.hpp"
#include "fnet/fourier.hpp"
#include "fnet/model.hpp"
#include "fnet/train.hpp"

namespace {

using fnet::i64;
using fnet::Shape;
using fnet::Tensor;
namespace cv = fnet::conv;
namespace df = fnet::deform;
namespace ff = fnet::fft;
namespace fr = fnet::fourier;
namespace md = fnet::model;

template <class T>
Tensor<T> random_tensor(std::mt19937_64& g, const Shape& shape) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (i64 i = 0; i < t.size(); ++i) {
    if constexpr (fnet::is_complex_v<T>)
      t[i] = T(u(g), u(g));
    else
      t[i] = static_cast<T>(u(g));
  }
  return t;
}

void BM_dft2(benchmark::State& state) {
  const i64 n = state.range(0);
  std::mt19937_64 g(1);
  const auto x = random_tensor<std::complex<double>>(g, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(ff::dft(x, 2));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_dft2)->Arg(64)->Arg(96)->Arg(128);

void BM_codec_decode(benchmark::State& state) {
  const i64 n = state.range(0);
  std::mt19937_64 g(2);
  fr::BandLimitedPatch<double> p;
  p.band.full_spatial = {n, n};
  p.band.reduction = {4, 4};
  p.coeffs = random_tensor<std::complex<double>>(g, {2, n / 4, n / 4});
  for (auto _ : state) benchmark::DoNotOptimize(fr::decode_field(p));
}
BENCHMARK(BM_codec_decode)->Arg(96)->Arg(192);

void BM_conv3x3(benchmark::State& state) {
  const i64 n = state.range(0);
  std::mt19937_64 g(3);
  const auto x = random_tensor<float>(g, {8, n, n});
  const auto w = random_tensor<float>(g, {8, 8, 3, 3});
  const auto b = random_tensor<float>(g, {8});
  for (auto _ : state) benchmark::DoNotOptimize(cv::conv_forward(x, w, b, 1));
  state.SetItemsProcessed(state.iterations() * 8 * 8 * 9 * n * n);
}
BENCHMARK(BM_conv3x3)->Arg(48)->Arg(96);

void BM_warp(benchmark::State& state) {
  const i64 n = state.range(0);
  std::mt19937_64 g(4);
  const auto img = random_tensor<float>(g, {n, n});
  const auto u = random_tensor<float>(g, {2, n, n});
  for (auto _ : state) benchmark::DoNotOptimize(df::warp(img, u));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_warp)->Arg(96)->Arg(192);

void BM_exp_svf(benchmark::State& state) {
  const i64 n = state.range(0);
  std::mt19937_64 g(5);
  auto v = random_tensor<float>(g, {2, n, n});
  v = fnet::scale(v, 2.0f);
  for (auto _ : state) benchmark::DoNotOptimize(df::exp_svf(v, 7));
}
BENCHMARK(BM_exp_svf)->Arg(96);

void BM_predict(benchmark::State& state, md::NetKind kind, i64 image_red) {
  std::mt19937_64 g(6);
  const auto m = md::build<float>(md::make_variant(kind, 2, 8, image_red, 4), 1);
  const auto mv = random_tensor<float>(g, {96, 96});
  const auto fx = random_tensor<float>(g, {96, 96});
  for (auto _ : state) benchmark::DoNotOptimize(md::predict_field(m, mv, fx));
}
BENCHMARK_CAPTURE(BM_predict, fourier_net, md::NetKind::FourierNet, 1);
BENCHMARK_CAPTURE(BM_predict, fourier_net_plus, md::NetKind::FourierNetPlus, 2);
BENCHMARK_CAPTURE(BM_predict, unet, md::NetKind::UNetBaseline, 1);

void BM_train_step(benchmark::State& state) {
  std::mt19937_64 g(7);
  auto m = md::build<float>(md::make_variant(md::NetKind::FourierNet, 2, 8, 1, 4), 1);
  fnet::train::Dataset<float> ds(1);
  ds[0].id = "bench";
  ds[0].moving = random_tensor<float>(g, {96, 96});
  ds[0].fixed = random_tensor<float>(g, {96, 96});
  fnet::train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fnet::train::train_loop(m, ds, cfg));
}
BENCHMARK(BM_train_step);

}  // namespace

BENCHMARK_MAIN();
