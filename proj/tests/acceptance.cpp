// Acceptance gate: one pass/fail line per criterion, exit code = number of
// failures. The desk-scale training criteria (8, 9, 11) share one synthetic
// corpus and take most of the runtime; everything else finishes in seconds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fnet/deform.hpp"
#include "fnet/fourier.hpp"
#include "fnet/metrics.hpp"
#include "fnet/model.hpp"
#include "fnet/synth.hpp"
#include "fnet/train.hpp"
#include "helpers.hpp"

namespace {

namespace fs = std::filesystem;
using fnet::i64;
using fnet::Shape;
using fnet::Tensor;
namespace ad = fnet::ad;
namespace cv = fnet::conv;
namespace df = fnet::deform;
namespace ff = fnet::fft;
namespace fr = fnet::fourier;
namespace md = fnet::model;
namespace sy = fnet::synth;
namespace tr = fnet::train;

using Clock = std::chrono::steady_clock;
using CD = std::complex<double>;

// ---- shared helpers ----

Tensor<CD> random_patch(std::mt19937_64& g, const Shape& shape) {
  Tensor<CD> p(shape);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (i64 i = 0; i < p.size(); ++i) p[i] = CD(u(g), u(g));
  return p;
}

// Real, exactly band-limited 2-d field for the given reduction.
Tensor<double> band_limited_field(std::mt19937_64& g, const Shape& spatial, const Shape& red) {
  fr::BandLimitedPatch<double> p;
  p.band.full_spatial = spatial;
  p.band.reduction = red;
  p.band.validate();
  p.coeffs = fr::zero_nyquist(random_patch(g, p.band.patch_spatial()),
                              static_cast<int>(spatial.size()));
  return fr::decode_field(p).field;
}

double energy_out_of_band(const Tensor<double>& field, const Shape& red) {
  const int sr = static_cast<int>(red.size());
  const auto spec = fr::center_shift(ff::dft(fnet::to_complex(field), sr), sr);
  Shape spatial(field.shape().end() - sr, field.shape().end());
  const auto mask = fr::freq_mask<double>(spatial, red);
  const i64 sn = mask.size();
  double ein = 0, eout = 0;
  for (i64 i = 0; i < spec.size(); ++i) {
    const double e = std::norm(spec[i]);
    (mask[i % sn] > 0.5 ? ein : eout) += e;
  }
  return eout / std::max(ein, 1e-300);
}

// Image with at most one cosine cycle per axis: the compose laws hold up to
// the bilinear resampling error of the intermediate image (~ max |I''| / 8),
// so the test image has to be genuinely smooth at the voxel scale.
Tensor<double> gentle_image(std::mt19937_64& g, i64 h, i64 w) {
  Tensor<double> img({h, w});
  for (int k = 0; k < 5; ++k) {
    const double fy = oracle::urand(g), fx = oracle::urand(g);
    const double ph = oracle::urand(g, 0, 6.28318530717958648);
    const double amp = oracle::urand(g, 0.1, 0.4);
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x)
        img.at({y, x}) += amp * std::cos(6.28318530717958648 *
                                             (fy * static_cast<double>(y) / static_cast<double>(h) +
                                              fx * static_cast<double>(x) / static_cast<double>(w)) +
                                         ph);
  }
  return img;
}

// Smooth field that fades to zero over an 8-voxel border margin, so repeated
// warps never sample outside the grid.
Tensor<double> tapered_field(std::mt19937_64& g, i64 h, i64 w, double amp) {
  Tensor<double> u = oracle::smooth_field(g, h, w, amp);
  auto taper = [](i64 i, i64 n) {
    const double d = std::min<double>(static_cast<double>(i), static_cast<double>(n - 1 - i));
    return std::min(1.0, d / 8.0);
  };
  for (i64 c = 0; c < 2; ++c)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) u.at({c, y, x}) *= taper(y, h) * taper(x, w);
  return u;
}

// ---- desk-scale corpus shared by criteria 8, 9 and 11 ----

struct Artifacts {
  std::string corpus;
  sy::SynthStats stats;
  tr::Dataset<float> train_set, test_set;
  double fnet_dice = -1;  // final test Dice of the criterion-8 Fourier-Net
};

Artifacts& artifacts() {
  static Artifacts a;
  return a;
}

void ensure_corpus() {
  Artifacts& a = artifacts();
  if (!a.corpus.empty()) return;
  const fs::path dir = fs::temp_directory_path() / "fnet_acceptance" / "corpus";
  fs::remove_all(dir);
  sy::SynthConfig cfg;  // seed 7, 200 train / 20 test, 96x96, scale 3, band /8
  a.stats = sy::generate(cfg, dir.string());
  a.corpus = dir.string();
  a.train_set = fnet::io::load_dataset<float>(a.corpus + "/train_manifest.json");
  a.test_set = fnet::io::load_dataset<float>(a.corpus + "/test_manifest.json");
}

tr::TrainConfig desk_config(int epochs) {
  tr::TrainConfig cfg;
  cfg.loss = tr::LossKind::MSE;
  cfg.lambda = 0.01;
  cfg.lr = 1e-3;
  cfg.epochs = epochs;
  cfg.batch = 4;
  cfg.seed = 0;
  return cfg;
}

// Trains on the shared corpus, echoing progress, and returns the result plus
// the final test Dice.
std::pair<tr::TrainResult<float>, double> desk_train(md::Model<float>& m, int epochs,
                                                     const char* tag) {
  const tr::TrainConfig cfg = desk_config(epochs);
  auto on_epoch = [&](const tr::EpochStats& s) {
    std::cout << "      " << tag << " epoch " << s.epoch << "/" << epochs << "  loss " << s.loss
              << std::endl;
  };
  auto res = tr::train_loop<float>(m, artifacts().train_set, cfg, nullptr, on_epoch);
  const double dice = res.aborted_nan ? -1.0 : tr::mean_dice(m, artifacts().test_set);
  return {std::move(res), dice};
}

// ---- criteria ----

bool c1_miniature_identity(std::string& detail) {
  std::mt19937_64 g(101);
  const Shape spatial{64, 64}, red{4, 4};
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor<double> phi = band_limited_field(g, spatial, red);
    const Tensor<double> mini = fr::encode_band_limited_image(phi, red);
    double num = 0, den = 0;
    for (i64 i = 0; i < 16; ++i)
      for (i64 j = 0; j < 16; ++j) {
        const double want = 16.0 * phi.at({4 * i, 4 * j});
        num = std::max(num, std::abs(mini.at({i, j}) - want));
        den = std::max(den, std::abs(want));
      }
    worst = std::max(worst, num / den);
  }
  detail = "max rel err " + std::to_string(worst);
  return worst < 1e-8;
}

bool c2_codec_round_trips(std::string& detail) {
  std::mt19937_64 g(102);
  const Shape spatial{64, 64}, red{4, 4};

  fr::BandLimitedPatch<double> p;
  p.band.full_spatial = spatial;
  p.band.reduction = red;
  p.coeffs = random_patch(g, p.band.patch_spatial());
  const auto back = fr::crop_center(fr::pad_center(p), red);
  double crop_pad = 0;
  for (i64 i = 0; i < p.coeffs.size(); ++i)
    crop_pad = std::max(crop_pad, std::abs(back.coeffs[i] - p.coeffs[i]));

  const Tensor<CD> x = random_patch(g, spatial);
  fr::BandLimitedPatch<double> cropped = fr::crop_center(x, red);
  const Tensor<CD> padded = fr::pad_center(cropped);
  const auto mask = fr::freq_mask<double>(spatial, red);
  double pad_crop = 0;
  for (i64 i = 0; i < x.size(); ++i)
    pad_crop = std::max(pad_crop, std::abs(padded[i] - mask[i] * x[i]));

  const Tensor<CD> y = random_patch(g, {8, 12, 10});
  const Tensor<CD> rt = ff::idft(ff::dft(y, 2), 2);
  double round = 0;
  for (i64 i = 0; i < y.size(); ++i) round = std::max(round, std::abs(rt[i] - y[i]));

  const Tensor<CD> z = random_patch(g, {24, 18});
  const Tensor<CD> Z = ff::dft(z, 2);
  double ez = 0, eZ = 0;
  for (i64 i = 0; i < z.size(); ++i) ez += std::norm(z[i]);
  for (i64 i = 0; i < Z.size(); ++i) eZ += std::norm(Z[i]);
  const double parseval = std::abs(eZ - static_cast<double>(z.size()) * ez) /
                          (static_cast<double>(z.size()) * ez);

  std::ostringstream ss;
  ss << "crop-pad " << crop_pad << ", pad-crop " << pad_crop << ", idft-dft " << round
     << ", parseval " << parseval;
  detail = ss.str();
  return crop_pad == 0 && pad_crop < 1e-12 && round < 1e-12 && parseval < 1e-8;
}

bool c3_adjoints(std::string& detail) {
  std::mt19937_64 g(103);
  const int probes = 50;
  double worst = 0;
  auto track = [&](double lhs, double rhs) { worst = std::max(worst, std::abs(lhs - rhs)); };

  for (int t = 0; t < probes; ++t) {
    const Shape s{6, 8};
    const double n = 48.0;
    const auto x = random_patch(g, s), y = random_patch(g, s);
    track(fnet::dot_real(ff::dft(x, 2), y), n * fnet::dot_real(x, ff::idft(y, 2)));
    track(fnet::dot_real(ff::idft(x, 2), y), fnet::dot_real(x, ff::dft(y, 2)) / n);
    track(fnet::dot_real(fr::center_shift(x, 2), y), fnet::dot_real(x, fr::center_unshift(y, 2)));

    fr::BandLimitedPatch<double> small;
    small.band.full_spatial = {8, 8};
    small.band.reduction = {2, 2};
    small.coeffs = random_patch(g, {4, 4});
    const auto big = random_patch(g, {8, 8});
    track(fnet::dot_real(fr::pad_center(small), big),
          fnet::dot_real(small.coeffs, fr::crop_center(big, {2, 2}).coeffs));

    const auto xr = oracle::random_real(g, {2, 6, 6});
    const auto w = oracle::random_real(g, {3, 2, 3, 3});
    const auto xc = cv::conv_forward(xr, w, Tensor<double>(), 1);
    const auto gy = oracle::random_real(g, xc.shape());
    track(fnet::dot_real(xc, gy), fnet::dot_real(xr, cv::conv_input_grad(gy, w, {6, 6}, 1)));

    const auto zc = random_patch(g, {5, 7});
    const auto rr = oracle::random_real(g, {5, 7});
    track(fnet::dot_real(fnet::real(zc), rr), fnet::dot_real(zc, fnet::to_complex(rr)));
  }

  detail = "max adjoint gap " + std::to_string(worst);
  return worst < 1e-10;
}

bool c4_gradient_checks(std::string& detail) {
  std::mt19937_64 g(104);
  const auto mv = oracle::smooth_image(g, 16, 16);
  const auto fx = oracle::smooth_image(g, 16, 16);
  const auto mvv = ad::Var<double>::constant(mv);
  const auto fxv = ad::Var<double>::constant(fx);
  tr::TrainConfig cfg = desk_config(1);  // MSE + 0.01 * smoothness

  double worst = 0;
  i64 min_params = std::numeric_limits<i64>::max();
  for (const auto kind : {md::NetKind::FourierNet, md::NetKind::FourierNetPlus}) {
    const i64 image_red = kind == md::NetKind::FourierNetPlus ? 2 : 1;
    const auto m = md::build<double>(md::make_variant(kind, 2, 4, image_red, 4), 11);
    min_params = std::min(min_params, m.params.count());

    std::vector<Tensor<double>> params;
    for (const auto& e : m.params.entries) params.push_back(e.value);
    auto f = [&](const std::vector<ad::Var<double>>& leafs) {
      auto fw = md::forward(m, leafs, mvv, fxv);
      return tr::total_loss(cfg, fw, mvv, fxv);
    };
    worst = std::max(worst, ad::grad_check<double>(f, params, 500, 1e-5, 104));
  }
  std::ostringstream ss;
  ss << "max rel err " << worst << " over 500 probes/net, smallest net " << min_params
     << " params";
  detail = ss.str();
  return worst < 1e-4 && min_params >= 500;
}

bool c5_diffeomorphic(std::string& detail) {
  std::mt19937_64 g(105);
  int folded = 0;
  for (int t = 0; t < 200; ++t) {
    const Tensor<double> v = sy::random_band_limited_svf(g, {64, 64}, {8, 8}, 2.0);
    const Tensor<double> u = df::exp_svf(v, 7);
    if (df::neg_jac_fraction(u) != 0.0) ++folded;
  }
  detail = std::to_string(folded) + "/200 fields with folding";
  return folded == 0;
}

bool c6_composition(std::string& detail) {
  std::mt19937_64 g(106);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const auto img = gentle_image(g, 96, 96);
    const auto u = tapered_field(g, 96, 96, 2.0);
    const auto v = tapered_field(g, 96, 96, 2.0);
    const auto two_step = df::warp(df::warp(img, u), v);
    const auto one_step = df::warp(img, df::compose(u, v));
    worst = std::max(worst, fnet::max_abs_diff(two_step, one_step));
  }
  detail = "max abs intensity diff " + std::to_string(worst);
  return worst < 5e-3;
}

bool c7_band_limited_output(std::string& detail) {
  std::mt19937_64 g(107);
  double worst = 0;
  for (std::uint64_t seed : {3u, 21u, 77u}) {
    const auto m = md::build<double>(md::make_variant(md::NetKind::FourierNet, 2, 8, 1, 4), seed);
    const auto mv = oracle::smooth_image(g, 64, 64);
    const auto fx = oracle::smooth_image(g, 64, 64);
    const Tensor<double> field = md::predict_field(m, mv, fx);
    worst = std::max(worst, energy_out_of_band(field, m.variant.field_reduction));
  }
  detail = "max out-of-band energy ratio " + std::to_string(worst);
  return worst < 1e-5;
}

bool c8_desk_registration(std::string& detail) {
  ensure_corpus();
  Artifacts& a = artifacts();
  auto m = md::build<float>(md::make_variant(md::NetKind::FourierNet, 2, 8, 1, 4), 0);
  auto [res, dice] = desk_train(m, 30, "fourier-net");
  a.fnet_dice = dice;

  const double initial = a.stats.initial_dice_test;
  const double first = res.epochs.empty() ? -1 : res.epochs.front().loss;
  const double last = res.epochs.empty() ? -1 : res.epochs.back().loss;
  std::ostringstream ss;
  ss << "dice " << dice << " vs initial " << initial << " + 0.20, loss " << first << " -> "
     << last;
  detail = ss.str();
  return !res.aborted_nan && dice >= initial + 0.20 && last < 0.5 * first;
}

bool c9_cascade_benefit(std::string& detail) {
  ensure_corpus();
  auto m1 = md::build<float>(md::make_variant(md::NetKind::FourierNetPlus, 2, 8, 2, 4, 1), 0);
  auto m2 = md::build<float>(md::make_variant(md::NetKind::FourierNetPlus, 2, 8, 2, 4, 2), 0);
  const double d1 = desk_train(m1, 15, "1x fourier-net-plus").second;
  const double d2 = desk_train(m2, 15, "2x fourier-net-plus").second;
  std::ostringstream ss;
  ss << "2-cascade dice " << d2 << " vs 1-cascade " << d1;
  detail = ss.str();
  return d2 >= d1 - 0.01;
}

bool c10_cost_ordering(std::string& detail) {
  const Shape s{96, 96};
  const auto plus = md::count_costs(md::make_variant(md::NetKind::FourierNetPlus, 2, 8, 2, 4), s);
  const auto full = md::count_costs(md::make_variant(md::NetKind::FourierNet, 2, 8, 1, 4), s);
  const auto unet = md::count_costs(md::make_variant(md::NetKind::UNetBaseline, 2, 8, 1, 1), s);
  std::ostringstream ss;
  ss << "params " << plus.params << " < " << full.params << " < " << unet.params
     << ", mult-adds " << plus.mult_adds << " < " << full.mult_adds << " < " << unet.mult_adds;
  detail = ss.str();
  return plus.params < full.params && full.params < unet.params &&
         plus.mult_adds < full.mult_adds && full.mult_adds < unet.mult_adds;
}

bool c11_ablation_direction(std::string& detail) {
  ensure_corpus();
  Artifacts& a = artifacts();
  if (a.fnet_dice < 0) {  // criterion 8 failed to produce a model
    auto m = md::build<float>(md::make_variant(md::NetKind::FourierNet, 2, 8, 1, 4), 0);
    a.fnet_dice = desk_train(m, 30, "fourier-net").second;
  }
  auto mb = md::build<float>(md::make_variant(md::NetKind::BilinearNet, 2, 8, 1, 4), 0);
  const double bil = desk_train(mb, 30, "bilinear-net").second;
  std::ostringstream ss;
  ss << "fourier-net dice " << a.fnet_dice << " vs bilinear-net " << bil;
  detail = ss.str();
  return a.fnet_dice >= bil - 0.01;
}

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; 0 = informational only
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::cout.precision(10);
  std::vector<int> only;  // optional criterion ids on the command line
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "band-limited miniature identity", 5, c1_miniature_identity},
      {2, "codec round trips", 5, c2_codec_round_trips},
      {3, "linear operator adjoints", 10, c3_adjoints},
      {4, "full pipeline gradient checks", 60, c4_gradient_checks},
      {5, "scaling-and-squaring produces no folding", 30, c5_diffeomorphic},
      {6, "warp composition consistency", 10, c6_composition},
      {7, "band-limited output spectrum", 5, c7_band_limited_output},
      {8, "desk-scale registration quality", 0, c8_desk_registration},
      {9, "cascading does not degrade", 1200, c9_cascade_benefit},
      {10, "cost ordering across variants", 1, c10_cost_ordering},
      {11, "fourier beats bilinear ablation", 1800, c11_ablation_direction},
  };

  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    const auto t0 = Clock::now();
    bool ok = false;
    std::string detail;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (ok && c.time_limit > 0 && secs >= c.time_limit) {
      ok = false;
      detail += " [exceeded " + std::to_string(c.time_limit) + " s limit]";
    }
    failures += ok ? 0 : 1;
    std::printf("[%s] %2d %s (%.1f s) - %s\n", ok ? "PASS" : "FAIL", c.id, c.name, secs,
                detail.c_str());
    std::fflush(stdout);
  }
  std::cout << (11 - failures) << "/11 criteria passed\n";
  return failures;
}
