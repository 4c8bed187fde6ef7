#include "fnet/synth.hpp"

#include <filesystem>

#include <json.hpp>

#include "fnet/deform.hpp"
#include "fnet/fourier.hpp"
#include "fnet/metrics.hpp"

namespace fnet::synth {

namespace fs = std::filesystem;
using fnet::detail::check;

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::mt19937_64 pair_rng(std::uint64_t seed, int index, bool test) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= static_cast<std::uint64_t>(index + 1) * 0x9e3779b97f4a7c15ULL;
  s ^= test ? 0x5851f42d4c957f2dULL : 0;
  return std::mt19937_64(splitmix64(s));
}

double uniform(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// logistic edge: ~1 well inside (d < 0), ~0 outside, width sigma
double soft_in(double d, double sigma) { return 1.0 / (1.0 + std::exp(d / sigma)); }

// Labelled structures are deliberately thin (a few voxels) so that the
// deform_scale-sized displacements actually separate the masks; big filled
// regions would keep the initial Dice near 1 and leave registration nothing
// to recover.
struct TemplateSpec {
  double cy, cx;              // main centre
  double r1;                  // disc radius (label 1 = its rim annulus)
  double rim_hw;              // rim half-width
  double ring_mid, ring_hw;   // thin outer ring (label 2)
  double ay, ax, ra;          // blob A centre and radius (label 3)
  double by, bx, rb;          // blob B centre and radius (label 4)
  double tex_fy, tex_fx, tex_phase;
};

TemplateSpec draw_spec(std::mt19937_64& rng, const Shape& shape) {
  const double H = static_cast<double>(shape[0]);
  const double W = static_cast<double>(shape[1]);
  const double m = std::min(H, W);
  TemplateSpec t;
  t.cy = H / 2 + uniform(rng, -H / 14, H / 14);
  t.cx = W / 2 + uniform(rng, -W / 14, W / 14);
  t.r1 = (0.22 + 0.06 * uniform(rng, 0, 1)) * m;
  t.rim_hw = 1.5;
  t.ring_mid = 1.33 * t.r1;
  t.ring_hw = 1.35;
  const double theta_a = uniform(rng, 0, 2 * 3.14159265358979323846);
  const double theta_b = theta_a + 3.14159265358979323846 * uniform(rng, 0.6, 1.4);
  const double da = 0.55 * t.r1;
  t.ay = t.cy + da * std::sin(theta_a);
  t.ax = t.cx + da * std::cos(theta_a);
  t.ra = 2.8 + 1.0 * uniform(rng, 0, 1);
  t.by = t.cy + da * std::sin(theta_b);
  t.bx = t.cx + da * std::cos(theta_b);
  t.rb = 2.3 + 0.8 * uniform(rng, 0, 1);
  t.tex_fy = uniform(rng, 1.5, 3.0);
  t.tex_fx = uniform(rng, 1.5, 3.0);
  t.tex_phase = uniform(rng, 0, 2 * 3.14159265358979323846);
  return t;
}

void render_template(const TemplateSpec& t, const Shape& shape, Tensor<double>& img,
                     Tensor<std::int32_t>& mask) {
  const i64 H = shape[0], W = shape[1];
  const double m = std::min(static_cast<double>(H), static_cast<double>(W));
  const double sigma = 1.5;
  img = Tensor<double>(shape);
  mask = Tensor<std::int32_t>(shape);
  for (i64 y = 0; y < H; ++y) {
    for (i64 x = 0; x < W; ++x) {
      const double dy = static_cast<double>(y) - t.cy;
      const double dx = static_cast<double>(x) - t.cx;
      const double d0 = std::sqrt(dy * dy + dx * dx);
      const double da = std::hypot(static_cast<double>(y) - t.ay, static_cast<double>(x) - t.ax);
      const double db = std::hypot(static_cast<double>(y) - t.by, static_cast<double>(x) - t.bx);

      double v = 0.10;
      v += 0.35 * soft_in(d0 - t.r1, sigma);
      v += 0.18 * soft_in(std::abs(d0 - t.r1) - t.rim_hw, sigma);
      v += 0.45 * soft_in(std::abs(d0 - t.ring_mid) - t.ring_hw, sigma);
      v += 0.35 * soft_in(da - t.ra, sigma);
      v -= 0.30 * soft_in(db - t.rb, sigma);
      v += 0.04 * std::cos(2 * 3.14159265358979323846 *
                               (t.tex_fy * static_cast<double>(y) + t.tex_fx * static_cast<double>(x)) / m +
                           t.tex_phase);
      img[y * W + x] = std::min(1.0, std::max(0.0, v));

      std::int32_t label = 0;
      if (std::abs(d0 - t.r1) <= t.rim_hw) label = 1;
      if (std::abs(d0 - t.ring_mid) <= t.ring_hw) label = 2;
      if (da <= t.ra) label = 3;
      if (db <= t.rb) label = 4;
      mask[y * W + x] = label;
    }
  }
}

}  // namespace

Tensor<double> random_band_limited_svf(std::mt19937_64& rng, const Shape& spatial,
                                       const Shape& reduction, double amplitude) {
  check(spatial.size() == reduction.size(), "svf: reduction rank mismatch");
  const int sr = static_cast<int>(spatial.size());

  fourier::BandLimitedPatch<double> p;
  p.band.full_spatial = spatial;
  p.band.reduction = reduction;
  p.band.validate();
  Shape cshape;
  cshape.push_back(sr);
  const Shape small = p.band.patch_spatial();
  cshape.insert(cshape.end(), small.begin(), small.end());
  p.coeffs = Tensor<std::complex<double>>(cshape);

  // A dominant DC coefficient (a translation component, which sweeps the whole
  // template) and a few strong waves over a weak dense background: the field
  // stays random inside the band but its typical magnitude sits near the cap
  // instead of only at rare Gaussian peaks.
  const i64 per_channel = p.coeffs.size() / sr;
  for (i64 i = 0; i < p.coeffs.size(); ++i)
    p.coeffs[i] = std::complex<double>(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
  i64 dc_at = 0;
  for (const i64 n : small) dc_at = dc_at * n + n / 2;  // centered DC bin
  for (int c = 0; c < sr; ++c) {
    const double s = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
    p.coeffs[c * per_channel + dc_at] += s * uniform(rng, 0.9, 1.4);
    for (int spike = 0; spike < 2; ++spike) {
      const i64 at = c * per_channel + static_cast<i64>(uniform(rng, 0, 1) * (per_channel - 1));
      const double mag = uniform(rng, 0.4, 0.8);
      const double phase = uniform(rng, 0, 2 * 3.14159265358979323846);
      p.coeffs[at] += std::complex<double>(mag * std::cos(phase), mag * std::sin(phase));
    }
  }
  p.coeffs = fourier::zero_nyquist(p.coeffs, sr);

  Tensor<double> v = fourier::decode_field(p).field;
  const double m = max_abs(v);
  if (m > 0) v = scale(v, amplitude / m);
  return v;
}

PairData make_pair(const SynthConfig& cfg, int index, bool test) {
  check(cfg.shape.size() == 2, "synthetic generator is 2-d, got shape " + shape_str(cfg.shape));
  for (i64 d : cfg.shape)
    check(d % 8 == 0, "synth: shape axes must be divisible by 8, got " + shape_str(cfg.shape));
  std::mt19937_64 rng = pair_rng(cfg.seed, index, test);

  PairData p;
  const TemplateSpec spec = draw_spec(rng, cfg.shape);
  render_template(spec, cfg.shape, p.moving, p.moving_mask);
  p.velocity = random_band_limited_svf(rng, cfg.shape, cfg.svf_reduction, cfg.deform_scale);
  const Tensor<double> u = deform::exp_svf(p.velocity, cfg.svf_steps);
  p.fixed = deform::warp(p.moving, u);
  p.fixed_mask = deform::warp_nn(p.moving_mask, u);
  return p;
}

SynthStats generate(const SynthConfig& cfg, const std::string& out_dir) {
  check(cfg.n_train >= 1 && cfg.n_test >= 0, "synth: pair counts must be positive");
  fs::create_directories(fs::path(out_dir) / "train");
  fs::create_directories(fs::path(out_dir) / "test");

  SynthStats stats;
  auto emit = [&](bool test, int count, const std::string& sub) {
    std::vector<io::ManifestEntry> entries;
    double dice_acc = 0;
    for (int i = 0; i < count; ++i) {
      const PairData p = make_pair(cfg, i, test);
      char id[32];
      std::snprintf(id, sizeof(id), "pair_%03d", i);
      const std::string stem = sub + "/" + id;
      io::ManifestEntry e;
      e.id = id;
      e.moving = stem + "_moving.blt";
      e.fixed = stem + "_fixed.blt";
      e.moving_mask = stem + "_moving_mask.blt";
      e.fixed_mask = stem + "_fixed_mask.blt";
      const std::string base = out_dir + "/";
      io::write_tensor(base + e.moving, cast<float>(p.moving));
      io::write_tensor(base + e.fixed, cast<float>(p.fixed));
      io::write_tensor(base + e.moving_mask, p.moving_mask);
      io::write_tensor(base + e.fixed_mask, p.fixed_mask);
      dice_acc += metrics::dice(p.moving_mask, p.fixed_mask).mean;
      entries.push_back(std::move(e));
    }
    io::write_manifest(out_dir + "/" + sub + "_manifest.json", entries);
    return count > 0 ? dice_acc / count : 0.0;
  };

  stats.initial_dice_train = emit(false, cfg.n_train, "train");
  stats.initial_dice_test = emit(true, cfg.n_test, "test");

  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["shape"] = cfg.shape;
  j["deform_scale"] = cfg.deform_scale;
  j["svf_reduction"] = cfg.svf_reduction;
  j["initial_dice_train"] = stats.initial_dice_train;
  j["initial_dice_test"] = stats.initial_dice_test;
  io::atomic_write(out_dir + "/stats.json", j.dump(2) + "\n");
  return stats;
}

}  // namespace fnet::synth
