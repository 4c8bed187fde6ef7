#pragma once

#include <random>

#include "fnet/io.hpp"

namespace fnet::synth {

/// Synthetic 2-d registration corpus: per pair, a randomized soft-structure
/// template (4 labelled regions) deformed by an exactly band-limited
/// stationary velocity field.
struct SynthConfig {
  std::uint64_t seed = 7;
  int n_train = 200;
  int n_test = 20;
  Shape shape{96, 96};
  double deform_scale = 3.0;   // max displacement magnitude of the velocity
  Shape svf_reduction{8, 8};   // band limit of the velocity field
  int svf_steps = 7;
};

struct PairData {
  Tensor<double> moving, fixed;
  Tensor<std::int32_t> moving_mask, fixed_mask;
  Tensor<double> velocity;  // the generating band-limited SVF
};

/// Random spectrum inside the centered band (Nyquist rows zeroed, a few
/// dominant coefficients over dense noise), decoded and rescaled to the
/// requested max-abs amplitude. The result (S, spatial...) is exactly
/// band-limited.
Tensor<double> random_band_limited_svf(std::mt19937_64& rng, const Shape& spatial,
                                       const Shape& reduction, double amplitude);

/// Deterministic in (config.seed, index, test flag) regardless of generation
/// order.
PairData make_pair(const SynthConfig& cfg, int index, bool test);

struct SynthStats {
  double initial_dice_train = 0;
  double initial_dice_test = 0;
};

/// Writes train/ and test/ tensors (images real32, masks int32), the two
/// manifests and stats.json under out_dir; returns the pre-registration Dice
/// means.
SynthStats generate(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace fnet::synth
