#pragma once

#include "fnet/metrics.hpp"
#include "fnet/model.hpp"

namespace fnet::train {

enum class LossKind { MSE, NCC };

inline const char* to_string(LossKind k) { return k == LossKind::MSE ? "mse" : "ncc"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::MSE;
  if (s == "ncc") return LossKind::NCC;
  fnet::detail::fail("unknown loss '" + s + "' (expected mse or ncc)");
}

struct TrainConfig {
  LossKind loss = LossKind::MSE;
  double lambda = 0.01;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int epochs = 10;
  int batch = 4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 = only final
  int val_every = 0;         // epochs; 0 = never
  int ncc_window = 9;
  double ncc_eps = 1e-5;
};

template <class R>
ad::Var<R> loss_mse(const ad::Var<R>& a, const ad::Var<R>& b) {
  auto d = ad::sub(a, b);
  return ad::mean(ad::mul(d, d));
}

/// Local normalized cross-correlation over a clipped box window; returns the
/// negated mean of the signed correlation (perfect alignment -> about -1).
/// Window sums are unnormalized; variances are clamped at zero before the
/// stabilized square root.
template <class R>
ad::Var<R> loss_ncc(const ad::Var<R>& a, const ad::Var<R>& b, int window = 9,
                    double eps = 1e-5) {
  fnet::detail::check(window >= 1 && window % 2 == 1, "ncc: window must be odd and positive");
  const int r = (window - 1) / 2;

  Tensor<R> cnt = ad::detail::box_sum_raw(Tensor<R>(a.shape(), R(1)), r);
  Tensor<R> inv_cnt(cnt.shape());
  for (i64 i = 0; i < cnt.size(); ++i) inv_cnt[i] = R(1) / cnt[i];
  auto inv = ad::Var<R>::constant(std::move(inv_cnt));
  auto eps_t = ad::Var<R>::constant(Tensor<R>(a.shape(), static_cast<R>(eps)));

  auto sa = ad::box_sum(a, r);
  auto sb = ad::box_sum(b, r);
  auto saa = ad::box_sum(ad::mul(a, a), r);
  auto sbb = ad::box_sum(ad::mul(b, b), r);
  auto sab = ad::box_sum(ad::mul(a, b), r);

  auto mu_a = ad::mul(sa, inv);
  auto mu_b = ad::mul(sb, inv);
  auto cross = ad::sub(sab, ad::mul(mu_b, sa));
  auto var_a = ad::clamp_min(ad::sub(saa, ad::mul(mu_a, sa)), R(0));
  auto var_b = ad::clamp_min(ad::sub(sbb, ad::mul(mu_b, sb)), R(0));
  auto denom = ad::sqrtv(ad::add(ad::mul(var_a, var_b), eps_t));
  return ad::neg(ad::mean(ad::div(cross, denom)));
}

/// Mean squared forward difference of a (S, spatial...) field, averaged over
/// every channel, spatial axis and voxel (the zeroed last slices included).
template <class R>
ad::Var<R> loss_smooth(const ad::Var<R>& field) {
  const int rank = field.value().rank();
  fnet::detail::check(rank >= 3, "loss_smooth: expects a (S, spatial...) field, got shape " +
                                     shape_str(field.shape()));
  const int axes = rank - 1;
  ad::Var<R> acc;
  for (int a = 1; a < rank; ++a) {
    auto d = ad::diff_forward(field, a);
    auto s = ad::sum(ad::mul(d, d));
    acc = (a == 1) ? s : ad::add(acc, s);
  }
  const R norm = R(1) / (static_cast<R>(axes) * static_cast<R>(field.value().size()));
  return ad::scale(acc, norm);
}

/// Similarity(warp(moving, field), fixed) + lambda * smoothness(reg_field).
/// For diffeomorphic variants reg_field is the velocity, so the regularizer
/// acts on v while the warp uses exp(v).
template <class R>
ad::Var<R> total_loss(const TrainConfig& cfg, const model::ForwardResult<R>& fw,
                      const ad::Var<R>& moving, const ad::Var<R>& fixed) {
  auto warped = ad::warp_image(moving, fw.field);
  auto sim = cfg.loss == LossKind::MSE
                 ? loss_mse(warped, fixed)
                 : loss_ncc(warped, fixed, cfg.ncc_window, cfg.ncc_eps);
  auto reg = loss_smooth(fw.reg_field);
  return ad::add(sim, ad::scale(reg, static_cast<R>(cfg.lambda)));
}

template <class R>
struct AdamState {
  std::vector<Tensor<R>> m, v;
  i64 t = 0;
};

/// One bias-corrected Adam update from params.entries[i].grad.
template <class R>
void adam_step(model::ModelParams<R>& params, AdamState<R>& st, const TrainConfig& cfg) {
  if (st.m.empty()) {
    for (const auto& e : params.entries) {
      st.m.emplace_back(e.value.shape());
      st.v.emplace_back(e.value.shape());
    }
  }
  fnet::detail::check(st.m.size() == params.entries.size(),
                      "adam_step: state does not match parameter list");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const R b1 = static_cast<R>(cfg.beta1), b2 = static_cast<R>(cfg.beta2);
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    auto& e = params.entries[p];
    Tensor<R>& m = st.m[p];
    Tensor<R>& v = st.v[p];
    for (i64 i = 0; i < e.value.size(); ++i) {
      const R g = e.grad[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      e.value[i] -= static_cast<R>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_adam));
    }
  }
}

template <class R>
struct Pair {
  std::string id;
  Tensor<R> moving, fixed;
  Tensor<std::int32_t> moving_mask, fixed_mask;
  bool has_masks = false;
};

template <class R>
using Dataset = std::vector<Pair<R>>;

struct EpochStats {
  int epoch = 0;       // 1-based
  double loss = 0;
  double val_dice = -1;  // < 0 when not evaluated
};

template <class R>
struct TrainResult {
  std::vector<EpochStats> epochs;
  i64 items_seen = 0;
  bool aborted_nan = false;
};

/// Mean Dice of a model over a dataset with masks (forward + NN label warp).
template <class R>
double mean_dice(const model::Model<R>& m, const Dataset<R>& ds) {
  double acc = 0;
  i64 n = 0;
  for (const auto& p : ds) {
    if (!p.has_masks) continue;
    const Tensor<R> field = model::predict_field(m, p.moving, p.fixed);
    const Tensor<std::int32_t> warped = deform::warp_nn(p.moving_mask, field);
    acc += metrics::dice(warped, p.fixed_mask).mean;
    ++n;
  }
  fnet::detail::check(n > 0, "mean_dice: dataset has no masks");
  return acc / static_cast<double>(n);
}

/// Minibatch Adam training. Deterministic for a fixed config/seed: epoch
/// shuffles come from one seeded generator and items in a batch are processed
/// sequentially (gradients averaged over the batch). Aborts (keeping the last
/// finite parameters) if the loss goes non-finite.
template <class R>
TrainResult<R> train_loop(model::Model<R>& m, const Dataset<R>& train_set,
                          const TrainConfig& cfg, const Dataset<R>* val_set = nullptr,
                          const std::function<void(const EpochStats&)>& on_epoch = {}) {
  fnet::detail::check(!train_set.empty(), "train_loop: empty training set");
  fnet::detail::check(cfg.epochs >= 1, "train_loop: epochs must be >= 1");
  fnet::detail::check(cfg.batch >= 1, "train_loop: batch must be >= 1");

  TrainResult<R> result;
  AdamState<R> adam;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng() % i]);

    double epoch_loss = 0;
    i64 epoch_items = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      auto leafs = model::make_leafs(m.params, true);
      double batch_loss = 0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const Pair<R>& p = train_set[order[bi]];
        auto mv = ad::Var<R>::constant(p.moving);
        auto fv = ad::Var<R>::constant(p.fixed);
        auto fw = model::forward(m, leafs, mv, fv);
        auto loss = total_loss(cfg, fw, mv, fv);
        const double lv = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(lv)) {
          result.aborted_nan = true;
          return result;
        }
        ad::backward(loss);
        batch_loss += lv;
      }
      const i64 bn = static_cast<i64>(stop - start);
      m.params.zero_grads();
      model::accumulate_grads(m.params, leafs, R(1) / static_cast<R>(bn));
      adam_step(m.params, adam, cfg);
      epoch_loss += batch_loss;
      epoch_items += bn;
      result.items_seen += bn;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(epoch_items);
    if (val_set && cfg.val_every > 0 && (epoch % cfg.val_every == 0 || epoch == cfg.epochs))
      stats.val_dice = mean_dice(m, *val_set);
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace fnet::train
