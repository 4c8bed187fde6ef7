#include "fnet/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fnet/io.hpp"
#include "fnet/metrics.hpp"
#include "fnet/model.hpp"
#include "fnet/synth.hpp"
#include "fnet/train.hpp"

namespace fnet::cli {
namespace {

namespace fs = std::filesystem;
using fnet::detail::check;
using nlohmann::json;

struct VariantFlags {
  std::string kind = "fourier-net";
  int channels = 8;
  i64 image_reduction = 0;  // 0 = derive from the kind (1, or 2 for *-plus)
  i64 field_reduction = 4;
  int cascades = 1;
  bool diffeomorphic = false;
  int svf_steps = 7;
};

void add_variant_flags(CLI::App* sub, VariantFlags& v) {
  sub->add_option("--variant", v.kind,
                  "fourier-net | fourier-net-plus | unet | bilinear-net | bilinear-net-plus")
      ->capture_default_str();
  sub->add_option("--channels", v.channels, "encoder base channel count")->capture_default_str();
  sub->add_option("--image-reduction", v.image_reduction,
                  "input miniature factor (0 = 1, or 2 for the *-plus kinds)");
  sub->add_option("--field-reduction", v.field_reduction,
                  "band-limit factor of the produced field")
      ->capture_default_str();
  sub->add_option("--cascades", v.cascades, "number of composed cascades")->capture_default_str();
  sub->add_flag("--diff", v.diffeomorphic, "diffeomorphic output (scaling and squaring)");
  sub->add_option("--svf-steps", v.svf_steps, "squaring steps used with --diff")
      ->capture_default_str();
}

// CLI11 only processes a set_config option on the app it parses at top level,
// never on subcommands, so the flat key=value files are applied by hand: each
// key fills the matching option unless the command line already set it.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  const auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string at = path + ":" + std::to_string(lineno);
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw CLI::ConfigError(at + ": expected key=value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    CLI::Option* op = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (op == nullptr) throw CLI::ConfigError(at + ": unknown key '" + key + "'");
    if (op->count() > 0) continue;
    op->add_result(value);
    op->run_callback();
  }
}

model::NetVariant resolve_variant(const VariantFlags& f, int spatial_rank) {
  const model::NetKind kind = model::parse_net_kind(f.kind);
  i64 image_red = f.image_reduction;
  if (image_red == 0) {
    const bool plus =
        kind == model::NetKind::FourierNetPlus || kind == model::NetKind::BilinearNetPlus;
    image_red = plus ? 2 : 1;
  }
  const i64 field_red = kind == model::NetKind::UNetBaseline ? 1 : f.field_reduction;
  model::NetVariant v =
      model::make_variant(kind, spatial_rank, f.channels, image_red, field_red, f.cascades,
                          f.diffeomorphic);
  v.svf_steps = f.svf_steps;
  v.validate();
  return v;
}

// ---- gen-data ----

struct GenFlags {
  std::string out;
  std::uint64_t seed = 7;
  int n_train = 200;
  int n_test = 20;
  Shape shape{96, 96};
  double deform_scale = 3.0;
  i64 svf_reduction = 8;
};

int run_gen(const GenFlags& f) {
  synth::SynthConfig cfg;
  cfg.seed = f.seed;
  cfg.n_train = f.n_train;
  cfg.n_test = f.n_test;
  cfg.shape = f.shape;
  cfg.deform_scale = f.deform_scale;
  cfg.svf_reduction = Shape(f.shape.size(), f.svf_reduction);
  const synth::SynthStats stats = synth::generate(cfg, f.out);
  std::cout << "wrote " << cfg.n_train << " train / " << cfg.n_test << " test pairs to " << f.out
            << " (initial mean dice: train " << stats.initial_dice_train << ", test "
            << stats.initial_dice_test << ")\n";
  return 0;
}

// ---- train ----

struct TrainFlags {
  std::string data, val, out;
  VariantFlags variant;
  std::string loss = "mse";
  double lambda = 0.01;
  double lr = 1e-4;
  int epochs = 30;
  int batch = 4;
  std::uint64_t seed = 0;
  int save_every = 0;
  int val_every = 0;  // 0 = every epoch when --val is given
  bool real64 = false;
};

template <class R>
int run_train(const TrainFlags& f) {
  train::Dataset<R> train_set = io::load_dataset<R>(f.data);
  train::Dataset<R> val_set;
  if (!f.val.empty()) val_set = io::load_dataset<R>(f.val);

  const int rank = static_cast<int>(train_set.front().moving.rank());
  const model::NetVariant variant = resolve_variant(f.variant, rank);
  model::Model<R> m = model::build<R>(variant, f.seed);
  const model::Cost cost = model::count_costs(variant, train_set.front().moving.shape());
  std::cout << model::to_string(variant.kind) << ": " << cost.params << " params, "
            << cost.mult_adds << " mult-adds per pass\n";

  train::TrainConfig cfg;
  cfg.loss = train::parse_loss_kind(f.loss);
  cfg.lambda = f.lambda;
  cfg.lr = f.lr;
  cfg.epochs = f.epochs;
  cfg.batch = f.batch;
  cfg.seed = f.seed;
  cfg.checkpoint_every = f.save_every;
  cfg.val_every = f.val_every > 0 ? f.val_every : (f.val.empty() ? 0 : 1);

  fs::create_directories(f.out);
  std::string curve;
  auto on_epoch = [&](const train::EpochStats& s) {
    json line;
    line["epoch"] = s.epoch;
    line["loss"] = s.loss;
    if (s.val_dice >= 0) line["val_dice"] = s.val_dice;
    curve += line.dump() + "\n";
    io::atomic_write(f.out + "/loss_curve.jsonl", curve);
    std::cout << "epoch " << s.epoch << "/" << cfg.epochs << "  loss " << s.loss;
    if (s.val_dice >= 0) std::cout << "  val dice " << s.val_dice;
    std::cout << std::endl;
    if (cfg.checkpoint_every > 0 && s.epoch % cfg.checkpoint_every == 0)
      io::save_checkpoint(f.out + "/checkpoint_ep" + std::to_string(s.epoch) + ".bltc", m,
                          s.epoch);
  };

  const train::TrainResult<R> result =
      train::train_loop(m, train_set, cfg, f.val.empty() ? nullptr : &val_set, on_epoch);
  const int last_epoch = result.epochs.empty() ? 0 : result.epochs.back().epoch;
  io::save_checkpoint(f.out + "/checkpoint_final.bltc", m, last_epoch);
  if (result.aborted_nan) {
    std::cerr << "error: training aborted on a non-finite loss (last finite parameters kept)\n";
    return 2;
  }
  std::cout << "final loss " << result.epochs.back().loss << ", checkpoint " << f.out
            << "/checkpoint_final.bltc\n";
  return 0;
}

// ---- register ----

struct RegisterFlags {
  std::string checkpoint, moving, fixed, moving_mask, out;
};

template <class R>
int run_register(const RegisterFlags& f) {
  const model::Model<R> m = io::load_checkpoint<R>(f.checkpoint);
  const Tensor<R> moving = io::load_image_as<R>(f.moving);
  const Tensor<R> fixed = io::load_image_as<R>(f.fixed);
  check(moving.shape() == fixed.shape(), "register: moving " + shape_str(moving.shape()) +
                                             " and fixed " + shape_str(fixed.shape()) +
                                             " shapes differ");
  fs::create_directories(f.out);
  const Tensor<R> field = model::predict_field(m, moving, fixed);
  const Tensor<R> warped = deform::warp(moving, field);
  io::write_tensor(f.out + "/field.blt", field);
  io::write_tensor(f.out + "/warped.blt", warped);
  if (f.moving.ends_with(".pgm")) io::write_pgm(f.out + "/warped.pgm", cast<double>(warped));
  if (!f.moving_mask.empty()) {
    const auto mask = io::read_tensor_as<std::int32_t>(f.moving_mask);
    io::write_tensor(f.out + "/warped_mask.blt", deform::warp_nn(mask, field));
  }
  std::cout << "wrote field.blt and warped.blt to " << f.out << " (max |u| = " << max_abs(field)
            << ", |J|<0 = " << deform::neg_jac_fraction(field) << "%)\n";
  return 0;
}

// ---- evaluate ----

struct EvalFlags {
  std::string checkpoint, data, out;
};

template <class R>
int run_evaluate(const EvalFlags& f) {
  const model::Model<R> m = io::load_checkpoint<R>(f.checkpoint);
  const train::Dataset<R> ds = io::load_dataset<R>(f.data);

  std::string lines;
  double dice_acc = 0, hd_acc = 0, nj_acc = 0, sec_acc = 0;
  i64 with_masks = 0;
  for (const auto& p : ds) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<R> field = model::predict_field(m, p.moving, p.fixed);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json line;
    line["pair_id"] = p.id;
    const double nj = deform::neg_jac_fraction(field);
    line["neg_jac_pct"] = nj;
    line["seconds"] = seconds;
    nj_acc += nj;
    sec_acc += seconds;
    if (p.has_masks) {
      const Tensor<std::int32_t> warped = deform::warp_nn(p.moving_mask, field);
      const metrics::DiceResult d = metrics::dice(warped, p.fixed_mask);
      line["dice_mean"] = d.mean;
      json per = json::object();
      for (const auto& [label, value] : d.per_label) per[std::to_string(label)] = value;
      line["dice_per_label"] = per;

      // mean symmetric Hausdorff over the labels present in both maps
      const auto la = metrics::labels_of(warped);
      const auto lb = metrics::labels_of(p.fixed_mask);
      double hd = 0;
      int hn = 0;
      for (std::int32_t label : la)
        if (std::find(lb.begin(), lb.end(), label) != lb.end()) {
          hd += metrics::hausdorff(warped, p.fixed_mask, label);
          ++hn;
        }
      if (hn > 0) {
        line["hd"] = hd / hn;
        hd_acc += hd / hn;
      }
      dice_acc += d.mean;
      ++with_masks;
    }
    lines += line.dump() + "\n";
  }

  if (f.out.empty()) {
    std::cout << lines;
  } else {
    fs::create_directories(f.out);
    io::atomic_write(f.out + "/metrics.jsonl", lines);
  }
  std::ostringstream sum;
  sum << ds.size() << " pairs: mean |J|<0 " << nj_acc / static_cast<double>(ds.size())
      << "%, mean forward " << sec_acc / static_cast<double>(ds.size()) << " s";
  if (with_masks > 0)
    sum << ", mean dice " << dice_acc / static_cast<double>(with_masks) << ", mean hd "
        << hd_acc / static_cast<double>(with_masks);
  std::cerr << sum.str() << "\n";
  return 0;
}

// ---- inspect ----

struct InspectFlags {
  std::string checkpoint;
  VariantFlags variant;
  Shape shape{96, 96};
};

int run_inspect(const InspectFlags& f) {
  model::NetVariant v;
  if (!f.checkpoint.empty())
    v = io::peek_checkpoint(f.checkpoint).variant;
  else
    v = resolve_variant(f.variant, static_cast<int>(f.shape.size()));
  check(static_cast<int>(f.shape.size()) == v.spatial_rank,
        "inspect: --shape " + shape_str(f.shape) + " does not match the variant rank " +
            std::to_string(v.spatial_rank));
  for (const std::string& line : model::describe(v, f.shape)) std::cout << line << "\n";
  const model::Cost cost = model::count_costs(v, f.shape);
  std::cout << "params: " << cost.params << "\n";
  std::cout << "mult-adds: " << cost.mult_adds << "\n";
  return 0;
}

// ---- decode ----

struct DecodeFlags {
  std::string in, out;
  Shape shape;
};

int run_decode(const DecodeFlags& f) {
  const Tensor<std::complex<float>> stored = io::read_tensor_as<std::complex<float>>(f.in);
  check(stored.rank() >= 2, f.in + ": patch must be (channels, spatial...)");
  const int sr = static_cast<int>(stored.rank()) - 1;
  check(static_cast<int>(f.shape.size()) == sr,
        "decode: --shape must list " + std::to_string(sr) + " spatial dims");

  fourier::BandLimitedPatch<double> p;
  p.coeffs = cast<std::complex<double>>(stored);
  p.band.full_spatial = f.shape;
  p.band.reduction.resize(f.shape.size());
  for (int a = 0; a < sr; ++a) {
    const i64 full = f.shape[a], small = stored.dim(a + 1);
    check(small >= 1 && full % small == 0,
          "decode: patch axis " + std::to_string(a) + " (" + std::to_string(small) +
              ") does not divide --shape (" + std::to_string(full) + ")");
    p.band.reduction[a] = full / small;
  }
  p.band.validate();

  const fourier::DecodeResult<double> dec = fourier::decode_field(p);
  io::write_tensor(f.out, dec.field);
  std::cout << "decoded field " << shape_str(dec.field.shape()) << " to " << f.out
            << " (imag residue ratio " << dec.imag_ratio << ")\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"band-limited Fourier deformable image registration"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  int rc = 0;

  GenFlags gen;
  std::string gen_config;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic registration corpus");
  gen_cmd->add_option("--config", gen_config, "option file (key=value lines)");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "corpus seed")->capture_default_str();
  gen_cmd->add_option("--n-train", gen.n_train, "training pairs")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.n_test, "test pairs")->capture_default_str();
  gen_cmd->add_option("--shape", gen.shape, "spatial shape")->delimiter(',')->capture_default_str();
  gen_cmd->add_option("--deform-scale", gen.deform_scale, "max velocity magnitude")
      ->capture_default_str();
  gen_cmd->add_option("--svf-reduction", gen.svf_reduction, "band-limit factor of the velocities")
      ->capture_default_str();
  gen_cmd->callback([&] {
    apply_config(gen_cmd, gen_config);
    rc = run_gen(gen);
  });

  TrainFlags tr;
  std::string tr_config;
  auto* tr_cmd = app.add_subcommand("train", "train a registration model");
  tr_cmd->add_option("--config", tr_config, "option file (key=value lines)");
  tr_cmd->add_option("--data", tr.data, "training manifest")->required();
  tr_cmd->add_option("--val", tr.val, "validation manifest (Dice per epoch)");
  tr_cmd->add_option("--out", tr.out, "output directory")->required();
  add_variant_flags(tr_cmd, tr.variant);
  tr_cmd->add_option("--loss", tr.loss, "mse | ncc")->capture_default_str();
  tr_cmd->add_option("--lambda", tr.lambda, "smoothness weight")->capture_default_str();
  tr_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  tr_cmd->add_option("--epochs", tr.epochs, "")->capture_default_str();
  tr_cmd->add_option("--batch", tr.batch, "")->capture_default_str();
  tr_cmd->add_option("--seed", tr.seed, "init + shuffle seed")->capture_default_str();
  tr_cmd->add_option("--save-every", tr.save_every, "checkpoint every N epochs (0 = final only)")
      ->capture_default_str();
  tr_cmd->add_option("--val-every", tr.val_every, "validate every N epochs (0 = every epoch)")
      ->capture_default_str();
  tr_cmd->add_flag("--real64", tr.real64, "train in double precision");
  tr_cmd->callback([&] {
    apply_config(tr_cmd, tr_config);
    rc = tr.real64 ? run_train<double>(tr) : run_train<float>(tr);
  });

  RegisterFlags reg;
  std::string reg_config;
  auto* reg_cmd = app.add_subcommand("register", "register one image pair with a checkpoint");
  reg_cmd->add_option("--config", reg_config, "option file (key=value lines)");
  reg_cmd->add_option("--checkpoint", reg.checkpoint, "model checkpoint")->required();
  reg_cmd->add_option("--moving", reg.moving, "moving image (.blt or .pgm)")->required();
  reg_cmd->add_option("--fixed", reg.fixed, "fixed image (.blt or .pgm)")->required();
  reg_cmd->add_option("--moving-mask", reg.moving_mask, "labels to warp along (int32 tensor)");
  reg_cmd->add_option("--out", reg.out, "output directory")->required();
  reg_cmd->callback([&] {
    apply_config(reg_cmd, reg_config);
    rc = io::peek_checkpoint(reg.checkpoint).dtype == "real64" ? run_register<double>(reg)
                                                               : run_register<float>(reg);
  });

  EvalFlags ev;
  std::string ev_config;
  auto* ev_cmd = app.add_subcommand("evaluate", "metrics over a manifest (JSON lines)");
  ev_cmd->add_option("--config", ev_config, "option file (key=value lines)");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "evaluation manifest")->required();
  ev_cmd->add_option("--out", ev.out, "directory for metrics.jsonl (default: stdout)");
  ev_cmd->callback([&] {
    apply_config(ev_cmd, ev_config);
    rc = io::peek_checkpoint(ev.checkpoint).dtype == "real64" ? run_evaluate<double>(ev)
                                                              : run_evaluate<float>(ev);
  });

  InspectFlags ins;
  std::string ins_config;
  auto* ins_cmd = app.add_subcommand("inspect", "print the layer plan, params and mult-adds");
  ins_cmd->add_option("--config", ins_config, "option file (key=value lines)");
  ins_cmd->add_option("--checkpoint", ins.checkpoint, "read the variant from a checkpoint");
  add_variant_flags(ins_cmd, ins.variant);
  ins_cmd->add_option("--shape", ins.shape, "spatial shape the costs refer to")
      ->delimiter(',')
      ->capture_default_str();
  ins_cmd->callback([&] {
    apply_config(ins_cmd, ins_config);
    rc = run_inspect(ins);
  });

  DecodeFlags dec;
  std::string dec_config;
  auto* dec_cmd = app.add_subcommand("decode", "decode a band-limited patch file to a field file");
  dec_cmd->add_option("--config", dec_config, "option file (key=value lines)");
  dec_cmd->add_option("--in", dec.in, "complex patch tensor (channels, spatial...)")->required();
  dec_cmd->add_option("--shape", dec.shape, "full spatial shape")->delimiter(',')->required();
  dec_cmd->add_option("--out", dec.out, "output field tensor")->required();
  dec_cmd->callback([&] {
    apply_config(dec_cmd, dec_config);
    rc = run_decode(dec);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("fnet");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fnet::cli
