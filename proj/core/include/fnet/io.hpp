#pragma once

#include <variant>

#include "fnet/model.hpp"
#include "fnet/train.hpp"

namespace fnet::io {

/// Scalar codes of the tensor container format.
enum class Dtype : std::uint8_t { real32 = 0, real64 = 1, complex64 = 2, int32 = 3 };

using AnyTensor =
    std::variant<Tensor<float>, Tensor<double>, Tensor<std::complex<float>>, Tensor<std::int32_t>>;

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr Dtype value = Dtype::real32;
  static constexpr const char* name = "real32";
};
template <>
struct dtype_of<double> {
  static constexpr Dtype value = Dtype::real64;
  static constexpr const char* name = "real64";
};
template <>
struct dtype_of<std::complex<float>> {
  static constexpr Dtype value = Dtype::complex64;
  static constexpr const char* name = "complex64";
};
template <>
struct dtype_of<std::int32_t> {
  static constexpr Dtype value = Dtype::int32;
  static constexpr const char* name = "int32";
};

/// Serialized tensor container: magic "BLT1", u8 dtype, u8 ndim, ndim x u64
/// little-endian dims, then the row-major little-endian payload (complex64
/// stores re,im float pairs).
std::string tensor_bytes(const AnyTensor& t);
AnyTensor tensor_from_bytes(const std::string& bytes, const std::string& context);

/// Writes bytes to a temp file in the target directory and renames it over
/// `path`, so readers never observe partial files.
void atomic_write(const std::string& path, const std::string& bytes);

void write_tensor(const std::string& path, const AnyTensor& t);
AnyTensor read_tensor(const std::string& path);

template <class T>
Tensor<T> read_tensor_as(const std::string& path) {
  AnyTensor t = read_tensor(path);
  if (auto* p = std::get_if<Tensor<T>>(&t)) return std::move(*p);
  const char* found = std::visit(
      [](const auto& x) {
        using U = typename std::decay_t<decltype(x)>;
        return dtype_of<typename U::value_type>::name;
      },
      t);
  fnet::detail::fail(path + ": expected dtype " + dtype_of<T>::name + ", found " + found);
}

/// Binary (P5) PGM, 8- or 16-bit (16-bit samples big-endian), scaled to
/// [0, 1].
Tensor<double> read_pgm(const std::string& path);
/// 8-bit P5 PGM of a [0, 1] image (values clamped and rounded).
void write_pgm(const std::string& path, const Tensor<double>& img);

// ---- checkpoint archive ----

struct CheckpointInfo {
  model::NetVariant variant;
  std::string dtype = "real32";
  int epoch = 0;
};

struct CheckpointData {
  CheckpointInfo info;
  std::vector<std::pair<std::string, AnyTensor>> params;
};

/// Archive format: magic "BLTC", u32 version, u32 entry count, then entries
/// of (u32 name length, name, u64 byte length, bytes). One entry is
/// manifest.json (variant + dtype + epoch); the rest are tensor containers
/// named param/<name>.
void save_checkpoint_data(const std::string& path, const CheckpointData& d);
CheckpointData load_checkpoint_data(const std::string& path);
CheckpointInfo peek_checkpoint(const std::string& path);

template <class R>
void save_checkpoint(const std::string& path, const model::Model<R>& m, int epoch = 0) {
  CheckpointData d;
  d.info.variant = m.variant;
  d.info.dtype = dtype_of<R>::name;
  d.info.epoch = epoch;
  for (const auto& e : m.params.entries) d.params.emplace_back(e.name, AnyTensor(e.value));
  save_checkpoint_data(path, d);
}

template <class R>
model::Model<R> load_checkpoint(const std::string& path) {
  CheckpointData d = load_checkpoint_data(path);
  fnet::detail::check(d.info.dtype == dtype_of<R>::name,
                      path + ": checkpoint dtype " + d.info.dtype + " does not match requested " +
                          dtype_of<R>::name);
  model::Model<R> m = model::build<R>(d.info.variant);
  fnet::detail::check(d.params.size() == m.params.entries.size(),
                      path + ": checkpoint has " + std::to_string(d.params.size()) +
                          " tensors, model needs " + std::to_string(m.params.entries.size()));
  for (auto& e : m.params.entries) {
    auto it = std::find_if(d.params.begin(), d.params.end(),
                           [&](const auto& p) { return p.first == e.name; });
    fnet::detail::check(it != d.params.end(), path + ": checkpoint missing tensor " + e.name);
    auto* t = std::get_if<Tensor<R>>(&it->second);
    fnet::detail::check(t != nullptr, path + ": tensor " + e.name + " has wrong dtype");
    fnet::detail::check(t->shape() == e.value.shape(),
                        path + ": tensor " + e.name + " has shape " + shape_str(t->shape()) +
                            ", expected " + shape_str(e.value.shape()));
    e.value = std::move(*t);
  }
  return m;
}

// ---- dataset manifests ----

struct ManifestEntry {
  std::string id;
  std::string moving, fixed;            // tensor or PGM paths
  std::string moving_mask, fixed_mask;  // optional (empty when absent)
};

/// JSON manifest {"pairs": [{id, moving, fixed[, moving_mask, fixed_mask]}]}.
/// Relative paths are resolved against the manifest's directory on read.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

/// Loads an image (tensor container or PGM by extension) as the requested
/// real scalar type.
template <class R>
Tensor<R> load_image_as(const std::string& path) {
  if (path.ends_with(".pgm")) return cast<R>(read_pgm(path));
  AnyTensor t = read_tensor(path);
  if (auto* p = std::get_if<Tensor<float>>(&t)) return cast<R>(*p);
  if (auto* p = std::get_if<Tensor<double>>(&t)) return cast<R>(*p);
  fnet::detail::fail(path + ": expected a real-valued image tensor");
}

template <class R>
train::Dataset<R> load_dataset(const std::string& manifest_path) {
  train::Dataset<R> ds;
  for (const auto& e : read_manifest(manifest_path)) {
    train::Pair<R> p;
    p.id = e.id;
    p.moving = load_image_as<R>(e.moving);
    p.fixed = load_image_as<R>(e.fixed);
    if (!e.moving_mask.empty() && !e.fixed_mask.empty()) {
      p.moving_mask = read_tensor_as<std::int32_t>(e.moving_mask);
      p.fixed_mask = read_tensor_as<std::int32_t>(e.fixed_mask);
      p.has_masks = true;
    }
    ds.push_back(std::move(p));
  }
  return ds;
}

}  // namespace fnet::io
