#include "fnet/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

namespace fnet::io {

namespace fs = std::filesystem;
using nlohmann::json;
using fnet::detail::check;
using fnet::detail::fail;

namespace {

constexpr char kTensorMagic[4] = {'B', 'L', 'T', '1'};
constexpr char kArchiveMagic[4] = {'B', 'L', 'T', 'C'};
constexpr std::uint32_t kArchiveVersion = 1;

template <class T>
void append_raw(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(const std::string& bytes, std::size_t& off, const std::string& ctx) {
  check(off + sizeof(T) <= bytes.size(), ctx + ": truncated");
  T v;
  std::memcpy(&v, bytes.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error(path + ": read failed");
  return bytes;
}

template <class T>
std::string encode_tensor(const Tensor<T>& t) {
  std::string out;
  out.append(kTensorMagic, 4);
  out.push_back(static_cast<char>(dtype_of<T>::value));
  out.push_back(static_cast<char>(t.rank()));
  for (i64 d : t.shape()) append_raw(out, static_cast<std::uint64_t>(d));
  out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(T));
  return out;
}

template <class T>
Tensor<T> decode_payload(const std::string& bytes, std::size_t off, Shape shape,
                         const std::string& ctx) {
  Tensor<T> t(std::move(shape));
  const std::size_t need = static_cast<std::size_t>(t.size()) * sizeof(T);
  check(bytes.size() - off == need, ctx + ": payload has " + std::to_string(bytes.size() - off) +
                                        " bytes, shape " + shape_str(t.shape()) + " needs " +
                                        std::to_string(need));
  std::memcpy(t.data(), bytes.data() + off, need);
  return t;
}

}  // namespace

std::string tensor_bytes(const AnyTensor& t) {
  return std::visit([](const auto& x) { return encode_tensor(x); }, t);
}

AnyTensor tensor_from_bytes(const std::string& bytes, const std::string& ctx) {
  std::size_t off = 0;
  check(bytes.size() >= 6, ctx + ": truncated");
  check(std::memcmp(bytes.data(), kTensorMagic, 4) == 0, ctx + ": bad magic (not a tensor container)");
  off = 4;
  const auto dtype = read_raw<std::uint8_t>(bytes, off, ctx);
  const auto ndim = read_raw<std::uint8_t>(bytes, off, ctx);
  check(ndim >= 1, ctx + ": zero-dimensional tensors are not supported");
  Shape shape(ndim);
  for (auto& d : shape) {
    d = static_cast<i64>(read_raw<std::uint64_t>(bytes, off, ctx));
    check(d > 0, ctx + ": non-positive dimension in header");
  }
  switch (static_cast<Dtype>(dtype)) {
    case Dtype::real32:
      return decode_payload<float>(bytes, off, std::move(shape), ctx);
    case Dtype::real64:
      return decode_payload<double>(bytes, off, std::move(shape), ctx);
    case Dtype::complex64:
      return decode_payload<std::complex<float>>(bytes, off, std::move(shape), ctx);
    case Dtype::int32:
      return decode_payload<std::int32_t>(bytes, off, std::move(shape), ctx);
  }
  fail(ctx + ": unknown dtype code " + std::to_string(dtype));
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

void write_tensor(const std::string& path, const AnyTensor& t) {
  atomic_write(path, tensor_bytes(t));
}

AnyTensor read_tensor(const std::string& path) { return tensor_from_bytes(read_file(path), path); }

// ---- PGM ----

namespace {

int pgm_next_token(const std::string& bytes, std::size_t& off, const std::string& path) {
  while (off < bytes.size()) {
    const char c = bytes[off];
    if (c == '#') {
      while (off < bytes.size() && bytes[off] != '\n') ++off;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++off;
    } else {
      break;
    }
  }
  check(off < bytes.size(), path + ": truncated PGM header");
  int v = 0;
  bool any = false;
  while (off < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[off]))) {
    v = v * 10 + (bytes[off] - '0');
    ++off;
    any = true;
  }
  check(any, path + ": malformed PGM header");
  return v;
}

}  // namespace

Tensor<double> read_pgm(const std::string& path) {
  const std::string bytes = read_file(path);
  check(bytes.size() >= 2 && bytes[0] == 'P', path + ": not a PGM file");
  check(bytes[1] == '5', path + ": only binary (P5) PGM is supported");
  std::size_t off = 2;
  const int w = pgm_next_token(bytes, off, path);
  const int h = pgm_next_token(bytes, off, path);
  const int maxval = pgm_next_token(bytes, off, path);
  check(w > 0 && h > 0, path + ": bad PGM dimensions");
  check(maxval > 0 && maxval < 65536, path + ": bad PGM maxval " + std::to_string(maxval));
  check(off < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[off])),
        path + ": malformed PGM header");
  ++off;

  const int bpp = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * bpp;
  check(bytes.size() - off >= need, path + ": truncated PGM payload");

  Tensor<double> img({h, w});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + off);
  for (i64 i = 0; i < img.size(); ++i) {
    int v;
    if (bpp == 2) {
      v = (static_cast<int>(p[2 * i]) << 8) | p[2 * i + 1];  // 16-bit samples are big-endian
    } else {
      v = p[i];
    }
    img[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

void write_pgm(const std::string& path, const Tensor<double>& img) {
  check(img.rank() == 2, "write_pgm: image must be rank 2, got " + shape_str(img.shape()));
  std::string out = "P5\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n";
  for (i64 i = 0; i < img.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, img[i]));
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  atomic_write(path, out);
}

// ---- checkpoint archive ----

namespace {

json variant_to_json(const model::NetVariant& v) {
  json j;
  j["kind"] = model::to_string(v.kind);
  j["spatial_rank"] = v.spatial_rank;
  j["base_channels"] = v.base_channels;
  j["image_reduction"] = v.image_reduction;
  j["field_reduction"] = v.field_reduction;
  j["cascades"] = v.cascades;
  j["diffeomorphic"] = v.diffeomorphic;
  j["svf_steps"] = v.svf_steps;
  return j;
}

model::NetVariant variant_from_json(const json& j, const std::string& ctx) {
  try {
    model::NetVariant v;
    v.kind = model::parse_net_kind(j.at("kind").get<std::string>());
    v.spatial_rank = j.at("spatial_rank").get<int>();
    v.base_channels = j.at("base_channels").get<int>();
    v.image_reduction = j.at("image_reduction").get<Shape>();
    v.field_reduction = j.at("field_reduction").get<Shape>();
    v.cascades = j.at("cascades").get<int>();
    v.diffeomorphic = j.at("diffeomorphic").get<bool>();
    v.svf_steps = j.value("svf_steps", 7);
    v.validate();
    return v;
  } catch (const json::exception& e) {
    fail(ctx + ": bad variant manifest: " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> read_archive(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t off = 0;
  check(bytes.size() >= 12 && std::memcmp(bytes.data(), kArchiveMagic, 4) == 0,
        path + ": bad magic (not a checkpoint archive)");
  off = 4;
  const auto version = read_raw<std::uint32_t>(bytes, off, path);
  check(version == kArchiveVersion, path + ": unsupported archive version " + std::to_string(version));
  const auto count = read_raw<std::uint32_t>(bytes, off, path);
  std::vector<std::pair<std::string, std::string>> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<std::uint32_t>(bytes, off, path);
    check(off + name_len <= bytes.size(), path + ": truncated");
    std::string name = bytes.substr(off, name_len);
    off += name_len;
    const auto payload_len = read_raw<std::uint64_t>(bytes, off, path);
    check(off + payload_len <= bytes.size(), path + ": truncated");
    entries.emplace_back(std::move(name), bytes.substr(off, payload_len));
    off += payload_len;
  }
  return entries;
}

}  // namespace

void save_checkpoint_data(const std::string& path, const CheckpointData& d) {
  json manifest;
  manifest["format"] = "bltc.v1";
  manifest["variant"] = variant_to_json(d.info.variant);
  manifest["dtype"] = d.info.dtype;
  manifest["epoch"] = d.info.epoch;
  std::vector<std::pair<std::string, std::string>> entries;
  entries.emplace_back("manifest.json", manifest.dump(2));
  for (const auto& [name, tensor] : d.params)
    entries.emplace_back("param/" + name, tensor_bytes(tensor));

  std::string out;
  out.append(kArchiveMagic, 4);
  append_raw(out, kArchiveVersion);
  append_raw(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, payload] : entries) {
    append_raw(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    append_raw(out, static_cast<std::uint64_t>(payload.size()));
    out.append(payload);
  }
  atomic_write(path, out);
}

CheckpointData load_checkpoint_data(const std::string& path) {
  CheckpointData d;
  bool have_manifest = false;
  for (auto& [name, payload] : read_archive(path)) {
    if (name == "manifest.json") {
      json j;
      try {
        j = json::parse(payload);
      } catch (const json::exception& e) {
        fail(path + ": bad manifest.json: " + e.what());
      }
      d.info.variant = variant_from_json(j.at("variant"), path);
      d.info.dtype = j.value("dtype", "real32");
      d.info.epoch = j.value("epoch", 0);
      have_manifest = true;
    } else if (name.rfind("param/", 0) == 0) {
      d.params.emplace_back(name.substr(6), tensor_from_bytes(payload, path + ":" + name));
    }
  }
  check(have_manifest, path + ": archive has no manifest.json");
  return d;
}

CheckpointInfo peek_checkpoint(const std::string& path) { return load_checkpoint_data(path).info; }

// ---- dataset manifests ----

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(path + ": bad manifest JSON: " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](std::string p) -> std::string {
    if (p.empty()) return p;
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestEntry> out;
  try {
    for (const auto& e : j.at("pairs")) {
      ManifestEntry m;
      m.id = e.at("id").get<std::string>();
      m.moving = resolve(e.at("moving").get<std::string>());
      m.fixed = resolve(e.at("fixed").get<std::string>());
      m.moving_mask = resolve(e.value("moving_mask", ""));
      m.fixed_mask = resolve(e.value("fixed_mask", ""));
      out.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(path + ": bad manifest entry: " + e.what());
  }
  check(!out.empty(), path + ": manifest lists no pairs");
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  json pairs = json::array();
  for (const auto& e : entries) {
    json p;
    p["id"] = e.id;
    p["moving"] = e.moving;
    p["fixed"] = e.fixed;
    if (!e.moving_mask.empty()) p["moving_mask"] = e.moving_mask;
    if (!e.fixed_mask.empty()) p["fixed_mask"] = e.fixed_mask;
    pairs.push_back(std::move(p));
  }
  json j;
  j["pairs"] = std::move(pairs);
  atomic_write(path, j.dump(2) + "\n");
}

}  // namespace fnet::io
