#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sagegan/optim.hpp"

namespace sagegan {

// Binary checkpoint container: a fixed magic, a format version, a model
// kind, the dtype, a config JSON blob and the named parameter arrays in
// registration order. Writes go to a temp file first and are renamed into
// place so readers never observe a partial file.

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'C', 'P'};

template <typename T>
constexpr char dtype_tag() {
  return sizeof(T) == 4 ? 'f' : 'd';
}

template <typename T>
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  std::string kind;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor<T>>> arrays;  // file order

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("truncated checkpoint: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& is, const std::string& path) {
  const uint64_t lo = get_u32(is, path);
  const uint64_t hi = get_u32(is, path);
  return lo | (hi << 32);
}

inline std::string get_str(std::istream& is, const std::string& path) {
  const uint32_t n = get_u32(is, path);
  if (n > (1u << 28)) throw IoError("corrupt checkpoint (oversized string): " + path);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw IoError("truncated checkpoint: " + path);
  return s;
}

}  // namespace detail

template <typename T>
inline void write_checkpoint(const std::string& path, const std::string& kind,
                             const std::string& config_json,
                             const std::vector<std::pair<std::string, Tensor<T>>>& arrays) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + tmp);
    os.write(kCheckpointMagic, 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_str(os, kind);
    os.put(dtype_tag<T>());
    detail::put_str(os, config_json);
    detail::put_u64(os, arrays.size());
    for (const auto& [name, t] : arrays) {
      detail::put_str(os, name);
      detail::put_u32(os, static_cast<uint32_t>(t.ndim()));
      for (int d = 0; d < t.ndim(); ++d) detail::put_u32(os, static_cast<uint32_t>(t.dim(d)));
      detail::put_u64(os, static_cast<uint64_t>(t.numel()));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(T))));
    }
    if (!os.good()) throw IoError("failed writing checkpoint: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path + " (" + ec.message() + ")");
}

template <typename T>
inline Checkpoint<T> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  Checkpoint<T> ck;
  ck.version = detail::get_u32(is, path);
  if (ck.version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(ck.version) + " (expected " +
                  std::to_string(kCheckpointVersion) + "): " + path);
  ck.kind = detail::get_str(is, path);
  const char tag = static_cast<char>(is.get());
  if (tag != dtype_tag<T>())
    throw DataError(std::string("checkpoint dtype '") + tag + "' does not match model dtype '" +
                    dtype_tag<T>() + "': " + path);
  ck.config_json = detail::get_str(is, path);
  const uint64_t n = detail::get_u64(is, path);
  if (n > (1u << 24)) throw IoError("corrupt checkpoint (array count): " + path);
  ck.arrays.reserve(n);
  for (uint64_t k = 0; k < n; ++k) {
    std::string name = detail::get_str(is, path);
    const uint32_t ndim = detail::get_u32(is, path);
    if (ndim > 8) throw IoError("corrupt checkpoint (rank): " + path);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(detail::get_u32(is, path));
    const uint64_t numel = detail::get_u64(is, path);
    Tensor<T> t = ndim == 0 ? Tensor<T>::scalar(T(0)) : Tensor<T>(shape);
    if (static_cast<uint64_t>(t.numel()) != numel)
      throw IoError("corrupt checkpoint (element count for '" + name + "'): " + path);
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(numel * sizeof(T))))
      throw IoError("truncated checkpoint: " + path);
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

/// Save a model: parameters in registration order, then any extra arrays
/// (e.g. optimizer moments).
template <typename T>
inline void save_checkpoint(const std::string& path, const std::string& kind,
                            const std::string& config_json, const ParamStore<T>& store,
                            const std::vector<std::pair<std::string, Tensor<T>>>& extra = {}) {
  std::vector<std::pair<std::string, Tensor<T>>> arrays;
  arrays.reserve(store.size() + extra.size());
  for (const auto& e : store.entries()) arrays.emplace_back(e.name, e.var.value());
  for (const auto& a : extra) arrays.push_back(a);
  write_checkpoint(path, kind, config_json, arrays);
}

/// Load parameters into an existing store. Every store entry must be
/// present with the same shape; the full decoded file is returned so
/// callers can pick up the config blob and extra arrays.
template <typename T>
inline Checkpoint<T> load_checkpoint(const std::string& path, const std::string& expect_kind,
                                     ParamStore<T>& store) {
  Checkpoint<T> ck = read_checkpoint<T>(path);
  if (!expect_kind.empty() && ck.kind != expect_kind)
    throw DataError("checkpoint kind '" + ck.kind + "' does not match expected '" + expect_kind +
                    "': " + path);
  std::map<std::string, const Tensor<T>*> by_name;
  for (const auto& [name, t] : ck.arrays) by_name[name] = &t;
  for (auto& e : store.entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end())
      throw DataError("checkpoint is missing parameter '" + e.name + "': " + path);
    const Tensor<T>& src = *it->second;
    if (!src.same_shape(e.var.value()))
      throw ShapeError("parameter '" + e.name + "': checkpoint shape " + shape_str(src.shape()) +
                       " does not match model shape " + shape_str(e.var.value().shape()));
  }
  // all validated; now copy
  for (auto& e : store.entries()) {
    const Tensor<T>& src = *by_name.at(e.name);
    Tensor<T>& dst = e.var.node()->value;
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = src[i];
  }
  return ck;
}

/// Adam moment arrays with a name prefix, for embedding optimizer state in
/// a checkpoint.
template <typename T>
inline std::vector<std::pair<std::string, Tensor<T>>> adam_state_arrays(
    const Adam<T>& opt, const ParamStore<T>& store, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  const auto& slots = opt.slots();
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& name = store.entries()[i].name;
    out.emplace_back(prefix + name + ".m", slots[i].m);
    out.emplace_back(prefix + name + ".v", slots[i].v);
  }
  return out;
}

/// Restore Adam moments saved by adam_state_arrays.
template <typename T>
inline void restore_adam_state(Adam<T>& opt, const ParamStore<T>& store, const std::string& prefix,
                               const Checkpoint<T>& ck, int64_t step_count) {
  auto& slots = opt.slots();
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& name = store.entries()[i].name;
    const Tensor<T>* m = ck.find(prefix + name + ".m");
    const Tensor<T>* v = ck.find(prefix + name + ".v");
    if (!m || !v) throw DataError("checkpoint is missing optimizer state for '" + name + "'");
    slots[i].m = *m;
    slots[i].v = *v;
  }
  opt.set_step_count(step_count);
}

}  // namespace sagegan
