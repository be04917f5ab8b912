// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dasformer/param_store.hpp"

namespace dasformer {

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, double>) return "f64";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "u64";
  else static_assert(sizeof(T) == 0, "unsupported archive dtype");
}

}  // namespace detail

/// One payload blob in a checkpoint archive.
struct ArchiveEntry {
  std::string name;
  std::string section;  // "model", "adam_m", "adam_v", "run", ...
  std::string dtype;    // "f32", "f64", "u64"
  std::vector<std::size_t> shape;
  bool trainable = true;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  template <typename T>
  static ArchiveEntry make(std::string name, std::string section, const T* data,
                           std::vector<std::size_t> shape, bool trainable = true) {
    ArchiveEntry e;
    e.name = std::move(name);
    e.section = std::move(section);
    e.dtype = detail::dtype_name<T>();
    e.trainable = trainable;
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    e.shape = std::move(shape);
    e.bytes.resize(n * sizeof(T));
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    return e;
  }

  template <typename T>
  static ArchiveEntry scalar(std::string name, std::string section, T value) {
    return make<T>(std::move(name), std::move(section), &value, {1}, false);
  }

  template <typename T>
  void copy_to(T* out, std::size_t n) const {
    if (dtype != detail::dtype_name<T>())
      throw std::runtime_error("checkpoint: entry " + name + " has dtype " + dtype + ", expected " +
                               detail::dtype_name<T>());
    if (bytes.size() != n * sizeof(T))
      throw std::runtime_error("checkpoint: entry " + name + " size mismatch");
    std::memcpy(out, bytes.data(), bytes.size());
  }

  template <typename T>
  T scalar_value() const {
    T v;
    copy_to(&v, 1);
    return v;
  }
};

/// Flat binary archive: "DFCK" magic + version, a JSON manifest (name, dtype,
/// shape, byte offset, crc32 per tensor, plus free-form meta), then the
/// little-endian payload blobs.
inline void write_archive(const std::string& path, const std::vector<ArchiveEntry>& entries,
                          const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"section", e.section},
                                   {"dtype", e.dtype},
                                   {"shape", e.shape},
                                   {"offset", offset},
                                   {"bytes", e.bytes.size()},
                                   {"crc32", detail::crc32(e.bytes.data(), e.bytes.size())},
                                   {"trainable", e.trainable}});
    offset += e.bytes.size();
  }
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write("DFCK", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(mtext.data(), std::streamsize(mtext.size()));
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.bytes.data()), std::streamsize(e.bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct Archive {
  nlohmann::json meta;
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  const ArchiveEntry& at(const std::string& name) const {
    const ArchiveEntry* e = find(name);
    if (!e) throw std::runtime_error("checkpoint: missing entry " + name);
    return *e;
  }
};

inline Archive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), "DFCK", 4) != 0)
    throw std::runtime_error("checkpoint: " + path + ": bad magic");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 4, 4);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  std::uint64_t mlen;
  std::memcpy(&mlen, buf.data() + 8, 8);
  if (16 + mlen > buf.size()) throw std::runtime_error("checkpoint: truncated manifest");
  nlohmann::json manifest =
      nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + std::ptrdiff_t(mlen));

  Archive archive;
  archive.meta = manifest.value("meta", nlohmann::json::object());
  const std::size_t payload_base = 16 + mlen;
  for (const auto& t : manifest.at("tensors")) {
    ArchiveEntry e;
    e.name = t.at("name").get<std::string>();
    e.section = t.value("section", std::string("model"));
    e.dtype = t.at("dtype").get<std::string>();
    e.shape = t.at("shape").get<std::vector<std::size_t>>();
    e.trainable = t.value("trainable", true);
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t nbytes = t.at("bytes").get<std::size_t>();
    if (payload_base + offset + nbytes > buf.size())
      throw std::runtime_error("checkpoint: " + path + ": truncated payload for " + e.name);
    e.bytes.assign(buf.begin() + std::ptrdiff_t(payload_base + offset),
                   buf.begin() + std::ptrdiff_t(payload_base + offset + nbytes));
    if (detail::crc32(e.bytes.data(), e.bytes.size()) != t.at("crc32").get<std::uint32_t>())
      throw std::runtime_error("checkpoint: " + path + ": checksum mismatch for " + e.name);
    archive.entries.push_back(std::move(e));
  }
  return archive;
}

/// Serializes every store entry (values only; gradients are transient) under
/// the given section. Running BN statistics ride along as non-trainable
/// entries.
template <typename T>
void append_store(std::vector<ArchiveEntry>& out, const ParamStore<T>& store,
                  const std::string& section = "model") {
  for (std::size_t i = 0; i < store.count(); ++i) {
    const Tensor<T>& v = store.value(i);
    out.push_back(ArchiveEntry::make<T>(store.name(i), section, v.data(), v.shape(),
                                        store.trainable(i)));
  }
}

/// Fills an already-built store from a section; every store entry must be
/// present with matching shape.
template <typename T>
void load_store(const Archive& archive, ParamStore<T>& store,
                const std::string& section = "model") {
  for (std::size_t i = 0; i < store.count(); ++i) {
    const ArchiveEntry* e = archive.find(store.name(i));
    if (!e || e->section != section)
      throw std::runtime_error("checkpoint: missing tensor " + store.name(i));
    Tensor<T>& v = store.value(i);
    if (e->shape != v.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + store.name(i));
    e->copy_to(v.data(), v.size());
  }
}

}  // namespace dasformer
