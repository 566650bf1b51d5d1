#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "txt/data.hpp"
#include "txt/errors.hpp"
#include "txt/tensor.hpp"

// Versioned model persistence. A bundle file is:
//
//   8-byte magic "TXTMODEL"
//   u32le container version (1)
//   three length-prefixed sections, in order: "meta", "vocab", "params"
//     section = u32le name length | name | u64le payload length | payload
//   u32le CRC-32 (IEEE) over every preceding byte
//
// meta is key=value text (kind, tag, created, precision, config.*); vocab
// is the vocabulary text sections; params is a packed list of named arrays
// stored as raw little-endian reals at the run's precision width. The full
// grammar lives in docs/FORMATS.md.

namespace txt {

inline constexpr char kBundleMagic[8] = {'T', 'X', 'T', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kBundleVersion = 1;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

struct NamedArray {
  std::string name;
  Shape shape;
  std::uint8_t width = 0;  // bytes per element: 4 or 8
  std::vector<std::uint8_t> bytes;  // little-endian IEEE-754 payload
};

struct ModelBundle {
  std::uint32_t format_version = kBundleVersion;
  std::string kind;       // txt | rnn | rnn-latent-cross | itemcf
  std::string tag;        // version tag
  std::string created;    // ISO-8601
  std::string precision;  // standard | wide
  std::vector<std::pair<std::string, std::string>> config;  // ordered key=value
  Vocabs vocabs;
  std::vector<NamedArray> params;

  const std::string& config_at(const std::string& key) const {
    for (const auto& [k, v] : config)
      if (k == key) return v;
    throw FormatError("bundle config is missing key: " + key);
  }
  bool config_has(const std::string& key) const {
    for (const auto& [k, v] : config)
      if (k == key) return true;
    return false;
  }
  const NamedArray& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw FormatError("bundle is missing parameter: " + name);
  }
};

void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes);

template <class R>
NamedArray pack_array(const std::string& name, const Tensor<R>& t) {
  static_assert(sizeof(R) == 4 || sizeof(R) == 8);
  if (!t.finite()) throw ContractError("parameter " + name + " holds non-finite values");
  NamedArray arr;
  arr.name = name;
  arr.shape = t.shape;
  arr.width = sizeof(R);
  arr.bytes.resize(t.data.size() * sizeof(R));
  std::memcpy(arr.bytes.data(), t.data.data(), arr.bytes.size());
  return arr;
}

template <class R>
Tensor<R> unpack_array(const NamedArray& arr) {
  const auto n = static_cast<std::size_t>(numel(arr.shape));
  Tensor<R> t = Tensor<R>::zeros(arr.shape);
  if (arr.width == sizeof(R)) {
    if (arr.bytes.size() != n * sizeof(R))
      throw FormatError("array " + arr.name + " payload size mismatch");
    std::memcpy(t.data.data(), arr.bytes.data(), arr.bytes.size());
  } else if (arr.width == 4) {
    if (arr.bytes.size() != n * 4) throw FormatError("array " + arr.name + " payload size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, arr.bytes.data() + i * 4, 4);
      t.data[i] = static_cast<R>(v);
    }
  } else if (arr.width == 8) {
    if (arr.bytes.size() != n * 8) throw FormatError("array " + arr.name + " payload size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, arr.bytes.data() + i * 8, 8);
      t.data[i] = static_cast<R>(v);
    }
  } else {
    throw FormatError("array " + arr.name + " has unsupported element width " +
                      std::to_string(arr.width));
  }
  if (!t.finite()) throw FormatError("array " + arr.name + " holds non-finite values");
  return t;
}

template <class R>
constexpr const char* precision_name() {
  return sizeof(R) == 8 ? "wide" : "standard";
}

}  // namespace txt
