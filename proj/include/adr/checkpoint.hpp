// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file checkpoint.hpp
/// @brief Binary model checkpoint: config text plus named float32 tensors.
///
/// Layout, all integers little-endian:
///   "ADRCKPT\0"            8-byte magic
///   u32 version            currently 1
///   u32 len, bytes         ExperimentConfig text (see experiment.hpp)
///   u32 count              number of parameter tensors
///   per tensor: u32 name_len, name bytes, u32 ndim, i32 dims[ndim],
///               f32 values[prod(dims)]

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adr/detector.hpp"
#include "adr/experiment.hpp"

namespace adr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> kCheckpointMagic{'A', 'D', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void put_u32(std::ostream& o, std::uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw CheckpointError(std::string("checkpoint truncated at ") + what);
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint32_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw CheckpointError(std::string("checkpoint truncated at ") + what);
  return s;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg, Detector<T>& net) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw CheckpointError("cannot write checkpoint " + path.string());
  o.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u32(o, kCheckpointVersion);
  const std::string text = to_text(cfg);
  detail::put_u32(o, static_cast<std::uint32_t>(text.size()));
  o.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto params = net.parameters();
  detail::put_u32(o, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(o, static_cast<std::uint32_t>(p.name.size()));
    o.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put_u32(o, static_cast<std::uint32_t>(p.value->shape.size()));
    for (auto d : p.value->shape) {
      const std::int32_t di = static_cast<std::int32_t>(d);
      o.write(reinterpret_cast<const char*>(&di), 4);
    }
    for (T v : p.value->data) {
      const float f = static_cast<float>(v);
      o.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!o) throw CheckpointError("write failed for " + path.string());
}

template <typename T = float>
struct LoadedModel {
  ExperimentConfig config;
  Detector<T> net;
};

/// Rebuilds the network from the stored config, then fills every parameter
/// by name. Any missing, extra or mis-shaped tensor is an error.
template <typename T = float>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = detail::get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto text_len = detail::get_u32(in, "config length");
  ExperimentConfig cfg;
  try {
    cfg = parse_config(detail::get_bytes(in, text_len, "config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  LoadedModel<T> m{cfg, Detector<T>(cfg.detector())};
  auto params = m.net.parameters();
  const auto count = detail::get_u32(in, "tensor count");
  if (count != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = detail::get_bytes(in, detail::get_u32(in, "name length"), "name");
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.name == name; });
    if (it == params.end()) throw CheckpointError("checkpoint tensor '" + name + "' does not exist in the model");
    const auto ndim = detail::get_u32(in, "ndim");
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      std::int32_t v = 0;
      if (!in.read(reinterpret_cast<char*>(&v), 4)) throw CheckpointError("checkpoint truncated at dims");
      if (v < 0) throw CheckpointError("negative dimension in tensor '" + name + "'");
      shape.push_back(v);
    }
    if (shape != it->value->shape)
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(it->value->shape));
    for (auto& v : it->value->data) {
      float f = 0;
      if (!in.read(reinterpret_cast<char*>(&f), 4)) throw CheckpointError("checkpoint truncated in '" + name + "'");
      v = static_cast<T>(f);
    }
  }
  return m;
}

}  // namespace adr
