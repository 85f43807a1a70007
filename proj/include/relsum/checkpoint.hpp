#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "relsum/common.hpp"
#include "relsum/tensor.hpp"

namespace relsum {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container is defined little-endian");

// Versioned binary container of (name, shape, f64 array) triples.
// Layout: magic "RELSUMCK" | u32 version | u8 frozen | u64 root_seed |
//         u64 config_hash | u64 count | entries.
// Entry:  u32 name_len | name | u32 ndim | i32 dims[ndim] | f64 data[numel].
struct CheckpointMeta {
  uint32_t format_version = kFormatVersion;
  bool frozen = false;
  uint64_t root_seed = 0;
  uint64_t config_hash = 0;
};

namespace detail {
inline constexpr char kCkptMagic[8] = {'R', 'E', 'L', 'S', 'U', 'M', 'C', 'K'};

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& is, T& v, const std::string& path) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(Errc::parse_error, "truncated checkpoint: " + path);
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                            const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io_error, "cannot open checkpoint for writing: " + path.string());
  os.write(detail::kCkptMagic, 8);
  detail::write_pod(os, meta.format_version);
  const uint8_t frozen = meta.frozen ? 1 : 0;
  detail::write_pod(os, frozen);
  detail::write_pod(os, meta.root_seed);
  detail::write_pod(os, meta.config_hash);
  const uint64_t count = params.size();
  detail::write_pod(os, count);
  for (const auto& [name, t] : params) {
    check_finite(t, "checkpoint save " + name);
    const uint32_t name_len = static_cast<uint32_t>(name.size());
    detail::write_pod(os, name_len);
    os.write(name.data(), name_len);
    const uint32_t ndim = static_cast<uint32_t>(t.shape.size());
    detail::write_pod(os, ndim);
    for (int d : t.shape) {
      const int32_t dd = d;
      detail::write_pod(os, dd);
    }
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) fail(Errc::io_error, "failed writing checkpoint: " + path.string());
}

inline ParameterStore load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::missing_artifact, "cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    fail(Errc::parse_error, "bad checkpoint magic: " + path.string());
  CheckpointMeta meta;
  detail::read_pod(is, meta.format_version, path.string());
  if (meta.format_version != kFormatVersion)
    fail(Errc::parse_error, "unsupported checkpoint version " + std::to_string(meta.format_version));
  uint8_t frozen = 0;
  detail::read_pod(is, frozen, path.string());
  meta.frozen = frozen != 0;
  detail::read_pod(is, meta.root_seed, path.string());
  detail::read_pod(is, meta.config_hash, path.string());
  uint64_t count = 0;
  detail::read_pod(is, count, path.string());

  ParameterStore params;
  for (uint64_t k = 0; k < count; ++k) {
    uint32_t name_len = 0;
    detail::read_pod(is, name_len, path.string());
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t ndim = 0;
    detail::read_pod(is, ndim, path.string());
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      int32_t dd = 0;
      detail::read_pod(is, dd, path.string());
      d = dd;
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) fail(Errc::parse_error, "truncated checkpoint: " + path.string());
    params.add(name, std::move(t));
  }
  if (meta_out) *meta_out = meta;
  return params;
}

}  // namespace relsum
