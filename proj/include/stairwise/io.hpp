#pragma once

#include "stairwise/types.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stairwise::io {

static_assert(std::endian::native == std::endian::little,
              "blob formats are little-endian and written from host memory");

using Bytes = std::vector<std::uint8_t>;

Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with sorted keys, so equal documents give equal bytes.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

template <typename T>
void append(Bytes& out, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T load(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

/// Appends a grid as float32, row-major.
template <typename Derived>
void append_f32(Bytes& out, const Eigen::ArrayBase<Derived>& grid) {
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      append(out, static_cast<float>(grid(r, c)));
    }
  }
}

/// Appends a boolean grid as uint8 0/1, row-major.
void append_u8(Bytes& out, const Mask& mask);

GridF load_f32(std::span<const std::uint8_t> bytes, std::size_t offset, int rows, int cols);
Mask load_u8(std::span<const std::uint8_t> bytes, std::size_t offset, int rows, int cols);

/// ASCII P2 greymap. Values are mapped linearly from [lo, hi] to [0, 255];
/// non-finite values are written as 0.
void write_pgm(const std::filesystem::path& path, const Grid& values, double lo, double hi);

/// Parsed P2 greymap (used by tests and tools).
GridT<int> read_pgm(const std::filesystem::path& path);

}  // namespace stairwise::io
