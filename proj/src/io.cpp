#include "stairwise/io.hpp"
#include "stairwise/cloud.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace stairwise {
namespace io {

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
    crc = ::crc32(crc, bytes.data() + off, n);
  }
  return static_cast<std::uint32_t>(crc);
}

void append_u8(Bytes& out, const Mask& mask) {
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      out.push_back(mask(r, c) ? 1 : 0);
    }
  }
}

GridF load_f32(std::span<const std::uint8_t> bytes, std::size_t offset, int rows, int cols) {
  GridF grid(rows, cols);
  std::memcpy(grid.data(), bytes.data() + offset, sizeof(float) * static_cast<std::size_t>(rows * cols));
  return grid;
}

Mask load_u8(std::span<const std::uint8_t> bytes, std::size_t offset, int rows, int cols) {
  Mask mask(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto v = bytes[offset + static_cast<std::size_t>(r * cols + c)];
      if (v > 1) throw FormatError("mask byte is neither 0 nor 1");
      mask(r, c) = v == 1;
    }
  }
  return mask;
}

void write_pgm(const std::filesystem::path& path, const Grid& values, double lo, double hi) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P2\n" << values.cols() << ' ' << values.rows() << "\n255\n";
  const double span = hi - lo;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      int level = 0;
      const double v = values(r, c);
      if (std::isfinite(v)) {
        const double t = span > 0.0 ? (v - lo) / span : 0.0;
        level = static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
      }
      out << level << (c + 1 == values.cols() ? '\n' : ' ');
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

GridT<int> read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P2" || cols <= 0 || rows <= 0 || maxval <= 0) {
    throw FormatError("not an ASCII P2 greymap: " + path.string());
  }
  GridT<int> grid(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!(in >> grid(r, c))) throw FormatError("truncated greymap: " + path.string());
    }
  }
  return grid;
}

}  // namespace io

void write_cloud(const StampedCloud& cloud, const std::filesystem::path& stem) {
  io::Bytes blob;
  blob.reserve(cloud.size() * 3 * sizeof(float));
  for (const auto& p : cloud.points) {
    io::append(blob, static_cast<float>(p.position.x()));
    io::append(blob, static_cast<float>(p.position.y()));
    io::append(blob, static_cast<float>(p.position.z()));
  }
  auto bin = stem;
  bin += ".bin";
  auto manifest = stem;
  manifest += ".json";
  io::write_bytes(bin, blob);
  io::write_json(manifest, {{"kind", "cloud"},
                            {"version", 1},
                            {"frame", cloud.frame},
                            {"count", cloud.size()},
                            {"layout", "float32 x,y,z little-endian row-major"},
                            {"payload", bin.filename().string()}});
}

StampedCloud read_cloud(const std::filesystem::path& stem) {
  auto manifest_path = stem;
  manifest_path += ".json";
  const auto manifest = io::read_json(manifest_path);
  if (manifest.value("version", 0) != 1) throw VersionError("unsupported cloud version");
  const auto count = manifest.at("count").get<std::size_t>();
  const auto bytes = io::read_bytes(stem.parent_path() / manifest.at("payload").get<std::string>());
  if (bytes.size() != count * 3 * sizeof(float)) {
    throw TruncationError("cloud payload size does not match declared count",
                          bytes.size() / (3 * sizeof(float)));
  }
  StampedCloud cloud;
  cloud.frame = manifest.at("frame").get<std::string>();
  cloud.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = i * 3 * sizeof(float);
    cloud.points[i].position = Vec3(io::load<float>(bytes, off), io::load<float>(bytes, off + 4),
                                    io::load<float>(bytes, off + 8));
  }
  return cloud;
}

}  // namespace stairwise
