#pragma once

// Binary correlation-map files.
//
// Layout, all little-endian:
//   "ARTC"            4 bytes magic
//   version  u16      = 1
//   rows     u16
//   cols     u16
//   patch    u16      patch size in pixels
//   reserved u16
//   rows*cols f32     row-major correlations, each in [-1, 1]

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "artic/semantic_allocator.hpp"

namespace artic {

class MapFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kMapMagic{'A', 'R', 'T', 'C'};
inline constexpr std::uint16_t kMapVersion = 1;
inline constexpr std::size_t kMapHeaderBytes = 14;

namespace detail {

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<unsigned char>((v >> shift) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t checked_u16(int v, const char* what) {
  if (v < 0 || v > std::numeric_limits<std::uint16_t>::max()) {
    throw MapFormatError(std::string("correlation map: ") + what + " does not fit in u16");
  }
  return static_cast<std::uint16_t>(v);
}

}  // namespace detail

inline std::vector<unsigned char> encode_correlation_map(const CorrelationMap& map) {
  map.validate();
  std::vector<unsigned char> out;
  out.reserve(kMapHeaderBytes + map.values.size() * 4);
  out.insert(out.end(), kMapMagic.begin(), kMapMagic.end());
  detail::put_u16(out, kMapVersion);
  detail::put_u16(out, detail::checked_u16(map.rows(), "rows"));
  detail::put_u16(out, detail::checked_u16(map.cols(), "cols"));
  detail::put_u16(out, detail::checked_u16(map.patch_size, "patch size"));
  detail::put_u16(out, 0);
  for (double rho : map.values) {
    detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(rho)));
  }
  return out;
}

/// Parses and validates an encoded map. Throws MapFormatError on any defect.
inline CorrelationMap decode_correlation_map(std::span<const unsigned char> bytes) {
  if (bytes.size() < kMapHeaderBytes) throw MapFormatError("correlation map: truncated header");
  if (!std::equal(kMapMagic.begin(), kMapMagic.end(), bytes.begin())) {
    throw MapFormatError("correlation map: bad magic (expected \"ARTC\")");
  }
  const unsigned char* p = bytes.data();
  const std::uint16_t version = detail::get_u16(p + 4);
  if (version != kMapVersion) {
    throw MapFormatError("correlation map: unsupported version " + std::to_string(version));
  }
  const int rows = detail::get_u16(p + 6);
  const int cols = detail::get_u16(p + 8);
  const int patch = detail::get_u16(p + 10);
  if (rows < 1 || cols < 1) throw MapFormatError("correlation map: rows and cols must be >= 1");
  if (patch < 1) throw MapFormatError("correlation map: patch size must be >= 1");

  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const std::size_t expected = kMapHeaderBytes + count * 4;
  if (bytes.size() != expected) {
    throw MapFormatError("correlation map: expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
  }

  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float rho = std::bit_cast<float>(detail::get_u32(p + kMapHeaderBytes + 4 * i));
    if (!(rho >= -1.0f && rho <= 1.0f)) {
      throw MapFormatError("correlation map: value " + std::to_string(rho) + " at index " +
                           std::to_string(i) + " outside [-1, 1]");
    }
    values[i] = rho;
  }
  return CorrelationMap{patch, Grid<double>(rows, cols, std::move(values))};
}

inline CorrelationMap load_correlation_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MapFormatError("cannot open correlation map: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_correlation_map(bytes);
  } catch (const MapFormatError& e) {
    throw MapFormatError(path.string() + ": " + e.what());
  }
}

inline void save_correlation_map(const std::filesystem::path& path, const CorrelationMap& map) {
  const auto bytes = encode_correlation_map(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MapFormatError("cannot write correlation map: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw MapFormatError("write failed: " + path.string());
}

}  // namespace artic
