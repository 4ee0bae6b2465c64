#pragma once

/// \file
/// Middlebury .flo interchange format.
///
///  bytes   contents
///  0-3     float32 202021.25 ("PIEH" in ASCII)
///  4-7     int32 width
///  8-11    int32 height
///  12-end  float32 (u, v) interleaved, row-major
///
/// Every field is little-endian regardless of host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline std::uint32_t load_le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline float load_lef32(const std::uint8_t* p) { return std::bit_cast<float>(load_le32(p)); }
inline void store_lef32(std::vector<std::uint8_t>& out, float v) {
  store_le32(out, std::bit_cast<std::uint32_t>(v));
}

}  // namespace detail

inline FlowField read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw LengthError("read_flo: header truncated");
  const float magic = detail::load_lef32(bytes.data());
  if (magic != kFloMagic) throw FormatError("read_flo: bad magic");
  const auto width = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 8));
  if (width < 0 || height < 0) throw FormatError("read_flo: negative dimensions");
  const std::uint64_t expected = 12 + 8ull * static_cast<std::uint64_t>(width) * height;
  if (bytes.size() != expected)
    throw LengthError("read_flo: payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  Grid g(height, width, 2);
  const std::uint8_t* p = bytes.data() + 12;
  for (double& v : g.storage()) {
    v = detail::load_lef32(p);
    p += 4;
  }
  try {
    return FlowField(std::move(g));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("read_flo: ") + e.what());
  }
}

/// Values are narrowed to float32.
inline std::vector<std::uint8_t> write_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 8 * flow.pixels());
  detail::store_lef32(out, kFloMagic);
  detail::store_le32(out, static_cast<std::uint32_t>(flow.width()));
  detail::store_le32(out, static_cast<std::uint32_t>(flow.height()));
  for (double v : flow.data()) detail::store_lef32(out, static_cast<float>(v));
  return out;
}

}  // namespace seqflow
