#pragma once

// Little-endian helpers shared by the .emb and .carvq containers.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carvq/error.hpp"
#include "carvq/half.hpp"

namespace carvq::detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

/// Append values at storage precision (binary16 or binary32), little-endian.
inline void put_values(std::vector<std::uint8_t>& out, std::span<const float> values, Precision p) {
  if (p == Precision::F16) {
    for (float v : values) {
      const std::uint16_t h = float_to_half(v);
      out.push_back(static_cast<std::uint8_t>(h));
      out.push_back(static_cast<std::uint8_t>(h >> 8));
    }
  } else {
    for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

/// Decode `count` values at storage precision starting at `bytes[0]`.
inline std::vector<float> get_values(std::span<const std::uint8_t> bytes, std::size_t count, Precision p) {
  std::vector<float> out(count);
  if (p == Precision::F16) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto h = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
      out[i] = half_to_float(h);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32(bytes, 4 * i));
  }
  return out;
}

/// Splits "MAGIC | u32 len | header" and returns the header text plus payload offset.
inline std::pair<std::string, std::size_t> split_header(std::span<const std::uint8_t> bytes,
                                                        std::string_view magic, ErrorKind on_short) {
  const std::size_t probe = std::min(bytes.size(), magic.size());
  if (std::memcmp(bytes.data(), magic.data(), probe) != 0) {
    throw Error(ErrorKind::MalformedHeader, "missing magic \"" + std::string(magic) + "\"");
  }
  if (bytes.size() < magic.size() + 4) throw Error(on_short, "file ends inside the preamble");
  const std::uint32_t header_len = get_u32(bytes, magic.size());
  const std::size_t start = magic.size() + 4;
  if (bytes.size() - start < header_len) {
    throw Error(on_short, "file shorter than declared header length");
  }
  return {std::string(reinterpret_cast<const char*>(bytes.data() + start), header_len), start + header_len};
}

}  // namespace carvq::detail
