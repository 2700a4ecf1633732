#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace carvq {

/// kappa-bit indices packed LSB-first: index i occupies bits [i*kappa, (i+1)*kappa)
/// of the little-endian bitstream. Trailing pad bits are zero.
struct PackedIndexStream {
  int kappa = 1;
  std::size_t count = 0;
  std::vector<std::uint8_t> bytes;

  static constexpr std::size_t byte_length(std::size_t count, int kappa) noexcept {
    return (count * static_cast<std::size_t>(kappa) + 7) / 8;
  }

  friend bool operator==(const PackedIndexStream&, const PackedIndexStream&) = default;
};

PackedIndexStream pack_indices(std::span<const std::uint8_t> indices, int kappa);
std::vector<std::uint8_t> unpack_indices(const PackedIndexStream& stream);

/// Reads index `i` without unpacking the whole stream.
std::uint8_t packed_at(const PackedIndexStream& stream, std::size_t i) noexcept;

}  // namespace carvq
