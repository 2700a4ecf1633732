#include "carvq/bitpack.hpp"

#include <string>

#include "carvq/error.hpp"

namespace carvq {

namespace {

void check_kappa(int kappa) {
  if (kappa < 1 || kappa > 8) {
    throw Error(ErrorKind::InvalidSpec, "kappa must be in [1, 8], got " + std::to_string(kappa));
  }
}

}  // namespace

PackedIndexStream pack_indices(std::span<const std::uint8_t> indices, int kappa) {
  check_kappa(kappa);
  PackedIndexStream out;
  out.kappa = kappa;
  out.count = indices.size();
  out.bytes.assign(PackedIndexStream::byte_length(indices.size(), kappa), 0);

  const unsigned limit = 1u << kappa;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < indices.size(); ++i, bit += kappa) {
    const unsigned value = indices[i];
    if (value >= limit) {
      throw Error(ErrorKind::IndexOverflow, "index " + std::to_string(value) + " at position " +
                                                std::to_string(i) + " does not fit in " +
                                                std::to_string(kappa) + " bits");
    }
    // A kappa <= 8 field straddles at most two bytes.
    const std::size_t byte = bit >> 3;
    const unsigned shift = bit & 7;
    const unsigned shifted = value << shift;
    out.bytes[byte] |= static_cast<std::uint8_t>(shifted);
    if (shift + kappa > 8) out.bytes[byte + 1] |= static_cast<std::uint8_t>(shifted >> 8);
  }
  return out;
}

std::uint8_t packed_at(const PackedIndexStream& stream, std::size_t i) noexcept {
  const std::size_t bit = i * stream.kappa;
  const std::size_t byte = bit >> 3;
  const unsigned shift = bit & 7;
  unsigned word = stream.bytes[byte];
  if (shift + stream.kappa > 8) word |= static_cast<unsigned>(stream.bytes[byte + 1]) << 8;
  return static_cast<std::uint8_t>((word >> shift) & ((1u << stream.kappa) - 1));
}

std::vector<std::uint8_t> unpack_indices(const PackedIndexStream& stream) {
  check_kappa(stream.kappa);
  if (stream.bytes.size() != PackedIndexStream::byte_length(stream.count, stream.kappa)) {
    throw Error(ErrorKind::MalformedStream, "buffer holds " + std::to_string(stream.bytes.size()) +
                                                " bytes, expected " +
                                                std::to_string(PackedIndexStream::byte_length(stream.count, stream.kappa)));
  }
  const std::size_t used_bits = stream.count * stream.kappa;
  if (used_bits % 8 != 0) {
    const auto pad_mask = static_cast<std::uint8_t>(0xFFu << (used_bits % 8));
    if (stream.bytes.back() & pad_mask) throw Error(ErrorKind::MalformedStream, "nonzero pad bits");
  }

  std::vector<std::uint8_t> out(stream.count);
  for (std::size_t i = 0; i < stream.count; ++i) out[i] = packed_at(stream, i);
  return out;
}

}  // namespace carvq
