#include "carvq/half.hpp"

#include <bit>
#include <cmath>

namespace carvq {

std::uint16_t float_to_half(float value) noexcept {
  const auto x = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t absx = x & 0x7FFFFFFFu;

  if (absx >= 0x7F800000u) {
    // Inf stays Inf; NaN keeps a quiet payload.
    const std::uint32_t nan_bits = absx > 0x7F800000u ? (0x200u | ((absx >> 13) & 0x3FFu)) : 0u;
    return static_cast<std::uint16_t>(sign | 0x7C00u | nan_bits);
  }
  if (absx >= 0x477FF000u) {  // >= 65520 rounds past the largest finite half
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  }
  if (absx < 0x38800000u) {  // below 2^-14: subnormal half (or zero)
    const float a = std::bit_cast<float>(absx);
    // a * 2^24 is exact; nearbyint uses the default round-to-nearest-even mode.
    const auto units = static_cast<std::uint32_t>(std::nearbyint(a * 16777216.0f));
    return static_cast<std::uint16_t>(sign | units);
  }

  const std::uint32_t exponent = (absx >> 23) - 127 + 15;
  const std::uint32_t mantissa = absx & 0x7FFFFFu;
  std::uint32_t h = (exponent << 10) | (mantissa >> 13);
  const std::uint32_t rest = mantissa & 0x1FFFu;
  if (rest > 0x1000u || (rest == 0x1000u && (h & 1u))) {
    ++h;  // a carry into the exponent field is the correct encoding
  }
  return static_cast<std::uint16_t>(sign | h);
}

float half_to_float(std::uint16_t bits) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exponent = (bits >> 10) & 0x1Fu;
  const std::uint32_t mantissa = bits & 0x3FFu;

  if (exponent == 0) {
    const float magnitude = static_cast<float>(mantissa) * 0x1p-24f;
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 31) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent - 15 + 127) << 23) | (mantissa << 13));
}

namespace {

// Neighbouring binary16 values in the direction of +/- infinity.
std::uint16_t half_next_up(std::uint16_t h) noexcept {
  if (h == 0x8000u) return 0x0001u;
  if (h & 0x8000u) return static_cast<std::uint16_t>(h - 1);
  return static_cast<std::uint16_t>(h + 1);
}

std::uint16_t half_next_down(std::uint16_t h) noexcept {
  if (h == 0x0000u) return 0x8001u;
  if (h & 0x8000u) return static_cast<std::uint16_t>(h + 1);
  return static_cast<std::uint16_t>(h - 1);
}

}  // namespace

float half_round_down(float value) noexcept {
  std::uint16_t h = float_to_half(value);
  if (half_to_float(h) > value) h = half_next_down(h);
  return half_to_float(h);
}

float half_round_up(float value) noexcept {
  std::uint16_t h = float_to_half(value);
  if (half_to_float(h) < value) h = half_next_up(h);
  return half_to_float(h);
}

float round_to(Precision p, float value) noexcept {
  return p == Precision::F16 ? half_to_float(float_to_half(value)) : value;
}

void round_to(Precision p, std::span<float> values) noexcept {
  if (p == Precision::F32) return;
  for (float& v : values) v = half_to_float(float_to_half(v));
}

}  // namespace carvq
