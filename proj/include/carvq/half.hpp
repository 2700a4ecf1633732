#pragma once

#include <cstdint>
#include <span>

namespace carvq {

/// IEEE-754 binary16 <-> binary32 conversion. Narrowing rounds to nearest,
/// ties to even; overflow goes to infinity.
std::uint16_t float_to_half(float value) noexcept;
float half_to_float(std::uint16_t bits) noexcept;

/// Largest binary16 value <= value (value must be finite and in range).
float half_round_down(float value) noexcept;
/// Smallest binary16 value >= value (value must be finite and in range).
float half_round_up(float value) noexcept;

/// Storage precision in bits per coefficient; only 16 and 32 exist.
enum class Precision : int { F16 = 16, F32 = 32 };

inline int bits(Precision p) noexcept { return static_cast<int>(p); }
inline std::size_t bytes_per_value(Precision p) noexcept { return p == Precision::F16 ? 2 : 4; }

/// Round a working-precision value to what storage precision `p` can hold.
float round_to(Precision p, float value) noexcept;
void round_to(Precision p, std::span<float> values) noexcept;

}  // namespace carvq
