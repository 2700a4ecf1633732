#pragma once

#include <cstdint>
#include <initializer_list>

namespace carvq {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Positional seed derivation: the result depends only on the base seed and
/// the coordinates, never on the order in which work is scheduled.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t c : coords) s = splitmix64(s ^ splitmix64(c + 0x632BE59BD9B4E019ull));
  return s;
}

}  // namespace carvq
