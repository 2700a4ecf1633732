#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace carvq {

/// Allocator with a fixed 64-byte base alignment. Vectorized reductions peel
/// according to address alignment, so a fixed base keeps their summation
/// order, and hence their bits, the same from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedFloats = std::vector<float, AlignedAllocator<float>>;

}  // namespace carvq
