#pragma once

#include <cstddef>
#include <new>

namespace sattn {

// Process-wide accounting for matrix storage. Every Matrix buffer goes through
// TrackingAllocator, so peak_bytes() is a high-water mark of live matrix data.
namespace alloc_tracker {

void on_allocate(std::size_t bytes) noexcept;
void on_deallocate(std::size_t bytes) noexcept;

std::size_t current_bytes() noexcept;
std::size_t peak_bytes() noexcept;

/// Sets the high-water mark to the current live byte count.
void reset_peak() noexcept;

} // namespace alloc_tracker

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    alloc_tracker::on_allocate(n * sizeof(T));
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    alloc_tracker::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

} // namespace sattn
