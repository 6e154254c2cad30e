#include "vtr/alloc_probe.hpp"

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <new>

namespace vtr::alloc_probe {

namespace {

std::atomic<bool> g_enabled{false};
std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};
std::atomic<std::int64_t> g_total{0};
std::atomic<std::int64_t> g_calls{0};

constexpr std::uint64_t kTrackedBit = 1ull << 63;

// 16-byte header kept immediately before the user pointer: the raw malloc
// block and the requested size with a tracked flag.
struct Header {
  void* raw;
  std::uint64_t size_flags;
};
static_assert(sizeof(Header) == 16);

void note_alloc(std::size_t size) {
  g_calls.fetch_add(1, std::memory_order_relaxed);
  g_total.fetch_add(static_cast<std::int64_t>(size), std::memory_order_relaxed);
  const std::int64_t live =
      g_live.fetch_add(static_cast<std::int64_t>(size), std::memory_order_relaxed) +
      static_cast<std::int64_t>(size);
  std::int64_t peak = g_peak.load(std::memory_order_relaxed);
  while (live > peak &&
         !g_peak.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
  }
}

void* allocate(std::size_t size, std::size_t align) {
  if (align < 16) align = 16;
  void* raw = std::malloc(size + sizeof(Header) + align);
  if (raw == nullptr) return nullptr;
  const std::uintptr_t base = reinterpret_cast<std::uintptr_t>(raw) + sizeof(Header);
  const std::uintptr_t user = (base + align - 1) & ~(static_cast<std::uintptr_t>(align) - 1);
  Header* h = reinterpret_cast<Header*>(user) - 1;
  h->raw = raw;
  const bool tracked = g_enabled.load(std::memory_order_relaxed);
  h->size_flags = static_cast<std::uint64_t>(size) | (tracked ? kTrackedBit : 0ull);
  if (tracked) note_alloc(size);
  return reinterpret_cast<void*>(user);
}

void release(void* ptr) {
  if (ptr == nullptr) return;
  Header* h = reinterpret_cast<Header*>(ptr) - 1;
  if (h->size_flags & kTrackedBit) {
    g_live.fetch_sub(static_cast<std::int64_t>(h->size_flags & ~kTrackedBit),
                     std::memory_order_relaxed);
  }
  std::free(h->raw);
}

}  // namespace

void reset() {
  g_live.store(0, std::memory_order_relaxed);
  g_peak.store(0, std::memory_order_relaxed);
  g_total.store(0, std::memory_order_relaxed);
  g_calls.store(0, std::memory_order_relaxed);
}

void set_enabled(bool on) { g_enabled.store(on, std::memory_order_relaxed); }
bool enabled() { return g_enabled.load(std::memory_order_relaxed); }

Stats stats() {
  Stats s;
  s.live_bytes = g_live.load(std::memory_order_relaxed);
  s.peak_bytes = g_peak.load(std::memory_order_relaxed);
  s.total_bytes = g_total.load(std::memory_order_relaxed);
  s.alloc_calls = g_calls.load(std::memory_order_relaxed);
  return s;
}

}  // namespace vtr::alloc_probe

// Global allocation operators route through the instrumented path.

void* operator new(std::size_t size) {
  void* p = vtr::alloc_probe::allocate(size, 16);
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

void* operator new[](std::size_t size) {
  void* p = vtr::alloc_probe::allocate(size, 16);
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

void* operator new(std::size_t size, std::align_val_t align) {
  void* p = vtr::alloc_probe::allocate(size, static_cast<std::size_t>(align));
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

void* operator new[](std::size_t size, std::align_val_t align) {
  void* p = vtr::alloc_probe::allocate(size, static_cast<std::size_t>(align));
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

void* operator new(std::size_t size, const std::nothrow_t&) noexcept {
  return vtr::alloc_probe::allocate(size, 16);
}

void* operator new[](std::size_t size, const std::nothrow_t&) noexcept {
  return vtr::alloc_probe::allocate(size, 16);
}

void operator delete(void* ptr) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete[](void* ptr) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete(void* ptr, std::size_t) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete[](void* ptr, std::size_t) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete(void* ptr, std::align_val_t) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete[](void* ptr, std::align_val_t) noexcept { vtr::alloc_probe::release(ptr); }
void operator delete(void* ptr, std::size_t, std::align_val_t) noexcept {
  vtr::alloc_probe::release(ptr);
}
void operator delete[](void* ptr, std::size_t, std::align_val_t) noexcept {
  vtr::alloc_probe::release(ptr);
}
void operator delete(void* ptr, const std::nothrow_t&) noexcept {
  vtr::alloc_probe::release(ptr);
}
void operator delete[](void* ptr, const std::nothrow_t&) noexcept {
  vtr::alloc_probe::release(ptr);
}
