#pragma once

#include <cstdint>

namespace vtr::alloc_probe {

// Counters behind the global operator new/delete overrides. Allocations
// made while the probe is enabled are tagged in a per-allocation header so
// frees of pre-scope memory never skew the live count.
struct Stats {
  std::int64_t live_bytes = 0;
  std::int64_t peak_bytes = 0;
  std::int64_t total_bytes = 0;
  std::int64_t alloc_calls = 0;
};

void reset();
void set_enabled(bool on);
bool enabled();
Stats stats();

// Scoped measurement around one region, e.g. a ranking stage.
class Scope {
 public:
  Scope() {
    reset();
    set_enabled(true);
  }
  ~Scope() { set_enabled(false); }
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

  // Stops recording and returns what the scope saw.
  Stats finish() {
    set_enabled(false);
    return stats();
  }
};

}  // namespace vtr::alloc_probe
