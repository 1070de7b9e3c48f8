#pragma once

#include <cstdlib>

namespace stshare {

// Element-level data parallelism is allowed inside one op as long as every
// output element is reduced sequentially by a single thread; results are then
// identical for any thread count. STSHARE_DETERMINISTIC=1 additionally forces
// the fully sequential path.
inline bool parallel_enabled() {
  static const bool enabled = [] {
    const char* v = std::getenv("STSHARE_DETERMINISTIC");
    return !(v && v[0] == '1');
  }();
  return enabled;
}

inline bool deterministic_mode() { return !parallel_enabled(); }

}  // namespace stshare
