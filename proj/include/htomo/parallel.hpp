#pragma once

#include <cstddef>
#include <functional>

namespace htomo {

/// Worker count used by parallel_for; 1 (the default) runs inline.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls body(i) for i in [0, n) on statically partitioned chunks. Each index is
/// visited exactly once, so bodies writing only to slot i give results that do
/// not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace htomo
