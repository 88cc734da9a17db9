#pragma once

#include <atomic>
#include <cstddef>

namespace csvar::counters {

// Process-wide call counters; inference must leave both at zero.
std::atomic<std::size_t>& retrieval_calls();
std::atomic<std::size_t>& llm_calls();
void reset();

}  // namespace csvar::counters
