#include "csvar/core/counters.hpp"

namespace csvar::counters {

std::atomic<std::size_t>& retrieval_calls() {
  static std::atomic<std::size_t> n{0};
  return n;
}

std::atomic<std::size_t>& llm_calls() {
  static std::atomic<std::size_t> n{0};
  return n;
}

void reset() {
  retrieval_calls() = 0;
  llm_calls() = 0;
}

}  // namespace csvar::counters
