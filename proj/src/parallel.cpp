#include "gauss_bubbles/parallel.hpp"

#include <cstdlib>
#include <string>

namespace gb {
namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("GAUSS_BUBBLES_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> setting{initial_thread_count()};
  return setting;
}

}  // namespace

int thread_count() { return thread_setting().load(); }

void set_thread_count(int threads) { thread_setting() = threads > 0 ? threads : 1; }

namespace detail {
bool& inside_parallel_region() {
  thread_local bool inside = false;
  return inside;
}
}  // namespace detail

}  // namespace gb
