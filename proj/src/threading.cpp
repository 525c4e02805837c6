#include "lavender/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lavender {

size_t worker_count() {
  size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LAVENDER_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<size_t>(cap));
  }
  return n;
}

void parallel_for(size_t n, const std::function<void(size_t)>& body) {
  if (n == 0) return;
  const size_t workers = std::min(worker_count(), n);
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run_block = [&](size_t w) {
    const size_t lo = n * w / workers;
    const size_t hi = n * (w + 1) / workers;
    try {
      for (size_t i = lo; i < hi; ++i) body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (size_t w = 1; w < workers; ++w) threads.emplace_back(run_block, w);
  run_block(0);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lavender
