#include "regopt/threads.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cstdlib>
#include <thread>
#include <vector>

namespace regopt {

namespace {

int env_threads() {
  if (const char* s = std::getenv("REGOPT_THREADS")) {
    const int v = std::atoi(s);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_override{0};

}  // namespace

int max_threads() {
  const int o = g_override.load();
  return o > 0 ? o : env_threads();
}

void set_max_threads(int n) { g_override.store(n > 0 ? n : 0); }

void parallel_for_chunks(std::int64_t count, std::int64_t chunk,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (count <= 0) return;
  if (chunk < 1) chunk = 1;
  const std::int64_t nchunks = (count + chunk - 1) / chunk;
  const int workers = std::min<std::int64_t>(max_threads(), nchunks);
  if (workers <= 1) {
    for (std::int64_t c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(count, (c + 1) * chunk));
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (;;) {
          const std::int64_t c = next.fetch_add(1);
          if (c >= nchunks) return;
          fn(c * chunk, std::min(count, (c + 1) * chunk));
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(nchunks);  // stop handing out work
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace regopt
