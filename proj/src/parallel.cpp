#include "pinlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pinlab {

namespace {
std::atomic<unsigned> g_jobs{1};
}

void set_worker_count(unsigned jobs) { g_jobs = std::max(1u, jobs); }

unsigned worker_count() { return g_jobs.load(); }

void parallel_batches(std::size_t batches, const std::function<void(std::size_t)>& body) {
  const unsigned jobs = static_cast<unsigned>(std::min<std::size_t>(worker_count(), batches));
  if (jobs <= 1) {
    for (std::size_t b = 0; b < batches; ++b) body(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < batches; b = next++) {
        try {
          body(b);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace pinlab
