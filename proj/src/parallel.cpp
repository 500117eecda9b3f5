#include "csnn/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace csnn {

namespace {

std::size_t read_env_cap() {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("CSNN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) hw = static_cast<std::size_t>(v);
  }
  return hw == 0 ? 1 : hw;
}

std::size_t g_cap = read_env_cap();

}  // namespace

std::size_t thread_cap() { return g_cap; }

void set_thread_cap(std::size_t n) { g_cap = n == 0 ? 1 : n; }

void parallel_chunks(std::size_t n, std::size_t grain,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn) {
  if (n == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t chunks = chunk_count(n, grain);
  const std::size_t workers = std::min(thread_cap(), chunks);

  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t b = c * grain;
      fn(b, std::min(b + grain, n), c);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      const std::size_t b = c * grain;
      fn(b, std::min(b + grain, n), c);
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace csnn
