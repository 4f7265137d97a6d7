#pragma once

#include <thread>
#include <vector>

namespace nbm {

// Static block partition so results land in caller-indexed slots and runs
// are deterministic regardless of scheduling.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  threads = std::min(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int th = 0; th < threads; ++th) {
    pool.emplace_back([=] {
      for (int i = th; i < count; i += threads) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace nbm
