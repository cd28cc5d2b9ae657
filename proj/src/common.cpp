// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/common.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace jrl {

namespace {

std::atomic<int> g_max_threads{-1};
thread_local bool t_in_parallel = false;

int read_env_threads() {
  const char* e = std::getenv("JRL_THREADS");
  if (!e) return 1;
  int n = std::atoi(e);
  return n >= 1 ? n : 1;
}

}  // namespace

int max_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n < 0) {
    n = read_env_threads();
    g_max_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_max_threads(int n) { g_max_threads.store(n >= 1 ? n : 1, std::memory_order_relaxed); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  int workers = max_threads();
  if (workers <= 1 || t_in_parallel || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<int64_t>(workers) > n) workers = static_cast<int>(n);
  // Static partition: worker w handles [w*chunk, ...). The index->worker map
  // depends only on n and never on timing, so results are worker-count
  // independent for disjoint writes.
  int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    int64_t b = w * chunk;
    int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e]() {
      t_in_parallel = true;
      for (int64_t i = b; i < e; ++i) fn(i);
      t_in_parallel = false;
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace jrl
