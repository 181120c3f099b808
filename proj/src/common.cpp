#include "gridsense/common.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>

#include <omp.h>

namespace gridsense {

namespace {

std::atomic<int> g_workers{0};

int default_workers() {
  if (const char* env = std::getenv("GRIDSENSE_WORKERS"); env && *env) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return omp_get_num_procs();
}

}  // namespace

int worker_count() {
  const int w = g_workers.load(std::memory_order_relaxed);
  return w > 0 ? w : default_workers();
}

void set_worker_count(int workers) { g_workers.store(workers > 0 ? workers : 0); }

std::string fmt_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace gridsense
