#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mfc {

inline unsigned thread_count() {
  if (const char* env = std::getenv("MFC_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Deterministic partition of [begin, end): boundaries depend only on the
// range and worker count, never on scheduling.
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> chunk_bounds(
    std::uint64_t begin, std::uint64_t end, std::uint64_t min_grain = 256) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  const std::uint64_t total = end > begin ? end - begin : 0;
  if (total == 0) return out;
  unsigned workers = thread_count();
  std::uint64_t max_chunks =
      std::max<std::uint64_t>(1, total / std::max<std::uint64_t>(1, min_grain));
  unsigned chunks = static_cast<unsigned>(std::min<std::uint64_t>(workers, max_chunks));
  const std::uint64_t step = (total + chunks - 1) / chunks;
  for (unsigned c = 0; c < chunks; ++c) {
    std::uint64_t lo = begin + step * c;
    std::uint64_t hi = std::min(end, lo + step);
    if (lo >= hi) break;
    out.emplace_back(lo, hi);
  }
  return out;
}

// Runs body(lo, hi, chunk_index) on each chunk. Chunks are disjoint, so
// bodies that write disjoint ranges need no locks, and results merged in
// chunk-index order are identical for any thread count.
template <class Body>
void parallel_chunks(std::uint64_t begin, std::uint64_t end, Body&& body,
                     std::uint64_t min_grain = 256) {
  auto bounds = chunk_bounds(begin, end, min_grain);
  if (bounds.empty()) return;
  if (bounds.size() == 1) {
    body(bounds[0].first, bounds[0].second, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(bounds.size());
  for (std::size_t c = 0; c < bounds.size(); ++c)
    pool.emplace_back([c, &bounds, &body] { body(bounds[c].first, bounds[c].second, c); });
  for (auto& t : pool) t.join();
}

}  // namespace mfc
