#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

namespace coed {

// Resolve an effective worker count: explicit request, else hardware.
inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Run fn(begin, end) over contiguous chunks of [0, n) on `threads` workers.
// Chunking is by index range, so any per-chunk results are schedule-independent.
inline void parallel_chunks(std::size_t n, int threads,
                            const std::function<void(std::size_t, std::size_t, int)>& fn) {
  int t = effective_threads(threads);
  if (n == 0) return;
  if (t <= 1 || n < 2048) {
    fn(0, n, 0);
    return;
  }
  std::size_t nchunks = static_cast<std::size_t>(t);
  std::size_t chunk = (n + nchunks - 1) / nchunks;
  std::vector<std::thread> pool;
  pool.reserve(nchunks);
  for (std::size_t c = 0; c < nchunks; ++c) {
    std::size_t b = c * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, c] { fn(b, e, static_cast<int>(c)); });
  }
  for (auto& th : pool) th.join();
}

// Deterministic parallel argmin of value(i) over [0, n). Ties break to the
// lowest index regardless of thread count or schedule: each chunk scans
// ascending with strict '<', and the chunk merge compares (value, index).
struct ArgMin {
  std::size_t index = std::numeric_limits<std::size_t>::max();
  double value = std::numeric_limits<double>::infinity();
};

inline ArgMin parallel_argmin(std::size_t n, int threads,
                              const std::function<double(std::size_t)>& value) {
  int t = effective_threads(threads);
  std::size_t nchunks = (t <= 1 || n < 2048) ? 1 : static_cast<std::size_t>(t);
  std::vector<ArgMin> local(nchunks);
  parallel_chunks(n, static_cast<int>(nchunks),
                  [&](std::size_t b, std::size_t e, int who) {
                    ArgMin best;
                    for (std::size_t i = b; i < e; ++i) {
                      double v = value(i);
                      if (v < best.value) {
                        best.value = v;
                        best.index = i;
                      }
                    }
                    local[static_cast<std::size_t>(who)] = best;
                  });
  ArgMin best;
  for (const ArgMin& cand : local) {
    if (cand.index == std::numeric_limits<std::size_t>::max()) continue;
    if (cand.value < best.value ||
        (cand.value == best.value && cand.index < best.index)) {
      best = cand;
    }
  }
  return best;
}

}  // namespace coed
