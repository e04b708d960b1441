#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace xray {

// Worker cap shared by all modules. 0 means hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Static contiguous chunking; every index is handled by exactly one worker
// and results are written to per-index slots, so output never depends on
// the number of threads.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
    std::size_t nt = static_cast<std::size_t>(thread_count());
    nt = std::min(nt, n);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace xray
