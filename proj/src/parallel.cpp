#include "xray/parallel.hpp"

#include <atomic>

namespace xray {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() {
    int n = g_threads.load();
    if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return n;
}

void set_thread_count(int n) { g_threads.store(n); }

}  // namespace xray
