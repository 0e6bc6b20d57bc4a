#include "lptm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace lptm {

namespace {
int g_threads = int(std::thread::hardware_concurrency() ? std::thread::hardware_concurrency() : 1);
}

void set_thread_count(int n) { g_threads = n < 1 ? 1 : n; }
int thread_count() { return g_threads; }

int chunk_count(int n, int grain) {
    if (n <= 0) return 0;
    if (grain < 1) grain = 1;
    return (n + grain - 1) / grain;
}

void parallel_chunks(int n, int grain,
                     const std::function<void(int, int, int)>& fn) {
    const int chunks = chunk_count(n, grain);
    if (chunks == 0) return;
    if (chunks == 1 || g_threads == 1) {
        for (int c = 0; c < chunks; ++c) {
            const int begin = c * grain;
            const int end = std::min(n, begin + grain);
            fn(c, begin, end);
        }
        return;
    }

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= chunks) return;
            const int begin = c * grain;
            const int end = std::min(n, begin + grain);
            fn(c, begin, end);
        }
    };

    const int extra = std::min(g_threads, chunks) - 1;
    std::vector<std::thread> pool;
    pool.reserve(extra);
    for (int t = 0; t < extra; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

void parallel_for(int n, int grain, const std::function<void(int, int)>& fn) {
    parallel_chunks(n, grain, [&](int, int begin, int end) { fn(begin, end); });
}

} // namespace lptm
