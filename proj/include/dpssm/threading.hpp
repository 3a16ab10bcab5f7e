#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace dpssm {

// Static partition of [0, count) across `workers` threads. Each chunk is
// disjoint, so callers get deterministic results regardless of scheduling.
inline void parallel_for_chunks(std::size_t count, int workers,
                                const std::function<void(std::size_t, std::size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        fn(0, count);
        return;
    }
    std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    std::size_t chunk = (count + n_workers - 1) / n_workers;
    std::vector<std::thread> threads;
    threads.reserve(n_workers - 1);
    for (std::size_t w = 1; w < n_workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(0, std::min(count, chunk));
    for (auto& t : threads) t.join();
}

// Worker count default: DPSSM_THREADS env var, else 1.
inline int default_workers() {
    if (const char* env = std::getenv("DPSSM_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

}  // namespace dpssm
