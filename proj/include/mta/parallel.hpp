#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mta {

/// Worker count: `requested` if positive, else the MTA_THREADS environment
/// variable, else hardware concurrency.
inline int worker_count(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MTA_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Run fn(i) for i in [0, count). Each task must write only its own output
/// slot; results are then identical for any worker count. The first
/// exception thrown by a task is rethrown after all workers join.
template <typename F>
inline void parallel_for(std::size_t count, F&& fn, int threads = 0) {
    const int workers = std::min<std::size_t>(worker_count(threads), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mta
