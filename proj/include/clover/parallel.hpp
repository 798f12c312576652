#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace clover {

/// CLOVER_THREADS if set and positive, otherwise 0.
inline unsigned env_thread_cap() {
    if (const char* env = std::getenv("CLOVER_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return 0;
}

/// Worker count: CLOVER_THREADS if set and positive, otherwise hardware concurrency.
inline unsigned default_threads() {
    if (const unsigned cap = env_thread_cap()) return cap;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// An explicit request (0 = default), capped by CLOVER_THREADS.
inline unsigned resolve_threads(unsigned requested) {
    if (requested == 0) return default_threads();
    const unsigned cap = env_thread_cap();
    return cap ? std::min(requested, cap) : requested;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be written
/// to per-index slots; the first exception thrown by any task is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace clover
