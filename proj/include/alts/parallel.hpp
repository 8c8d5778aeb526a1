// Deterministic data parallelism: each index writes its own output slot, so
// results are identical for any thread count (including 1).
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace alts {

inline unsigned effective_threads(unsigned requested) {
    if (requested != 0) {
        return requested;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Calls fn(i) for i in [0, n). fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (n == 0) {
        return;
    }
    const auto workers = static_cast<unsigned>(
        std::min<std::size_t>(effective_threads(threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    const std::size_t chunk = std::max<std::size_t>(1, n / (workers * 8));
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto body = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t begin = cursor.fetch_add(chunk);
            if (begin >= n) {
                return;
            }
            const std::size_t end = std::min(begin + chunk, n);
            try {
                for (std::size_t i = begin; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back(body);
    }
    for (auto& th : pool) {
        th.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace alts
