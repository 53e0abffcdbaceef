#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace feddkd {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Results land in
/// caller-owned slots indexed by i, so the outcome is identical for any worker
/// count or scheduling. The first exception, if any, is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (count == 0) return;
    const std::size_t n_threads =
        std::min<std::size_t>(count, static_cast<std::size_t>(workers < 1 ? 1 : workers));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
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
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failed.load() && error) std::rethrow_exception(error);
}

}  // namespace feddkd
