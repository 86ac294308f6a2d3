#ifndef ECGFUSE_PARALLEL_HPP
#define ECGFUSE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ecgfuse {

namespace detail {
inline std::atomic<unsigned>& max_jobs_slot() {
    static std::atomic<unsigned> jobs{std::max(1u, std::thread::hardware_concurrency())};
    return jobs;
}
}  // namespace detail

/// Upper bound on worker threads used by parallel_for. 0 restores the default.
inline void set_max_jobs(unsigned jobs) {
    detail::max_jobs_slot() = jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : jobs;
}
inline unsigned max_jobs() { return detail::max_jobs_slot(); }

/// Runs fn(i) for i in [0, count). Each index is handled exactly once and
/// writes only its own output slot, so results do not depend on scheduling.
/// The first exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(max_jobs(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace ecgfuse

#endif
