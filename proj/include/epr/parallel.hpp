#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace epr {

/*!
 * Runs fn(task) for task in [0, n_tasks) on up to `workers` threads.
 *
 * Tasks are independent; callers write results into per-task slots and reduce
 * them afterwards in task order, so output never depends on the worker count.
 * If tasks throw, the exception of the lowest-numbered failing task is rethrown.
 */
template <typename Fn>
void parallel_for(std::size_t n_tasks, unsigned workers, Fn&& fn) {
    if (n_tasks == 0) return;
    workers = std::max(1u, workers);
    if (workers == 1 || n_tasks == 1) {
        for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
        return;
    }
    std::vector<std::exception_ptr> errors(n_tasks);
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t t = next.fetch_add(1); t < n_tasks; t = next.fetch_add(1)) {
            try {
                fn(t);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(workers, n_tasks);
    std::vector<std::jthread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(body);
    body();
    pool.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

} // namespace epr
