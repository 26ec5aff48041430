#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spce {

/// Runs task(i) for i in [0, n_tasks) on up to `workers` threads and returns
/// the results in index order. Output never depends on the worker count as
/// long as task(i) only touches state it owns (typically its own RngStream).
template <class F>
auto parallel_map(std::size_t n_tasks, unsigned workers, F&& task) {
    using Result = decltype(task(std::size_t{0}));
    std::vector<Result> results(n_tasks);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_tasks)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) {
            results[i] = task(i);
        }
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n_tasks; i = next++) {
                try {
                    results[i] = task(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return results;
}

} // namespace spce
