#pragma once

// Minimal deterministic parallel map. Work is assigned by index so results do
// not depend on the schedule; nested calls degrade to serial execution.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hcp {

inline unsigned worker_count() {
    if (const char* env = std::getenv("HCP_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

namespace detail {
inline bool& in_parallel_region() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

// body(i) for i in [0, n); per-index work must be independent.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = worker_count();
    if (n == 0) return;
    if (workers <= 1 || n == 1 || detail::in_parallel_region()) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(workers, n);
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t begin = n * t / nthreads;
        const std::size_t end = n * (t + 1) / nthreads;
        threads.emplace_back([&, begin, end]() {
            detail::in_parallel_region() = true;
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
            detail::in_parallel_region() = false;
        });
    }
    for (std::thread& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Like parallel_for but gives each worker its own state object, built by
// `make_state()`; useful for reusable scratch (DP tables, walkers).
template <typename MakeState, typename Body>
void parallel_for_with(std::size_t n, MakeState&& make_state, Body&& body) {
    const unsigned workers = worker_count();
    if (n == 0) return;
    if (workers <= 1 || n == 1 || detail::in_parallel_region()) {
        auto state = make_state();
        for (std::size_t i = 0; i < n; ++i) body(state, i);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(workers, n);
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t begin = n * t / nthreads;
        const std::size_t end = n * (t + 1) / nthreads;
        threads.emplace_back([&, begin, end]() {
            detail::in_parallel_region() = true;
            try {
                auto state = make_state();
                for (std::size_t i = begin; i < end; ++i) body(state, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
            detail::in_parallel_region() = false;
        });
    }
    for (std::thread& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hcp
