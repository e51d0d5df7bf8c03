#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace surgeon {

// Upper bound on worker threads, taken from SSM_SURGEON_THREADS when set.
inline int thread_cap() {
    static const int cap = [] {
        if (const char* env = std::getenv("SSM_SURGEON_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) {
                return v;
            }
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }();
    return cap;
}

// Runs fn(i) for i in [0, n). fn must write only to slots it owns, so the
// result is identical for any thread count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_cap(), n));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::int64_t i = w; i < n; i += workers) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace surgeon
