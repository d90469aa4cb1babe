#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cyclet {

// Worker count for data preparation: CYCLET_THREADS if set (>= 1), otherwise
// the hardware concurrency. Math kernels stay single-threaded; only
// embarrassingly parallel per-example work fans out.
inline int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("CYCLET_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : int(hc);
    }();
    return n;
}

// Runs fn(i) for i in [0, n). Results must be independent per index; the
// first exception thrown by any worker is rethrown on the calling thread.
template <class F>
void parallel_for(int n, F&& fn) {
    if (n <= 0) return;
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(std::size_t(workers - 1));
    for (int t = 1; t < workers; ++t) threads.emplace_back(body);
    body();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace cyclet
