#pragma once

// Index-parallel map over a fixed worker count. Results are stored by index,
// so the output does not depend on scheduling or on the number of workers.

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace activereg {

inline unsigned default_workers() {
    const unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1u : h;
}

/// out[i] = fn(i) for i < count. The exception of the lowest failing index is
/// rethrown after all workers have stopped.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, unsigned workers, F&& fn) {
    std::vector<T> out(count);
    std::vector<std::exception_ptr> errors(count);
    if (workers == 0) workers = default_workers();
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));

    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace activereg
