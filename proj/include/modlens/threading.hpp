#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace modlens {

// Worker cap: MODLENS_THREADS when set, hardware concurrency otherwise.
inline int thread_budget() {
    if (const char* env = std::getenv("MODLENS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over disjoint contiguous slices of [0, total). Each
// output index is owned by exactly one worker, so results do not depend on
// the worker count.
template <typename Fn>
void parallel_chunks(int64_t total, int64_t min_chunk, Fn&& fn) {
    if (total <= 0) return;
    const int64_t budget = thread_budget();
    const int64_t workers =
        std::max<int64_t>(1, std::min(budget, total / std::max<int64_t>(1, min_chunk)));
    if (workers == 1) {
        fn(int64_t{0}, total);
        return;
    }
    const int64_t per = (total + workers - 1) / workers;
    std::vector<std::thread> pool;
    for (int64_t w = 1; w < workers; ++w) {
        const int64_t begin = w * per;
        const int64_t end = std::min(total, begin + per);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(int64_t{0}, std::min(total, per));
    for (auto& t : pool) t.join();
}

} // namespace modlens
