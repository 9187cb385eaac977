// parallel.hpp — deterministic block-parallel loops. Work is cut into
// fixed-size blocks independent of the worker count; reductions happen in
// block order, so results are bit-identical for any number of threads.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace relmesh::detail {

inline int &max_threads_slot() {
    static int n = 1;
    return n;
}

inline void set_max_threads(int n) { max_threads_slot() = std::max(1, n); }
inline int max_threads() { return max_threads_slot(); }

inline constexpr std::size_t kParallelBlock = 512;

// body(begin, end) runs over half-open sub-ranges; blocks never overlap.
template <typename Body>
void parallel_blocks(std::size_t count, Body &&body) {
    if (count == 0) return;
    const std::size_t blocks = (count + kParallelBlock - 1) / kParallelBlock;
    const int workers = std::min<std::size_t>(max_threads(), blocks);
    if (workers <= 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            const std::size_t lo = b * kParallelBlock;
            const std::size_t hi = std::min(lo + kParallelBlock, count);
            body(lo, hi);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
    for (auto &th : pool) th.join();
}

} // namespace relmesh::detail
