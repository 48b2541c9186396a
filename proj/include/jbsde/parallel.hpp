#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace jbsde {

/// Fixed block size for cross-path reductions. Independent of worker count so
/// the combination order, and therefore every rounding, is reproducible.
inline constexpr std::size_t kReductionBlock = 256;

inline std::size_t block_count(std::size_t n, std::size_t block = kReductionBlock) {
    return (n + block - 1) / block;
}

/// Runs fn(block_index, begin, end) for every block of [0, n). Blocks are
/// handed out statically; fn must only write to slots owned by its block.
/// The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_blocks(std::size_t n, std::size_t workers, std::size_t block, Fn&& fn) {
    const std::size_t n_blocks = block_count(n, block);
    if (n_blocks == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n_blocks);
    auto run = [&](std::size_t w, std::exception_ptr& err) {
        try {
            for (std::size_t b = w; b < n_blocks; b += workers) {
                fn(b, b * block, std::min(n, (b + 1) * block));
            }
        } catch (...) {
            err = std::current_exception();
        }
    };
    std::vector<std::exception_ptr> errors(workers);
    if (workers == 1) {
        run(0, errors[0]);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, std::ref(errors[w]));
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Pairwise tree reduction of per-block partials in index order.
template <typename T, typename Add>
T tree_reduce(std::vector<T> parts, Add&& add) {
    while (parts.size() > 1) {
        std::vector<T> next;
        next.reserve((parts.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2) next.push_back(add(parts[i], parts[i + 1]));
        if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
        parts = std::move(next);
    }
    return std::move(parts.front());
}

}  // namespace jbsde
