#pragma once

// Replication loops split into a fixed number of blocks. Each block is a pure
// function of its replication range; partial results are returned in block
// order, so reductions do not depend on the thread count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cirmil {

/// Environment variable holding the default worker count.
inline constexpr const char* kThreadsEnv = "CIRMIL_THREADS";

inline unsigned default_thread_count()
{
    if (const char* env = std::getenv(kThreadsEnv)) {
        try {
            const int n = std::stoi(env);
            if (n > 0)
                return static_cast<unsigned>(n);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct Executor {
    unsigned threads = default_thread_count();
};

struct BlockRange {
    std::size_t first;
    std::size_t last;
};

inline constexpr std::size_t kMaxBlocks = 64;

inline std::vector<BlockRange> partition_replications(std::size_t replications)
{
    const std::size_t blocks = std::min(replications, kMaxBlocks);
    std::vector<BlockRange> out;
    out.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b)
        out.push_back({replications * b / blocks, replications * (b + 1) / blocks});
    return out;
}

/// Evaluates fn(BlockRange) for every block and returns the results in block order.
template <class Partial, class Fn>
std::vector<Partial> map_blocks(std::size_t replications, Fn&& fn, const Executor& exec = {})
{
    const std::vector<BlockRange> blocks = partition_replications(replications);
    std::vector<Partial> results(blocks.size());
    const unsigned workers = std::max(1u, std::min<unsigned>(exec.threads, static_cast<unsigned>(blocks.size())));
    if (workers == 1) {
        for (std::size_t b = 0; b < blocks.size(); ++b)
            results[b] = fn(blocks[b]);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t b = next++; b < blocks.size(); b = next++) {
                    try {
                        results[b] = fn(blocks[b]);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return results;
}

} // namespace cirmil
