// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file parallel.hpp
 * @brief Minimal fixed-size thread pool with static work partitioning.
 *
 * Work items are contiguous index ranges; a loop over n items is split into
 * exactly worker_count() chunks. Results that require reduction are merged by
 * the caller in chunk order, so a run with a fixed worker count is
 * deterministic, and worker_count() == 1 reproduces the plain sequential
 * loop bit-for-bit. The CHANNELKIT_THREADS environment variable caps the
 * worker count.
 */

#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace channelkit {

class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int workers() const { return workers_; }

    /// Overrides the worker count (1 = sequential). Used by the CLI and tests.
    void set_workers(int n) {
        if (n < 1) throw std::invalid_argument("ThreadPool: worker count must be >= 1");
        std::lock_guard<std::mutex> lk(submit_mutex_);
        workers_ = n;
    }

    /// Runs fn(begin, end, chunk) over [0, n) split into workers() chunks.
    /// fn must not touch state shared across chunks except through the
    /// per-chunk slots the caller merges afterwards.
    void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn) {
        if (n <= 0) return;
        int chunks = workers_;
        if (chunks > n) chunks = static_cast<int>(n);
        if (chunks == 1) {
            fn(0, n, 0);
            return;
        }
        std::lock_guard<std::mutex> lk(submit_mutex_);
        const int64_t base = n / chunks, rem = n % chunks;
        std::vector<std::thread> ts;
        ts.reserve(chunks - 1);
        int64_t begin = 0;
        for (int c = 0; c < chunks; ++c) {
            int64_t len = base + (c < rem ? 1 : 0);
            int64_t end = begin + len;
            if (c == chunks - 1) {
                fn(begin, end, c);
            } else {
                ts.emplace_back([&fn, begin, end, c] { fn(begin, end, c); });
            }
            begin = end;
        }
        for (auto& t : ts) t.join();
    }

private:
    ThreadPool() {
        unsigned hw = std::thread::hardware_concurrency();
        int n = hw ? static_cast<int>(hw) : 1;
        if (const char* env = std::getenv("CHANNELKIT_THREADS")) {
            char* tail = nullptr;
            long v = std::strtol(env, &tail, 10);
            if (tail && *tail == '\0' && v >= 1 && v <= 256) n = static_cast<int>(v);
        }
        workers_ = n;
    }

    int workers_ = 1;
    std::mutex submit_mutex_;
};

inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace channelkit
