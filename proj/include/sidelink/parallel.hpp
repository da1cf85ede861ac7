// SPDX-License-Identifier: Apache-2.0
//
// sidelink: multi-RIS 3D sidelink positioning toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef SIDELINK_PARALLEL_HPP
#define SIDELINK_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sidelink
{
    // Runs f(i) for i in [0, n) on `workers` threads. Each index writes its own
    // output slot, so results do not depend on scheduling. The first exception
    // is rethrown after all threads join.
    template <typename F>
    void parallel_for(int n, int workers, F &&f)
    {
        workers = std::max(1, std::min(workers, n));
        if (workers == 1)
        {
            for (int i = 0; i < n; ++i)
                f(i);
            return;
        }
        std::atomic<int> next{0};
        std::exception_ptr err;
        std::mutex mu;
        auto body = [&]
        {
            for (int i = next++; i < n; i = next++)
            {
                try
                {
                    f(i);
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err)
                        err = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(body);
        for (auto &t : pool)
            t.join();
        if (err)
            std::rethrow_exception(err);
    }
}

#endif
