#ifndef COPRIMARY_PARALLEL_HPP
#define COPRIMARY_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace coprimary
{

/// Runs body(i) for i in [0, count) on up to `workers` threads.
/// Results must be written by index so output is independent of scheduling.
/// The first exception thrown by any task is rethrown on the caller's thread.
template <typename Body>
void parallel_for(std::size_t count, std::size_t workers, Body&& body)
{
    if (workers <= 1 || count <= 1)
    {
        for (std::size_t i = 0; i < count; ++i)
        {
            body(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;)
        {
            const std::size_t i = next.fetch_add(1);
            if (i >= count)
            {
                return;
            }
            try
            {
                body(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                {
                    failure = std::current_exception();
                }
                next.store(count);
            }
        }
    };

    std::vector<std::thread> threads;
    const std::size_t n = std::min(workers, count);
    threads.reserve(n);
    for (std::size_t t = 0; t < n; ++t)
    {
        threads.emplace_back(worker);
    }
    for (auto& t : threads)
    {
        t.join();
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }
}

} // namespace coprimary

#endif // COPRIMARY_PARALLEL_HPP
