#include "cellscan/thread_pool.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cellscan {
namespace {

std::atomic<std::size_t> g_thread_cap{0};

// Set while a thread is executing pool work; nested parallel_for calls run
// inline instead of re-entering the pool.
thread_local bool t_in_pool = false;

std::size_t effective_threads() {
    std::size_t cap = g_thread_cap.load(std::memory_order_relaxed);
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return cap == 0 ? hw : std::min(cap, std::size_t{64});
}

// Lazily started persistent pool. Each job is a static partition of [0, n)
// into one slice per participating thread; the submitting thread runs slice
// 0 itself and waits for the rest.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
             std::size_t workers) {
        std::vector<std::pair<std::size_t, std::size_t>> slices;
        std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t b = 0; b < n; b += chunk)
            slices.emplace_back(b, std::min(n, b + chunk));

        if (slices.size() == 1) {
            t_in_pool = true;
            fn(0, n);
            t_in_pool = false;
            return;
        }

        ensure_workers(slices.size() - 1);
        {
            std::unique_lock lock(mutex_);
            job_ = &fn;
            slices_ = std::move(slices);
            next_slice_ = 1;
            pending_ = slices_.size() - 1;
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();

        t_in_pool = true;
        std::exception_ptr local_error;
        try {
            fn(slices_[0].first, slices_[0].second);
        } catch (...) {
            local_error = std::current_exception();
        }
        t_in_pool = false;

        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
        if (!local_error) local_error = error_;
        error_ = nullptr;
        if (local_error) {
            lock.unlock();
            std::rethrow_exception(local_error);
        }
    }

private:
    Pool() = default;
    ~Pool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void ensure_workers(std::size_t count) {
        std::unique_lock lock(mutex_);
        while (threads_.size() < count)
            threads_.emplace_back([this] { worker_loop(); });
    }

    void worker_loop() {
        t_in_pool = true;
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stop_ || (job_ && generation_ != seen); });
            if (stop_) return;
            seen = generation_;
            while (next_slice_ < slices_.size()) {
                auto slice = slices_[next_slice_++];
                const auto* job = job_;
                lock.unlock();
                std::exception_ptr err;
                try {
                    (*job)(slice.first, slice.second);
                } catch (...) {
                    err = std::current_exception();
                }
                lock.lock();
                if (err && !error_) error_ = err;
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> threads_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::vector<std::pair<std::size_t, std::size_t>> slices_;
    std::size_t next_slice_ = 0;
    std::size_t pending_ = 0;
    std::uint64_t generation_ = 0;
    std::exception_ptr error_ = nullptr;
    bool stop_ = false;
};

} // namespace

void set_thread_count(std::size_t n) { g_thread_cap.store(n, std::memory_order_relaxed); }

std::size_t thread_count() { return effective_threads(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (t_in_pool) {
        fn(0, n);
        return;
    }
    std::size_t workers = std::min(effective_threads(), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    Pool::instance().run(n, fn, workers);
}

} // namespace cellscan
