#pragma once
#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace intrin {

// Minimal fork-join pool. Work is split on a fixed chunk grid that depends
// only on (n, chunk), never on the worker count, and callers that reduce do so
// over per-chunk partials in index order — so results are bit-identical for
// any --threads value.
class ThreadPool {
public:
    explicit ThreadPool(int workers = 1) { resize(workers); }
    ~ThreadPool() { stop(); }

    void resize(int workers) {
        stop();
        if (workers < 1) workers = 1;
        n_workers_ = workers;
        done_ = false;
        for (int i = 0; i + 1 < workers; i++)
            threads_.emplace_back([this] { worker_loop(); });
    }

    int workers() const { return n_workers_; }

    // fn(chunk_index, begin, end); chunks are [k*chunk, min(n,(k+1)*chunk))
    void parallel_chunks(int64_t n, int64_t chunk, const std::function<void(int64_t, int64_t, int64_t)>& fn) {
        if (n <= 0) return;
        int64_t n_chunks = (n + chunk - 1) / chunk;
        if (n_workers_ == 1 || n_chunks == 1) {
            for (int64_t k = 0; k < n_chunks; k++)
                fn(k, k * chunk, std::min(n, (k + 1) * chunk));
            return;
        }
        std::atomic<int64_t> next{0};
        auto run = [&] {
            for (;;) {
                int64_t k = next.fetch_add(1);
                if (k >= n_chunks) break;
                fn(k, k * chunk, std::min(n, (k + 1) * chunk));
            }
        };
        dispatch(run);
    }

private:
    void dispatch(const std::function<void()>& run) {
        {
            std::unique_lock<std::mutex> lk(m_);
            task_ = &run;
            pending_ = (int)threads_.size();
            ++generation_;
        }
        cv_.notify_all();
        run(); // main thread participates
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        task_ = nullptr;
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void()>* task = nullptr;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return done_ || generation_ != seen; });
                if (done_) return;
                seen = generation_;
                task = task_;
            }
            if (task) (*task)();
            {
                std::unique_lock<std::mutex> lk(m_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void stop() {
        {
            std::unique_lock<std::mutex> lk(m_);
            done_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
        threads_.clear();
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    const std::function<void()>* task_ = nullptr;
    uint64_t generation_ = 0;
    int pending_ = 0;
    int n_workers_ = 1;
    bool done_ = false;
};

ThreadPool& global_pool(); // defined in kernels.cpp
void set_global_threads(int n);

} // namespace intrin
