#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gcv {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using Shape = std::vector<i64>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline i64 numel_of(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

template <typename... Args>
[[noreturn]] inline void fail_shape(Args&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw ShapeError(os.str());
}

inline void check(bool ok, const char* msg) {
    if (!ok) throw Error(msg);
}

// Fixed-partition worker pool. Chunks are assigned by index range, so results
// do not depend on which thread runs which chunk or on the thread count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    void set_threads(int n) {
        std::lock_guard<std::mutex> api(api_mu_);
        if (n < 1) n = 1;
        stop_workers();
        threads_ = n;
        start_workers();
    }

    int threads() const { return threads_; }

    // The body must not throw. Chunk boundaries depend only on the configured
    // thread count, never on scheduling, and a nested call from inside a chunk
    // runs inline, so a computation is deterministic for a fixed reduction
    // order within each output element.
    void parallel_for(i64 n, const std::function<void(i64, i64)>& body) {
        if (n <= 0) return;
        if (inside_parallel()) {  // nested calls run inline
            body(0, n);
            return;
        }
        int nt = threads_;
        if (nt <= 1 || n < 2 * nt) {  // not worth distributing; leave the pool
            body(0, n);               // free so nested calls may still use it
            return;
        }
        std::lock_guard<std::mutex> api(api_mu_);
        nt = threads_;
        const i64 chunk = (n + nt - 1) / nt;
        {
            std::unique_lock<std::mutex> lk(mu_);
            body_ = &body;
            pending_ = 0;
            for (int t = 1; t < nt; ++t) {
                i64 b = t * chunk, e = std::min<i64>(n, b + chunk);
                if (b >= e) break;
                tasks_.push_back({b, e});
                ++pending_;
            }
            cv_.notify_all();
        }
        inside_parallel() = true;  // this thread takes the first chunk
        body(0, std::min<i64>(n, chunk));
        inside_parallel() = false;
        {
            std::unique_lock<std::mutex> lk(mu_);
            done_cv_.wait(lk, [&] { return pending_ == 0 && tasks_.empty(); });
            body_ = nullptr;
        }
    }

private:
    ThreadPool() {
        threads_ = static_cast<int>(std::thread::hardware_concurrency());
        if (threads_ < 1) threads_ = 1;
        start_workers();
    }
    ~ThreadPool() { stop_workers(); }

    void start_workers() {
        stop_ = false;
        for (int t = 1; t < threads_; ++t)
            workers_.emplace_back([this] { worker(); });
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
            cv_.notify_all();
        }
        for (auto& w : workers_) w.join();
        workers_.clear();
    }

    static bool& inside_parallel() {
        thread_local bool flag = false;
        return flag;
    }

    void worker() {
        inside_parallel() = true;
        for (;;) {
            std::pair<i64, i64> range;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || !tasks_.empty(); });
                if (stop_) return;
                range = tasks_.back();
                tasks_.pop_back();
            }
            (*body_)(range.first, range.second);
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (--pending_ == 0 && tasks_.empty()) done_cv_.notify_all();
            }
        }
    }

    std::mutex api_mu_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    std::vector<std::pair<i64, i64>> tasks_;
    const std::function<void(i64, i64)>* body_ = nullptr;
    int pending_ = 0;
    int threads_ = 1;
    bool stop_ = false;
};

inline void set_num_threads(int n) { ThreadPool::instance().set_threads(n); }
inline int num_threads() { return ThreadPool::instance().threads(); }

inline void parallel_for(i64 n, const std::function<void(i64, i64)>& body) {
    ThreadPool::instance().parallel_for(n, body);
}

}  // namespace gcv
