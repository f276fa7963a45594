#pragma once

#include <atomic>
#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace maflow {

// Work is always split into fixed-size chunks and reduction partials are
// combined in chunk order, so results are bit-identical for any worker count.
inline constexpr std::size_t kChunkSize = 4096;

namespace detail {

// Persistent pool with static chunk assignment: worker w of K handles chunks
// c with c % K == w. Workers signal per-epoch completion, so a job can never
// observe a stale worker touching its state.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  void set_workers(unsigned k) {
    if (k == 0) k = 1;
    if (k == workers_) return;
    stop_workers();
    workers_ = k;
    start_workers();
  }

  unsigned workers() const { return workers_; }

  void run_chunks(std::size_t nchunks, const std::function<void(std::size_t)>& fn) {
    if (nchunks == 0) return;
    const unsigned k = workers_;
    if (k <= 1 || nchunks == 1) {
      for (std::size_t c = 0; c < nchunks; ++c) fn(c);
      return;
    }
    {
      std::lock_guard lk(mutex_);
      job_fn_ = &fn;
      job_total_ = nchunks;
      job_error_ = nullptr;
      ++epoch_;
    }
    cv_.notify_all();

    run_strided(fn, 0, k, nchunks);  // main thread is worker 0

    std::unique_lock lk(mutex_);
    done_cv_.wait(lk, [&] {
      for (unsigned w = 1; w < workers_; ++w)
        if (done_epoch_[w - 1] != epoch_) return false;
      return true;
    });
    job_fn_ = nullptr;
    if (job_error_) {
      auto err = job_error_;
      job_error_ = nullptr;
      std::rethrow_exception(err);
    }
  }

  ~ThreadPool() { stop_workers(); }

 private:
  ThreadPool() : workers_(1) {}

  void run_strided(const std::function<void(std::size_t)>& fn, unsigned w,
                   unsigned k, std::size_t total) {
    for (std::size_t c = w; c < total; c += k) {
      try {
        fn(c);
      } catch (...) {
        std::lock_guard lk(mutex_);
        if (!job_error_) job_error_ = std::current_exception();
      }
    }
  }

  void worker_loop(unsigned w) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* fn = nullptr;
      std::size_t total = 0;
      {
        std::unique_lock lk(mutex_);
        cv_.wait(lk, [&] { return shutdown_ || epoch_ != seen; });
        if (shutdown_) return;
        seen = epoch_;
        fn = job_fn_;
        total = job_total_;
      }
      if (fn) run_strided(*fn, w, workers_, total);
      {
        std::lock_guard lk(mutex_);
        done_epoch_[w - 1] = seen;
      }
      done_cv_.notify_all();
    }
  }

  void start_workers() {
    shutdown_ = false;
    done_epoch_.assign(workers_ > 1 ? workers_ - 1 : 0, epoch_);
    for (unsigned w = 1; w < workers_; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  void stop_workers() {
    {
      std::lock_guard lk(mutex_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  std::vector<std::uint64_t> done_epoch_;
  unsigned workers_ = 1;
  bool shutdown_ = false;

  const std::function<void(std::size_t)>* job_fn_ = nullptr;
  std::size_t job_total_ = 0;
  std::uint64_t epoch_ = 0;
  std::exception_ptr job_error_ = nullptr;
};

}  // namespace detail

inline void set_jobs(unsigned k) { detail::ThreadPool::instance().set_workers(k); }
inline unsigned jobs() { return detail::ThreadPool::instance().workers(); }

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  if (count == 0) return;
  const std::size_t nchunks = (count + kChunkSize - 1) / kChunkSize;
  std::function<void(std::size_t)> chunk_fn = [&](std::size_t c) {
    const std::size_t lo = c * kChunkSize;
    const std::size_t hi = std::min(lo + kChunkSize, count);
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  };
  detail::ThreadPool::instance().run_chunks(nchunks, chunk_fn);
}

// Chunked sum; partials combined in chunk order regardless of worker count.
template <class Fn>
double parallel_sum(std::size_t count, Fn&& term) {
  if (count == 0) return 0.0;
  const std::size_t nchunks = (count + kChunkSize - 1) / kChunkSize;
  std::vector<double> partial(nchunks, 0.0);
  std::function<void(std::size_t)> chunk_fn = [&](std::size_t c) {
    const std::size_t lo = c * kChunkSize;
    const std::size_t hi = std::min(lo + kChunkSize, count);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[c] = s;
  };
  detail::ThreadPool::instance().run_chunks(nchunks, chunk_fn);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace maflow
