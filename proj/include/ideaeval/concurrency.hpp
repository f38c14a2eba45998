#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ideaeval {

class Semaphore {
 public:
  explicit Semaphore(std::size_t permits) : permits_(permits) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return permits_ > 0; });
    --permits_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++permits_;
    }
    cv_.notify_one();
  }

  class Guard {
   public:
    explicit Guard(Semaphore& s) : s_(s) { s_.acquire(); }
    ~Guard() { s_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    Semaphore& s_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t permits_;
};

/// Token bucket; a rate of zero or less disables limiting.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(double tokens_per_second, double burst)
      : rate_(tokens_per_second), capacity_(burst < 1.0 ? 1.0 : burst), tokens_(capacity_), last_(Clock::now()) {}

  void acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      const auto now = Clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  std::mutex mu_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// Runs fn(0..n-1) on up to `workers` threads. Every index runs; afterwards the
/// exception from the lowest failing index, if any, is rethrown.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    std::exception_ptr first;
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= n) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min(workers, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ideaeval
