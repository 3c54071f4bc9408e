// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Chat-completion backends: the interface the analysis stage talks to, a
// stub for offline runs, retry with exponential backoff, and a shared
// request-rate limiter.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "filmdiar/error.hpp"

namespace filmdiar {

inline const std::string kDefaultModel = "gpt-3.5-turbo-0125";
inline const std::string kDefaultCredentialVariable = "OPENAI_API_KEY";

struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
};

/// Connection reset, timeout, HTTP 429/5xx: worth retrying.
class TransientError : public Error {
 public:
  using Error::Error;
};

/// Missing or rejected credential. Never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Returns the assistant message text. Implementations must be callable
  /// from several threads at once.
  virtual std::string complete(const ChatRequest &request) = 0;

  /// Whether requests leave the process.
  virtual bool remote() const { return true; }
};

/// Canned answers; never touches the network.
class StubBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatRequest &)>;

  explicit StubBackend(std::string fixed_response)
      : responder_([r = std::move(fixed_response)](const ChatRequest &) {
          return r;
        }) {}
  explicit StubBackend(Responder responder) : responder_(std::move(responder)) {}

  std::string complete(const ChatRequest &request) override {
    ++calls_;
    return responder_(request);
  }
  bool remote() const override { return false; }

  std::size_t calls() const { return calls_.load(); }

 private:
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{1000};
  double backoff_factor = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

/// Calls fn, retrying TransientError with delays initial, initial*factor, ...
/// The last TransientError propagates once retries are exhausted.
template <typename Fn>
auto with_retries(const RetryPolicy &policy, Fn &&fn) -> decltype(fn()) {
  auto delay = policy.initial_delay;
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const TransientError &) {
      if (attempt >= policy.max_retries) throw;
    }
    if (policy.sleep) policy.sleep(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(
        static_cast<double>(delay.count()) * policy.backoff_factor));
  }
}

/// Caps in-flight requests and spaces request starts at least
/// 1/requests_per_second apart. A rate of 0 disables spacing.
class RateLimiter {
 public:
  RateLimiter(std::size_t max_concurrent, double requests_per_second)
      : max_concurrent_(max_concurrent ? max_concurrent : 1),
        interval_(requests_per_second > 0.0
                      ? std::chrono::duration_cast<Clock::duration>(
                            std::chrono::duration<double>(1.0 / requests_per_second))
                      : Clock::duration::zero()) {}

  class Permit {
   public:
    explicit Permit(RateLimiter *owner) : owner_(owner) {}
    Permit(const Permit &) = delete;
    Permit &operator=(const Permit &) = delete;
    ~Permit() { owner_->Release(); }

   private:
    RateLimiter *owner_;
  };

  /// Blocks until a slot is free and the spacing interval has elapsed.
  [[nodiscard]] Permit acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_concurrent_; });
    ++in_flight_;
    const auto now = Clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + interval_;
    lock.unlock();
    std::this_thread::sleep_until(start);
    return Permit(this);
  }

  std::size_t max_concurrent() const { return max_concurrent_; }

 private:
  using Clock = std::chrono::steady_clock;

  void Release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t max_concurrent_;
  Clock::duration interval_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  Clock::time_point next_start_{};
};

}  // namespace filmdiar
