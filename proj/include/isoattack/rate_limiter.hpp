#pragma once

#include <chrono>
#include <deque>
#include <mutex>

namespace isoattack {

// Sliding-window limiter: at most `limit` grants inside any 60-second
// window. delay_for() is pure bookkeeping against a caller-supplied clock,
// which keeps the window property testable without sleeping.
class SlidingWindowLimiter {
public:
    using Clock = std::chrono::steady_clock;

    explicit SlidingWindowLimiter(int limit) : limit_(limit) {}

    // Returns how long a request arriving at `now` must wait, and records
    // the grant at `now + delay`.
    std::chrono::milliseconds delay_for(Clock::time_point now) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (limit_ <= 0) {
            return std::chrono::milliseconds(0);
        }
        auto window = std::chrono::seconds(60);
        while (!grants_.empty() && grants_.front() + window <= now) {
            grants_.pop_front();
        }
        Clock::time_point grant_at = now;
        if (static_cast<int>(grants_.size()) >= limit_) {
            grant_at = grants_[grants_.size() - limit_] + window;
        }
        grants_.push_back(grant_at);
        return std::chrono::duration_cast<std::chrono::milliseconds>(grant_at - now);
    }

private:
    int limit_;
    std::mutex mutex_;
    std::deque<Clock::time_point> grants_;
};

}  // namespace isoattack
