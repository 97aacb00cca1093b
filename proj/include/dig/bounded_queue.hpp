#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>

namespace dig {

enum class OverflowPolicy { drop_oldest, drop_newest };

// Bounded MPSC/SPSC hand-off queue used between pipeline stages and for
// subscriber egress. Never blocks the producer: overflow drops per policy
// and counts.
template <class T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity,
                          OverflowPolicy policy = OverflowPolicy::drop_oldest)
        : cap_(capacity), policy_(policy) {}

    // Returns false if the item (or an older one) was dropped.
    bool push(T v) {
        bool dropped = false;
        {
            std::lock_guard lk(m_);
            if (stopped_) return false;
            if (q_.size() >= cap_) {
                dropped = true;
                ++drops_;
                if (policy_ == OverflowPolicy::drop_newest) {
                    return false;
                }
                q_.pop_front();
            }
            q_.push_back(std::move(v));
        }
        cv_.notify_one();
        return !dropped;
    }

    bool try_pop(T& out) {
        std::lock_guard lk(m_);
        if (q_.empty()) return false;
        out = std::move(q_.front());
        q_.pop_front();
        return true;
    }

    bool pop_wait(T& out, std::chrono::milliseconds timeout) {
        std::unique_lock lk(m_);
        cv_.wait_for(lk, timeout, [&] { return stopped_ || !q_.empty(); });
        if (q_.empty()) return false;
        out = std::move(q_.front());
        q_.pop_front();
        return true;
    }

    void stop() {
        {
            std::lock_guard lk(m_);
            stopped_ = true;
        }
        cv_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lk(m_);
        return q_.size();
    }

    uint64_t drop_count() const {
        std::lock_guard lk(m_);
        return drops_;
    }

    std::size_t capacity() const { return cap_; }

private:
    std::size_t cap_;
    OverflowPolicy policy_;
    mutable std::mutex m_;
    std::condition_variable cv_;
    std::deque<T> q_;
    uint64_t drops_ = 0;
    bool stopped_ = false;
};

} // namespace dig
