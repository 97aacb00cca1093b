#pragma once

#include "dig/bounded_queue.hpp"
#include "dig/transport/frame.hpp"
#include "dig/transport/topic.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace dig::transport {

struct BrokerLimits {
    std::size_t subscriber_queue_frames = 65536;
    std::size_t max_connections = 1024;
    double sys_interval_s = 1.0;   // cadence of "$sys/" introspection topics
};

// QoS-0 pub/sub broker over TCP. Routing is at-most-once: no retransmit, no
// persistence, and at most one copy per connection regardless of how many of
// its subscriptions match. Each subscriber connection has a bounded egress
// queue that drops oldest on overflow; drop counters surface under
// "$sys/broker/clients/<id>/dropped".
class Broker {
public:
    explicit Broker(BrokerLimits limits = {});
    ~Broker();

    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    // Binds and serves; port 0 picks a free one (see port()).
    void start(const std::string& host = "127.0.0.1", uint16_t port = 0);
    void stop();
    uint16_t port() const { return port_; }

    struct Stats {
        uint64_t published = 0;   // PUBLISH frames accepted
        uint64_t delivered = 0;   // frames enqueued to subscribers
        uint64_t dropped = 0;     // frames lost to subscriber backpressure
        uint64_t connections = 0; // currently open
    };
    Stats stats() const;

private:
    struct Connection;

    void accept_loop();
    void reader_loop(std::shared_ptr<Connection> conn);
    void writer_loop(std::shared_ptr<Connection> conn);
    void sys_loop();
    void route(const Frame& frame);
    void drop_connection(uint64_t id);

    BrokerLimits limits_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::thread sys_thread_;

    mutable std::shared_mutex conn_mu_;
    std::map<uint64_t, std::shared_ptr<Connection>> conns_;
    uint64_t next_conn_id_ = 1;

    std::atomic<uint64_t> published_{0};
    std::atomic<uint64_t> delivered_{0};
};

} // namespace dig::transport
