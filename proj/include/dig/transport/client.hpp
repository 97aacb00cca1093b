#pragma once

#include "dig/transport/frame.hpp"
#include "dig/transport/topic.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace dig::transport {

struct ConnectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ClientOptions {
    std::string client_id = "client";
    bool auto_reconnect = false;
    double backoff_initial_s = 0.2;
    double backoff_max_s = 5.0;
    int io_timeout_ms = 5000;
};

// One-thread-at-a-time client handle. Publishes are fire-and-forget and
// buffered; the flusher thread keeps latency bounded without a syscall per
// message. Handlers run on the reader thread.
class Client {
public:
    using Handler =
        std::function<void(const std::string& topic, std::span<const uint8_t> payload)>;

    Client() = default;
    ~Client();

    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    void connect(const std::string& host, uint16_t port, ClientOptions opts = {});
    void close();
    bool connected() const { return connected_; }

    void publish(std::string_view topic, std::span<const uint8_t> payload);
    void publish_sample(std::string_view topic, uint64_t t_ns, double value);

    // Blocks until the broker acknowledges with SUBACK.
    void subscribe(const std::string& filter, Handler handler);

    void flush();

    uint64_t received_count() const { return received_; }

private:
    void reader_loop();
    void flusher_loop();
    void do_connect_socket();
    void reconnect_blocking();
    void send_bytes_locked(const std::vector<uint8_t>& bytes);

    std::string host_;
    uint16_t port_ = 0;
    ClientOptions opts_;

    int fd_ = -1;
    std::atomic<bool> connected_{false};
    std::atomic<bool> stopping_{false};

    std::mutex send_mu_;
    std::vector<uint8_t> out_buf_;

    std::mutex sub_mu_;
    std::vector<std::pair<TopicFilter, Handler>> handlers_;
    std::condition_variable suback_cv_;
    int pending_subacks_ = 0;

    std::thread reader_;
    std::thread flusher_;
    std::atomic<uint64_t> received_{0};
};

} // namespace dig::transport
