#include "dig/transport/broker.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <stdexcept>

namespace dig::transport {

using FramePtr = std::shared_ptr<const std::vector<uint8_t>>;

struct Broker::Connection {
    explicit Connection(std::size_t queue_cap)
        : egress(queue_cap, OverflowPolicy::drop_oldest) {}

    uint64_t id = 0;
    int fd = -1;
    std::string client_id;
    std::vector<TopicFilter> subscriptions;
    std::mutex sub_mu;
    BoundedQueue<FramePtr> egress;
    std::thread reader;
    std::thread writer;
    std::atomic<bool> open{true};
};

Broker::Broker(BrokerLimits limits) : limits_(limits) {}

Broker::~Broker() { stop(); }

void Broker::start(const std::string& host, uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("broker: socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("broker: bad listen address " + host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("broker: cannot bind " + host + ":" +
                                 std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::listen(listen_fd_, 128) != 0)
        throw std::runtime_error("broker: listen() failed");
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    sys_thread_ = std::thread([this] { sys_loop(); });
}

void Broker::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (accept_thread_.joinable()) accept_thread_.join();
    if (sys_thread_.joinable()) sys_thread_.join();

    std::vector<std::shared_ptr<Connection>> doomed;
    {
        std::unique_lock lk(conn_mu_);
        for (auto& [id, c] : conns_) doomed.push_back(c);
        conns_.clear();
    }
    for (auto& c : doomed) {
        c->open = false;
        ::shutdown(c->fd, SHUT_RDWR);
        c->egress.stop();
        if (c->reader.joinable()) c->reader.join();
        if (c->writer.joinable()) c->writer.join();
        ::close(c->fd);
    }
}

Broker::Stats Broker::stats() const {
    Stats s;
    s.published = published_.load();
    s.delivered = delivered_.load();
    std::shared_lock lk(conn_mu_);
    s.connections = conns_.size();
    for (const auto& [id, c] : conns_) s.dropped += c->egress.drop_count();
    return s;
}

void Broker::accept_loop() {
    while (running_) {
        sockaddr_in peer{};
        socklen_t len = sizeof peer;
        int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
        if (fd < 0) {
            if (!running_) break;
            continue;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

        auto conn = std::make_shared<Connection>(limits_.subscriber_queue_frames);
        conn->fd = fd;
        {
            std::unique_lock lk(conn_mu_);
            if (conns_.size() >= limits_.max_connections) {
                ::close(fd);
                continue;
            }
            conn->id = next_conn_id_++;
            conn->client_id = "conn" + std::to_string(conn->id);
            conns_[conn->id] = conn;
        }
        conn->reader = std::thread([this, conn] { reader_loop(conn); });
        conn->writer = std::thread([this, conn] { writer_loop(conn); });
    }
}

void Broker::drop_connection(uint64_t id) {
    std::shared_ptr<Connection> c;
    {
        std::unique_lock lk(conn_mu_);
        auto it = conns_.find(id);
        if (it == conns_.end()) return;
        c = it->second;
        conns_.erase(it);
    }
    c->open = false;
    ::shutdown(c->fd, SHUT_RDWR);
    c->egress.stop();
    // reader/writer threads are detached from our perspective: whichever
    // thread calls this is one of them, so joining here would deadlock.
    c->reader.detach();
    c->writer.detach();
}

void Broker::route(const Frame& frame) {
    published_.fetch_add(1, std::memory_order_relaxed);
    auto bytes = std::make_shared<const std::vector<uint8_t>>(encode_frame(frame));
    std::shared_lock lk(conn_mu_);
    for (auto& [id, c] : conns_) {
        bool matched = false;
        {
            std::lock_guard sub_lk(c->sub_mu);
            for (const auto& filter : c->subscriptions)
                if (filter.matches(frame.topic)) {
                    matched = true;
                    break;
                }
        }
        if (!matched) continue;
        // at most one copy per connection; the client fans out to every
        // matching handler locally, so overlapping subscriptions do not
        // multiply traffic on the wire
        if (c->egress.push(bytes))
            delivered_.fetch_add(1, std::memory_order_relaxed);
    }
}

void Broker::reader_loop(std::shared_ptr<Connection> conn) {
    std::vector<uint8_t> buf;
    uint8_t chunk[65536];
    while (conn->open) {
        ssize_t n = ::recv(conn->fd, chunk, sizeof chunk, 0);
        if (n <= 0) break;
        buf.insert(buf.end(), chunk, chunk + n);
        std::size_t off = 0;
        bool fatal = false;
        while (off < buf.size()) {
            auto r = decode_frame(std::span(buf).subspan(off));
            if (r.status == DecodeResult::Status::need_more) break;
            if (r.status == DecodeResult::Status::error) {
                fatal = true;   // protocol errors are connection-fatal
                break;
            }
            off += r.consumed;
            switch (r.frame.type) {
            case FrameType::CONNECT:
                if (!r.frame.payload.empty())
                    conn->client_id.assign(r.frame.payload.begin(),
                                           r.frame.payload.end());
                conn->egress.push(std::make_shared<const std::vector<uint8_t>>(
                    encode_frame({FrameType::CONNACK, 0, "", {0}})));
                break;
            case FrameType::SUBSCRIBE: {
                {
                    std::lock_guard lk(conn->sub_mu);
                    conn->subscriptions.emplace_back(r.frame.topic);
                }
                conn->egress.push(std::make_shared<const std::vector<uint8_t>>(
                    encode_frame({FrameType::SUBACK, 0, "", {0}})));
                break;
            }
            case FrameType::PUBLISH:
                route(r.frame);
                break;
            case FrameType::PING:
                conn->egress.push(std::make_shared<const std::vector<uint8_t>>(
                    encode_frame({FrameType::PONG, 0, "", {}})));
                break;
            case FrameType::DISCONNECT:
                fatal = true;
                break;
            default:
                break;
            }
            if (fatal) break;
        }
        buf.erase(buf.begin(), buf.begin() + off);
        if (fatal) break;
    }
    if (running_) drop_connection(conn->id);
}

void Broker::writer_loop(std::shared_ptr<Connection> conn) {
    std::vector<uint8_t> out;
    FramePtr f;
    while (conn->open) {
        if (!conn->egress.pop_wait(f, std::chrono::milliseconds(100))) continue;
        out.assign(f->begin(), f->end());
        // coalesce whatever else is queued, up to 256 KiB per send
        while (out.size() < 256 * 1024 && conn->egress.try_pop(f))
            out.insert(out.end(), f->begin(), f->end());
        std::size_t sent = 0;
        while (sent < out.size()) {
            ssize_t n = ::send(conn->fd, out.data() + sent, out.size() - sent,
                               MSG_NOSIGNAL);
            if (n <= 0) {
                conn->open = false;
                break;
            }
            sent += std::size_t(n);
        }
    }
    if (running_) drop_connection(conn->id);
}

void Broker::sys_loop() {
    auto interval = std::chrono::duration<double>(limits_.sys_interval_s);
    while (running_) {
        std::this_thread::sleep_for(interval);
        if (!running_) break;
        std::vector<std::pair<std::string, uint64_t>> counters;
        {
            std::shared_lock lk(conn_mu_);
            for (const auto& [id, c] : conns_)
                counters.emplace_back(c->client_id, c->egress.drop_count());
        }
        auto now_ns = uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count());
        for (const auto& [cid, drops] : counters) {
            Frame f{FrameType::PUBLISH, 0,
                    "$sys/broker/clients/" + cid + "/dropped",
                    encode_sample({now_ns, double(drops)})};
            route(f);
        }
    }
}

} // namespace dig::transport
