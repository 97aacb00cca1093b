#include "dig/transport/client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

namespace dig::transport {

namespace {
constexpr std::size_t kFlushThreshold = 32 * 1024;
}

Client::~Client() { close(); }

void Client::do_connect_socket() {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectionError("client: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port_);
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConnectionError("client: bad host " + host_);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw ConnectionError("client: cannot connect " + host_ + ":" +
                              std::to_string(port_));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    fd_ = fd;

    Frame connect_frame{FrameType::CONNECT, 0, "",
                        {opts_.client_id.begin(), opts_.client_id.end()}};
    auto bytes = encode_frame(connect_frame);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent,
                           MSG_NOSIGNAL);
        if (n <= 0) throw ConnectionError("client: CONNECT send failed");
        sent += std::size_t(n);
    }
    connected_ = true;
}

void Client::connect(const std::string& host, uint16_t port, ClientOptions opts) {
    close();
    stopping_ = false;
    host_ = host;
    port_ = port;
    opts_ = std::move(opts);
    do_connect_socket();
    reader_ = std::thread([this] { reader_loop(); });
    flusher_ = std::thread([this] { flusher_loop(); });
}

void Client::close() {
    if (stopping_.exchange(true)) {
        return;
    }
    connected_ = false;
    if (fd_ >= 0) {
        // best-effort flush of what's already buffered
        {
            std::lock_guard lk(send_mu_);
            if (!out_buf_.empty()) {
                ::send(fd_, out_buf_.data(), out_buf_.size(), MSG_NOSIGNAL);
                out_buf_.clear();
            }
        }
        ::shutdown(fd_, SHUT_RDWR);
    }
    suback_cv_.notify_all();
    if (reader_.joinable()) reader_.join();
    if (flusher_.joinable()) flusher_.join();
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Client::send_bytes_locked(const std::vector<uint8_t>& bytes) {
    out_buf_.insert(out_buf_.end(), bytes.begin(), bytes.end());
    if (out_buf_.size() < kFlushThreshold) return;
    std::size_t sent = 0;
    while (sent < out_buf_.size()) {
        ssize_t n = ::send(fd_, out_buf_.data() + sent, out_buf_.size() - sent,
                           MSG_NOSIGNAL);
        if (n <= 0) {
            connected_ = false;
            out_buf_.clear();
            throw ConnectionError("client: send failed");
        }
        sent += std::size_t(n);
    }
    out_buf_.clear();
}

void Client::publish(std::string_view topic, std::span<const uint8_t> payload) {
    if (!connected_) throw ConnectionError("client: not connected");
    Frame f{FrameType::PUBLISH, 0, std::string(topic),
            {payload.begin(), payload.end()}};
    auto bytes = encode_frame(f);
    std::lock_guard lk(send_mu_);
    send_bytes_locked(bytes);
}

void Client::publish_sample(std::string_view topic, uint64_t t_ns, double value) {
    publish(topic, encode_sample({t_ns, value}));
}

void Client::flush() {
    std::lock_guard lk(send_mu_);
    if (out_buf_.empty() || fd_ < 0) return;
    std::size_t sent = 0;
    while (sent < out_buf_.size()) {
        ssize_t n = ::send(fd_, out_buf_.data() + sent, out_buf_.size() - sent,
                           MSG_NOSIGNAL);
        if (n <= 0) {
            connected_ = false;
            out_buf_.clear();
            return;
        }
        sent += std::size_t(n);
    }
    out_buf_.clear();
}

void Client::subscribe(const std::string& filter, Handler handler) {
    if (!connected_) throw ConnectionError("client: not connected");
    TopicFilter tf(filter);   // validates; throws invalid_argument
    {
        std::lock_guard lk(sub_mu_);
        handlers_.emplace_back(std::move(tf), std::move(handler));
        ++pending_subacks_;
    }
    Frame f{FrameType::SUBSCRIBE, 0, filter, {}};
    auto bytes = encode_frame(f);
    {
        std::lock_guard lk(send_mu_);
        send_bytes_locked(bytes);
    }
    flush();
    std::unique_lock lk(sub_mu_);
    bool acked = suback_cv_.wait_for(lk, std::chrono::milliseconds(opts_.io_timeout_ms),
                                     [&] { return pending_subacks_ == 0 || stopping_; });
    if (!acked || stopping_)
        throw ConnectionError("client: SUBACK not received");
}

void Client::flusher_loop() {
    while (!stopping_) {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        if (connected_) flush();
    }
}

void Client::reconnect_blocking() {
    double backoff = opts_.backoff_initial_s;
    while (!stopping_) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff = std::min(backoff * 2.0, opts_.backoff_max_s);
        try {
            if (fd_ >= 0) ::close(fd_);
            fd_ = -1;
            do_connect_socket();
            // re-establish subscriptions
            std::vector<std::string> filters;
            {
                std::lock_guard lk(sub_mu_);
                for (const auto& [tf, h] : handlers_) filters.push_back(tf.pattern);
                pending_subacks_ += int(filters.size());
            }
            for (const auto& p : filters) {
                auto bytes = encode_frame({FrameType::SUBSCRIBE, 0, p, {}});
                std::lock_guard lk(send_mu_);
                send_bytes_locked(bytes);
            }
            flush();
            return;
        } catch (const ConnectionError&) {
            // retry with backoff
        }
    }
}

void Client::reader_loop() {
    std::vector<uint8_t> buf;
    uint8_t chunk[65536];
    while (!stopping_) {
        ssize_t n = fd_ >= 0 ? ::recv(fd_, chunk, sizeof chunk, 0) : -1;
        if (n <= 0) {
            connected_ = false;
            if (stopping_ || !opts_.auto_reconnect) break;
            buf.clear();
            reconnect_blocking();
            continue;
        }
        buf.insert(buf.end(), chunk, chunk + n);
        std::size_t off = 0;
        while (off < buf.size()) {
            auto r = decode_frame(std::span(buf).subspan(off));
            if (r.status == DecodeResult::Status::need_more) break;
            if (r.status == DecodeResult::Status::error) {
                connected_ = false;
                off = buf.size();
                break;
            }
            off += r.consumed;
            if (r.frame.type == FrameType::SUBACK) {
                std::lock_guard lk(sub_mu_);
                if (pending_subacks_ > 0) --pending_subacks_;
                suback_cv_.notify_all();
            } else if (r.frame.type == FrameType::PUBLISH) {
                received_.fetch_add(1, std::memory_order_relaxed);
                std::vector<Handler> to_call;
                {
                    std::lock_guard lk(sub_mu_);
                    for (const auto& [tf, h] : handlers_)
                        if (tf.matches(r.frame.topic)) to_call.push_back(h);
                }
                for (auto& h : to_call) h(r.frame.topic, r.frame.payload);
            }
        }
        buf.erase(buf.begin(), buf.begin() + off);
    }
}

} // namespace dig::transport
