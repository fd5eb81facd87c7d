#pragma once

// Length-prefixed message transport over a loopback/LAN TCP stream (POSIX).

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "coexist/sensing.hpp"

namespace coexist {

namespace detail {

inline bool send_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) return false;
        data += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

/// Reads exactly n bytes, polling so `stop` is honoured. False on EOF/stop.
inline bool recv_all(int fd, std::uint8_t* data, std::size_t n, const std::atomic<bool>& stop) {
    while (n > 0) {
        pollfd p{fd, POLLIN, 0};
        const int r = ::poll(&p, 1, 50);
        if (stop) return false;
        if (r == 0) continue;
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) return false;
        const ssize_t k = ::recv(fd, data, n, 0);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) return false;
        data += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

}  // namespace detail

/// Client side: connects lazily, reconnects after a failure.
class TcpSink : public MessageSink {
public:
    TcpSink(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}
    ~TcpSink() override { close(); }
    TcpSink(const TcpSink&) = delete;
    TcpSink& operator=(const TcpSink&) = delete;

    void deliver(const io::Bytes& message) override {
        if (fd_ < 0) connect();
        const auto framed = frame_message(message);
        if (!detail::send_all(fd_, framed.data(), framed.size())) {
            close();
            throw DeliveryError("send to " + host_ + ":" + std::to_string(port_) + " failed");
        }
    }

    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    void connect() {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw DeliveryError("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port_);
        if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw DeliveryError("bad address " + host_);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(fd);
            throw DeliveryError("cannot connect to " + host_ + ":" + std::to_string(port_));
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        fd_ = fd;
    }

    std::string host_;
    std::uint16_t port_;
    int fd_ = -1;
};

/// Server side: accepts connections sequentially and feeds each framed
/// message through an OccupancyReceiver. Stale charts are dropped there.
class TcpOccupancyListener {
public:
    using Callback = std::function<void(const OccupancyChart&)>;

    explicit TcpOccupancyListener(std::uint16_t port = 0, Callback cb = {}) : cb_(std::move(cb)) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw DeliveryError("socket() failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
            ::close(fd_);
            throw DeliveryError("cannot listen on port " + std::to_string(port));
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        thread_ = std::thread([this] { run(); });
    }

    ~TcpOccupancyListener() {
        stop_ = true;
        if (thread_.joinable()) thread_.join();
        ::close(fd_);
    }
    TcpOccupancyListener(const TcpOccupancyListener&) = delete;
    TcpOccupancyListener& operator=(const TcpOccupancyListener&) = delete;

    std::uint16_t port() const { return port_; }

    std::optional<OccupancyChart> latest() const {
        std::lock_guard lock(mu_);
        return receiver_.latest();
    }
    std::size_t discarded() const {
        std::lock_guard lock(mu_);
        return receiver_.discarded();
    }

    /// Blocks until a chart with timestamp >= ts has been accepted.
    bool wait_for(std::uint64_t ts, std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        return cv_.wait_for(lock, timeout, [&] { return receiver_.latest() && receiver_.latest()->timestamp >= ts; });
    }

private:
    void run() {
        while (!stop_) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            const int c = ::accept(fd_, nullptr, nullptr);
            if (c < 0) continue;
            serve(c);
            ::close(c);
        }
    }

    void serve(int c) {
        while (!stop_) {
            std::uint8_t hdr[4];
            if (!detail::recv_all(c, hdr, 4, stop_)) return;
            const std::uint32_t n = std::uint32_t(hdr[0]) | std::uint32_t(hdr[1]) << 8 | std::uint32_t(hdr[2]) << 16 |
                                    std::uint32_t(hdr[3]) << 24;
            if (n > (1u << 24)) return;
            io::Bytes msg(n);
            if (!detail::recv_all(c, msg.data(), n, stop_)) return;
            std::optional<OccupancyChart> chart;
            {
                std::lock_guard lock(mu_);
                try {
                    chart = receiver_.accept(msg);
                } catch (const FormatError&) {
                    return;  // drop the connection on a malformed frame
                }
            }
            cv_.notify_all();
            if (chart && cb_) cb_(*chart);
        }
    }

    Callback cb_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    mutable std::mutex mu_;
    std::condition_variable cv_;
    OccupancyReceiver receiver_;
    std::thread thread_;
};

}  // namespace coexist
