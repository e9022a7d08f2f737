#include <arpa/inet.h>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

#include "bb84/wire.hpp"

namespace bb84::wire {

namespace {

struct Queue {
    std::deque<std::vector<std::uint8_t>> frames;
    bool closed = false;
};

struct PipeState {
    std::mutex mu;
    std::condition_variable cv;
    Queue queues[2];
};

class MemoryChannel final : public Channel {
public:
    MemoryChannel(std::shared_ptr<PipeState> state, int side) : state_(std::move(state)), side_(side) {}
    ~MemoryChannel() override { close(); }

    void send(const Message& msg) override {
        std::vector<std::uint8_t> frame = encode_frame(msg);
        std::lock_guard lock(state_->mu);
        Queue& out = state_->queues[1 - side_];
        if (out.closed || state_->queues[side_].closed) throw DisconnectedError("peer disconnected");
        out.frames.push_back(std::move(frame));
        state_->cv.notify_all();
    }

    Message receive(std::chrono::milliseconds timeout) override {
        std::unique_lock lock(state_->mu);
        Queue& in = state_->queues[side_];
        const bool ready = state_->cv.wait_for(lock, timeout, [&] { return !in.frames.empty() || in.closed; });
        if (!in.frames.empty()) {
            std::vector<std::uint8_t> frame = std::move(in.frames.front());
            in.frames.pop_front();
            lock.unlock();
            Decoded d = decode_frame(frame);
            if (d.status != Decoded::Status::Complete || d.consumed != frame.size())
                throw WireError("memory pipe carried a malformed frame");
            return std::move(*d.message);
        }
        if (in.closed) throw DisconnectedError("peer disconnected");
        (void)ready;
        throw TimeoutError("no message within timeout");
    }

    void close() override {
        std::lock_guard lock(state_->mu);
        // Closing marks both directions: the peer sees end-of-stream once it
        // has drained what was already sent.
        state_->queues[1 - side_].closed = true;
        state_->queues[side_].closed = true;
        state_->cv.notify_all();
    }

private:
    std::shared_ptr<PipeState> state_;
    int side_;
};

[[noreturn]] void throw_errno(const char* what) {
    throw TransportError(std::string(what) + ": " + std::strerror(errno));
}

int remaining_ms(Channel::Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Channel::Clock::now());
    return static_cast<int>(std::max<std::int64_t>(0, left.count()));
}

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
    if (rc != 0) throw TransportError("resolve " + host + ": " + gai_strerror(rc));
    return res;
}

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_pipe() {
    auto state = std::make_shared<PipeState>();
    return {std::make_unique<MemoryChannel>(state, 0), std::make_unique<MemoryChannel>(state, 1)};
}

void RecordingChannel::send(const Message& msg) {
    entries_.push_back({true, encode_frame(msg)});
    inner_.send(msg);
}

Message RecordingChannel::receive(std::chrono::milliseconds timeout) {
    Message m = inner_.receive(timeout);
    entries_.push_back({false, encode_frame(m)});
    return m;
}

std::vector<std::uint8_t> RecordingChannel::bytes() const {
    std::vector<std::uint8_t> out;
    for (const auto& e : entries_) {
        out.push_back(e.outgoing ? '>' : '<');
        out.insert(out.end(), e.frame.begin(), e.frame.end());
    }
    return out;
}

TcpChannel::TcpChannel(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() { close(); }

void TcpChannel::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpChannel::send(const Message& msg) {
    if (fd_ < 0) throw DisconnectedError("channel closed");
    const std::vector<std::uint8_t> frame = encode_frame(msg);
    std::size_t sent = 0;
    while (sent < frame.size()) {
        const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) throw DisconnectedError("peer disconnected");
            throw_errno("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

Message TcpChannel::receive(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        if (!buffer_.empty()) {
            Decoded d = decode_frame(buffer_);
            if (d.status == Decoded::Status::Complete) {
                buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(d.consumed));
                return std::move(*d.message);
            }
        }
        if (fd_ < 0) throw DisconnectedError("channel closed");
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw_errno("poll");
        }
        if (rc == 0) throw TimeoutError("no message within timeout");
        std::uint8_t chunk[65536];
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ECONNRESET) throw DisconnectedError("peer disconnected");
            throw_errno("recv");
        }
        if (n == 0) throw DisconnectedError("peer disconnected");
        buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    addrinfo* res = resolve(host, port, true);
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    freeaddrinfo(res);
    if (fd_ < 0) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));

    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                       : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpChannel> TcpListener::accept(std::chrono::milliseconds timeout) {
    const auto deadline = Channel::Clock::now() + timeout;
    for (;;) {
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw_errno("poll");
        }
        if (rc == 0) throw TimeoutError("no connection within timeout");
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED) continue;
            throw_errno("accept");
        }
        return std::make_unique<TcpChannel>(fd);
    }
}

std::unique_ptr<TcpChannel> tcp_connect(const std::string& host, std::uint16_t port,
                                        std::chrono::milliseconds timeout) {
    const auto deadline = Channel::Clock::now() + timeout;
    for (;;) {
        addrinfo* res = resolve(host, port, false);
        for (addrinfo* a = res; a; a = a->ai_next) {
            const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
                freeaddrinfo(res);
                return std::make_unique<TcpChannel>(fd);
            }
            ::close(fd);
        }
        freeaddrinfo(res);
        if (Channel::Clock::now() >= deadline)
            throw TimeoutError("cannot connect to " + host + ":" + std::to_string(port));
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw TransportError("endpoint must be host:port");
    std::string host = endpoint.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    const std::string port_text = endpoint.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw TransportError("invalid port in endpoint: " + endpoint);
    }
    if (port > 65535) throw TransportError("invalid port in endpoint: " + endpoint);
    return {host, static_cast<std::uint16_t>(port)};
}

} // namespace bb84::wire
