#include "hmx/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace hmx {

namespace {

std::string errno_text(const char* prefix) {
    return std::string(prefix) + ": " + std::strerror(errno);
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::uint32_t ip = resolve_ipv4(host);
    if (ip == 0 && host != "0.0.0.0") {
        throw NetError("cannot resolve IPv4 address: " + host);
    }
    addr.sin_addr.s_addr = htonl(ip);
    return addr;
}

std::string addr_ip(const sockaddr_in& addr) {
    char buf[INET_ADDRSTRLEN]{};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
    return buf;
}

} // namespace

std::uint32_t resolve_ipv4(const std::string& host) {
    if (host == "localhost") {
        return 0x7f000001u;
    }
    in_addr a{};
    if (::inet_pton(AF_INET, host.c_str(), &a) == 1) {
        return ntohl(a.s_addr);
    }
    return 0;
}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

Socket Socket::connect_to(const std::string& host, std::uint16_t port, int timeout_ms,
                          const std::string& local_bind) {
    const sockaddr_in addr = make_addr(host, port);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
        throw NetError(errno_text("socket"));
    }
    Socket sock(fd);
    if (!local_bind.empty()) {
        const sockaddr_in local = make_addr(local_bind, 0);
        if (::bind(fd, reinterpret_cast<const sockaddr*>(&local), sizeof(local)) != 0) {
            throw NetError("bind to " + local_bind + " failed: " + std::strerror(errno));
        }
    }
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc != 0) {
        if (errno != EINPROGRESS) {
            throw NetError("connect to " + host + ":" + std::to_string(port) + " failed: " +
                           std::strerror(errno));
        }
        pollfd pfd{fd, POLLOUT, 0};
        rc = ::poll(&pfd, 1, timeout_ms);
        if (rc <= 0) {
            throw NetError("connect to " + host + ":" + std::to_string(port) +
                           (rc == 0 ? " timed out" : errno_text(" poll failed")));
        }
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            throw NetError("connect to " + host + ":" + std::to_string(port) + " failed: " +
                           std::strerror(err));
        }
    }
    ::fcntl(fd, F_SETFL, flags);
    return sock;
}

bool Socket::send_all(std::span<const std::uint8_t> data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

bool Socket::send_all(const std::string& data) {
    return send_all(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

long Socket::recv_some(std::uint8_t* buf, std::size_t len) {
    while (true) {
        const auto n = ::recv(fd_, buf, len, 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        return n;
    }
}

void Socket::shutdown_write() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_WR);
    }
}

void Socket::shutdown_both() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
}

void Socket::set_recv_timeout_ms(int ms) {
    timeval tv{};
    tv.tv_sec = ms / 1000;
    tv.tv_usec = static_cast<suseconds_t>(ms % 1000) * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void Socket::set_nodelay() {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

std::string Socket::peer_ip() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        return {};
    }
    return addr_ip(addr);
}

std::uint16_t Socket::peer_port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        return 0;
    }
    return ntohs(addr.sin_port);
}

std::string Socket::local_ip() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        return {};
    }
    return addr_ip(addr);
}

std::uint16_t Socket::local_port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        return 0;
    }
    return ntohs(addr.sin_port);
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Listener& Listener::operator=(Listener&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        port_ = other.port_;
        other.fd_ = -1;
    }
    return *this;
}

Listener Listener::bind_listen(const std::string& host, std::uint16_t port, int backlog) {
    const sockaddr_in addr = make_addr(host, port);
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
        throw NetError(errno_text("socket"));
    }
    Listener l;
    l.fd_ = fd;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw NetError("bind " + host + ":" + std::to_string(port) + " failed: " +
                       std::strerror(errno));
    }
    if (::listen(fd, backlog) != 0) {
        throw NetError("listen on " + host + ":" + std::to_string(port) + " failed: " +
                       std::strerror(errno));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    l.port_ = ntohs(bound.sin_port);
    return l;
}

Socket Listener::accept_conn() {
    while (fd_ >= 0) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            return Socket(fd);
        }
        if (errno == EINTR || errno == ECONNABORTED) {
            continue;
        }
        break; // listener shut down or fatal error
    }
    return Socket();
}

void Listener::shutdown() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
}

void Listener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

} // namespace hmx
