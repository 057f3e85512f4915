#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace hmx {

class NetError : public std::runtime_error {
public:
    explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

// Resolves a dotted-quad IPv4 literal (plus "localhost") to a host-order
// address. Returns 0 on failure.
std::uint32_t resolve_ipv4(const std::string& host);

// Move-only RAII wrapper over a connected TCP socket.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    // Throws NetError on refusal or timeout. A non-empty local_bind pins the
    // source address before connecting (any 127.x.y.z works on loopback).
    static Socket connect_to(const std::string& host, std::uint16_t port, int timeout_ms = 5000,
                             const std::string& local_bind = {});

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    // Sends the whole buffer; returns false on error (connection dead).
    bool send_all(std::span<const std::uint8_t> data);
    bool send_all(const std::string& data);

    // Blocking read. Returns bytes read, 0 on orderly EOF, -1 on error
    // (including a receive-timeout expiring, errno EAGAIN).
    long recv_some(std::uint8_t* buf, std::size_t len);

    void shutdown_write();
    void shutdown_both();
    void set_recv_timeout_ms(int ms);
    void set_nodelay();

    std::string peer_ip() const;
    std::uint16_t peer_port() const;
    std::string local_ip() const;
    std::uint16_t local_port() const;

    void close();

private:
    int fd_{-1};
};

// Move-only RAII wrapper over a listening TCP socket.
class Listener {
public:
    Listener() = default;
    Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }
    Listener& operator=(Listener&& other) noexcept;
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;
    ~Listener() { close(); }

    // Throws NetError when the address cannot be bound.
    static Listener bind_listen(const std::string& host, std::uint16_t port, int backlog = 64);

    // Blocks until a peer connects. Returns an invalid Socket once the
    // listener has been shut down or on a fatal accept error.
    Socket accept_conn();

    bool valid() const { return fd_ >= 0; }
    std::uint16_t port() const { return port_; } // actual port (after bind to 0)

    // Unblocks pending accept_conn() calls, then releases the socket.
    void shutdown();
    void close();

private:
    int fd_{-1};
    std::uint16_t port_{0};
};

} // namespace hmx
