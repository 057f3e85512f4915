#pragma once

#include "hmx/muxtunnel.hpp"
#include "hmx/net.hpp"

#include <mutex>
#include <string>
#include <vector>

namespace hmx {

// Serializes frame writes from many threads onto one tunnel socket.
class FrameWriter {
public:
    explicit FrameWriter(Socket* sock) : sock_(sock) {}

    bool send(const Frame& frame) {
        const auto bytes = encode_frame(frame);
        std::lock_guard lock(mu_);
        return sock_->send_all(bytes);
    }

private:
    Socket* sock_;
    std::mutex mu_;
};

// Buffered frame extraction from a tunnel socket.
class FrameReader {
public:
    enum class Status {
        FrameReady, // `out` holds the next frame
        Eof,        // peer closed cleanly
        Timeout,    // receive timeout expired (socket still healthy)
        Error,      // transport error
        Malformed,  // protocol violation; tunnel must be torn down
    };

    explicit FrameReader(Socket* sock) : sock_(sock) {}

    Status next(Frame& out, std::string* error_detail = nullptr);

private:
    Socket* sock_;
    std::vector<std::uint8_t> buf_;
    std::size_t pos_{0}; // consumed prefix of buf_
};

} // namespace hmx
