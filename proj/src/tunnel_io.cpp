#include "hmx/tunnel_io.hpp"

#include <cerrno>

namespace hmx {

FrameReader::Status FrameReader::next(Frame& out, std::string* error_detail) {
    while (true) {
        // Try to decode from what we already have.
        const std::span<const std::uint8_t> view(buf_.data() + pos_, buf_.size() - pos_);
        const DecodeResult dec = decode_frame(view);
        switch (dec.status) {
        case DecodeStatus::Ok:
            out = dec.frame;
            pos_ += dec.consumed;
            if (pos_ > 0 && (pos_ >= buf_.size() || pos_ > 256 * 1024)) {
                buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
                pos_ = 0;
            }
            return Status::FrameReady;
        case DecodeStatus::BadVersion:
        case DecodeStatus::BadType:
        case DecodeStatus::PayloadTooLarge:
            if (error_detail) {
                *error_detail = dec.status == DecodeStatus::BadVersion ? "bad protocol version"
                                : dec.status == DecodeStatus::BadType  ? "unknown frame type"
                                                                       : "oversized payload";
            }
            return Status::Malformed;
        case DecodeStatus::NeedMore:
            break;
        }
        // Need more bytes from the wire.
        std::uint8_t chunk[64 * 1024];
        const long n = sock_->recv_some(chunk, sizeof(chunk));
        if (n == 0) {
            return Status::Eof;
        }
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK) {
                return Status::Timeout;
            }
            if (error_detail) {
                *error_detail = "transport error";
            }
            return Status::Error;
        }
        buf_.insert(buf_.end(), chunk, chunk + n);
    }
}

} // namespace hmx
