#include "hmx/muxtunnel.hpp"

#include "hmx/util.hpp"

namespace hmx {

Frame Frame::open(std::uint32_t conn_id, std::uint16_t public_port) {
    Frame f;
    f.type = FrameType::Open;
    f.conn_id = conn_id;
    put_u16be(f.payload, public_port);
    return f;
}

Frame Frame::data(std::uint32_t conn_id, std::span<const std::uint8_t> bytes) {
    Frame f;
    f.type = FrameType::Data;
    f.conn_id = conn_id;
    f.payload.assign(bytes.begin(), bytes.end());
    return f;
}

Frame Frame::close(std::uint32_t conn_id) {
    Frame f;
    f.type = FrameType::Close;
    f.conn_id = conn_id;
    return f;
}

Frame Frame::hello(const std::string& wormhole_id) {
    Frame f;
    f.type = FrameType::Hello;
    f.conn_id = 0;
    f.payload.assign(wormhole_id.begin(), wormhole_id.end());
    return f;
}

Frame Frame::ping() {
    Frame f;
    f.type = FrameType::Ping;
    return f;
}

Frame Frame::pong() {
    Frame f;
    f.type = FrameType::Pong;
    return f;
}

std::optional<std::uint16_t> Frame::open_port() const {
    if (type != FrameType::Open || payload.size() != 2)
        return std::nullopt;
    return get_u16be(payload.data());
}

std::string Frame::payload_as_string() const {
    return std::string(payload.begin(), payload.end());
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > kMaxFramePayload)
        throw CodecError("PayloadTooLarge: " + std::to_string(frame.payload.size()));
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderSize + frame.payload.size());
    out.push_back(frame.version);
    out.push_back(static_cast<std::uint8_t>(frame.type));
    put_u32be(out, frame.conn_id);
    put_u32be(out, static_cast<std::uint32_t>(frame.payload.size()));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
    DecodeResult r;
    if (bytes.size() < kFrameHeaderSize) {
        r.status = DecodeStatus::NeedMore;
        return r;
    }
    const std::uint8_t version = bytes[0];
    const std::uint8_t type = bytes[1];
    const std::uint32_t conn_id = get_u32be(bytes.data() + 2);
    const std::uint32_t payload_length = get_u32be(bytes.data() + 6);
    if (version != kProtocolVersion) {
        r.status = DecodeStatus::BadVersion;
        return r;
    }
    if (type < 1 || type > 6) {
        r.status = DecodeStatus::BadType;
        return r;
    }
    if (payload_length > kMaxFramePayload) {
        r.status = DecodeStatus::PayloadTooLarge;
        return r;
    }
    if (bytes.size() < kFrameHeaderSize + payload_length) {
        r.status = DecodeStatus::NeedMore;
        return r;
    }
    r.status = DecodeStatus::Ok;
    r.frame.version = version;
    r.frame.type = static_cast<FrameType>(type);
    r.frame.conn_id = conn_id;
    r.frame.payload.assign(bytes.begin() + kFrameHeaderSize,
                           bytes.begin() + kFrameHeaderSize + payload_length);
    r.consumed = kFrameHeaderSize + payload_length;
    return r;
}

MuxEvent MuxEvent::local_open(std::uint16_t port) {
    MuxEvent e;
    e.kind = Kind::LocalOpen;
    e.port = port;
    return e;
}

MuxEvent MuxEvent::local_data(std::uint32_t conn_id, std::vector<std::uint8_t> bytes) {
    MuxEvent e;
    e.kind = Kind::LocalData;
    e.conn_id = conn_id;
    e.bytes = std::move(bytes);
    return e;
}

MuxEvent MuxEvent::local_close(std::uint32_t conn_id) {
    MuxEvent e;
    e.kind = Kind::LocalClose;
    e.conn_id = conn_id;
    return e;
}

MuxEvent MuxEvent::frame_received(Frame f) {
    MuxEvent e;
    e.kind = Kind::FrameReceived;
    e.frame = std::move(f);
    return e;
}

namespace {

void handle_frame(MuxState& state, const Frame& f, MuxResult& r) {
    switch (f.type) {
    case FrameType::Data: {
        auto it = state.open_connections.find(f.conn_id);
        if (it == state.open_connections.end() || it->second.close_received) {
            r.errors.push_back("UnknownConn: DATA for conn " + std::to_string(f.conn_id));
            return;
        }
        r.deliver.push_back(DeliverData{f.conn_id, f.payload});
        return;
    }
    case FrameType::Close: {
        auto it = state.open_connections.find(f.conn_id);
        if (it == state.open_connections.end() || it->second.close_received) {
            r.errors.push_back("UnknownConn: CLOSE for conn " + std::to_string(f.conn_id));
            return;
        }
        it->second.close_received = true;
        r.deliver.push_back(DeliverClose{f.conn_id});
        if (it->second.close_sent)
            state.open_connections.erase(it);
        else
            it->second.status = ConnStatus::HalfClosed;
        return;
    }
    case FrameType::Ping:
        r.emit.push_back(Frame::pong());
        return;
    case FrameType::Pong:
        // Liveness bookkeeping happens in the tunnel runtime.
        return;
    case FrameType::Open:
    case FrameType::Hello:
        r.errors.push_back("unexpected frame type " +
                           std::to_string(static_cast<int>(f.type)) + " on initiator side");
        return;
    }
}

} // namespace

MuxResult mux_step(MuxState& state, const MuxEvent& event) {
    MuxResult r;
    switch (event.kind) {
    case MuxEvent::Kind::LocalOpen: {
        const std::uint32_t conn = state.next_conn_id++;
        state.open_connections[conn] = ConnState{ConnStatus::Established, false, false, event.port};
        r.emit.push_back(Frame::open(conn, event.port));
        r.opened_conn = conn;
        break;
    }
    case MuxEvent::Kind::LocalData: {
        auto it = state.open_connections.find(event.conn_id);
        if (it == state.open_connections.end() || it->second.close_sent) {
            r.errors.push_back("UnknownConn: local data for conn " + std::to_string(event.conn_id));
            break;
        }
        // Chunk at the frame payload cap; order within the connection is
        // preserved by emission order.
        std::size_t off = 0;
        while (off < event.bytes.size()) {
            std::size_t n = std::min(kMaxFramePayload, event.bytes.size() - off);
            r.emit.push_back(Frame::data(
                event.conn_id, std::span<const std::uint8_t>(event.bytes.data() + off, n)));
            off += n;
        }
        break;
    }
    case MuxEvent::Kind::LocalClose: {
        auto it = state.open_connections.find(event.conn_id);
        if (it == state.open_connections.end()) {
            r.errors.push_back("UnknownConn: local close for conn " +
                               std::to_string(event.conn_id));
            break;
        }
        if (it->second.close_sent)
            break; // CLOSE already emitted for this direction
        it->second.close_sent = true;
        r.emit.push_back(Frame::close(event.conn_id));
        if (it->second.close_received)
            state.open_connections.erase(it);
        else
            it->second.status = ConnStatus::HalfClosed;
        break;
    }
    case MuxEvent::Kind::FrameReceived:
        handle_frame(state, event.frame, r);
        break;
    }
    return r;
}

} // namespace hmx
