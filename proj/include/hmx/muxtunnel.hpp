#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hmx {

// Wire protocol between a wormhole agent and the forwarder: many attacker TCP
// connections multiplexed over one stream. See PROTOCOL.md for the layout and
// worked byte examples.

enum class FrameType : std::uint8_t {
    Open = 1,  // payload: 2-byte big-endian wormhole public port
    Data = 2,  // payload: stream bytes
    Close = 3, // empty payload; end-of-stream in the sender's direction
    Hello = 4, // payload: UTF-8 wormhole_id; first frame on a tunnel
    Ping = 5,  // empty payload
    Pong = 6,  // empty payload
};

constexpr std::uint8_t kProtocolVersion = 1;
constexpr std::size_t kFrameHeaderSize = 10;
constexpr std::size_t kMaxFramePayload = 65536;

struct Frame {
    std::uint8_t version{kProtocolVersion};
    FrameType type{FrameType::Data};
    std::uint32_t conn_id{0};
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;

    static Frame open(std::uint32_t conn_id, std::uint16_t public_port);
    static Frame data(std::uint32_t conn_id, std::span<const std::uint8_t> bytes);
    static Frame close(std::uint32_t conn_id);
    static Frame hello(const std::string& wormhole_id);
    static Frame ping();
    static Frame pong();

    // For OPEN frames: the encoded public port.
    std::optional<std::uint16_t> open_port() const;
    std::string payload_as_string() const;
};

class CodecError : public std::runtime_error {
public:
    explicit CodecError(const std::string& what) : std::runtime_error(what) {}
};

// Exactly kFrameHeaderSize + payload bytes. Throws CodecError when payload
// exceeds kMaxFramePayload.
std::vector<std::uint8_t> encode_frame(const Frame& frame);

enum class DecodeStatus {
    Ok,
    NeedMore,        // insufficient bytes; consumed == 0
    BadVersion,      // fatal for the tunnel
    BadType,         // fatal for the tunnel
    PayloadTooLarge, // fatal for the tunnel
};

struct DecodeResult {
    DecodeStatus status{DecodeStatus::NeedMore};
    Frame frame;
    std::size_t consumed{0};
};

DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Mux state machine (connection-initiating side).
//
// Owned by a single logical reader/writer pair per tunnel; callers serialize
// events through one owner. The machine is transport-free: it turns local
// socket events and received frames into frames to emit and actions to apply.

enum class ConnStatus { Opening, Established, HalfClosed };

struct ConnState {
    ConnStatus status{ConnStatus::Established};
    bool close_sent{false};
    bool close_received{false};
    std::uint16_t public_port{0};
};

struct MuxState {
    std::map<std::uint32_t, ConnState> open_connections;
    std::uint32_t next_conn_id{1}; // strictly increasing per tunnel; never reused
};

struct DeliverData {
    std::uint32_t conn_id;
    std::vector<std::uint8_t> bytes;
};
struct DeliverClose {
    std::uint32_t conn_id;
};
using Deliver = std::variant<DeliverData, DeliverClose>;

struct MuxEvent {
    enum class Kind { LocalOpen, LocalData, LocalClose, FrameReceived };
    Kind kind;
    std::uint16_t port{0};            // LocalOpen
    std::uint32_t conn_id{0};         // LocalData / LocalClose
    std::vector<std::uint8_t> bytes;  // LocalData
    Frame frame;                      // FrameReceived

    static MuxEvent local_open(std::uint16_t port);
    static MuxEvent local_data(std::uint32_t conn_id, std::vector<std::uint8_t> bytes);
    static MuxEvent local_close(std::uint32_t conn_id);
    static MuxEvent frame_received(Frame f);
};

struct MuxResult {
    std::vector<Frame> emit;
    std::vector<Deliver> deliver;
    std::optional<std::uint32_t> opened_conn; // set by LocalOpen
    std::vector<std::string> errors;          // e.g. "UnknownConn ..."; tunnel stays up
};

MuxResult mux_step(MuxState& state, const MuxEvent& event);

} // namespace hmx
