#pragma once

#include "hmx/time.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmx {

// Classic capture container: magic 0xA1B2C3D4, little-endian, link type
// RAW-IP (101). Each packet is a bare IPv4 datagram.

constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4;
constexpr std::uint32_t kLinkTypeRawIp = 101;

struct PcapPacket {
    Micros ts{0};
    std::vector<std::uint8_t> data; // raw IPv4 packet
};

class MalformedCapture : public std::runtime_error {
public:
    explicit MalformedCapture(const std::string& what) : std::runtime_error(what) {}
};

class PcapWriter {
public:
    PcapWriter() = default;

    // Creates the file with a fresh global header, or appends when a valid
    // header is already present. Throws std::runtime_error on open failure.
    void open(const std::filesystem::path& path);
    void write(Micros ts, std::span<const std::uint8_t> packet);
    void flush();
    void close();
    bool is_open() const { return file_.is_open(); }
    bool failed() const { return failed_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::ofstream file_;
    std::filesystem::path path_;
    bool failed_{false};
};

// Reads a whole capture file; throws MalformedCapture on bad magic, bad
// version, or a truncated packet header/body.
std::vector<PcapPacket> read_pcap_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthesized TCP streams. The relay captures application payload, so packets
// are fabricated around each snapshot: real IPv4/TCP headers with checksums,
// sequence numbers, and the usual handshake/teardown, keeping the files
// readable by ordinary capture tooling.

enum class Direction { Inbound, Outbound }; // Inbound = client(attacker) -> server

struct TcpEndpoints {
    std::uint32_t client_ip{0};
    std::uint16_t client_port{0};
    std::uint32_t server_ip{0};
    std::uint16_t server_port{0};
};

constexpr std::size_t kSynthSegmentBytes = 1400;

class TcpStreamSynth {
public:
    TcpStreamSynth(TcpEndpoints ep, std::uint32_t client_isn, std::uint32_t server_isn);

    // Each call returns raw IPv4 packets in emission order.
    std::vector<std::vector<std::uint8_t>> open();     // SYN, SYN-ACK, ACK
    std::vector<std::vector<std::uint8_t>> syn_only(); // lone SYN probe
    std::vector<std::vector<std::uint8_t>> data(Direction dir, std::span<const std::uint8_t> bytes);
    std::vector<std::vector<std::uint8_t>> close(); // FIN exchange
    std::vector<std::vector<std::uint8_t>> reset(); // server-side RST

private:
    std::vector<std::uint8_t> segment(Direction dir, std::uint8_t flags,
                                      std::span<const std::uint8_t> payload);

    TcpEndpoints ep_;
    std::uint32_t client_seq_;
    std::uint32_t server_seq_;
    std::uint16_t ip_id_{1};
};

// TCP flag bits.
constexpr std::uint8_t kTcpFin = 0x01;
constexpr std::uint8_t kTcpSyn = 0x02;
constexpr std::uint8_t kTcpRst = 0x04;
constexpr std::uint8_t kTcpPsh = 0x08;
constexpr std::uint8_t kTcpAck = 0x10;

struct ParsedTcp {
    Micros ts{0};
    std::uint32_t src_ip{0}, dst_ip{0};
    std::uint16_t src_port{0}, dst_port{0};
    std::uint32_t seq{0}, ack{0};
    std::uint8_t flags{0};
    std::vector<std::uint8_t> payload;
};

// Returns nullopt for packets that are not IPv4/TCP.
std::optional<ParsedTcp> parse_raw_ip_tcp(const PcapPacket& pkt);

struct AssembledFlow {
    std::uint32_t client_ip{0}, server_ip{0};
    std::uint16_t client_port{0}, server_port{0};
    Micros first_ts{0}, last_ts{0};
    bool handshake_complete{false}; // client SYN and server SYN-ACK both seen
    std::vector<std::uint8_t> client_payload; // reassembled in sequence order
    std::vector<std::uint8_t> server_payload;
};

// Groups packets by 4-tuple and reassembles both directions honoring TCP
// sequence order (out-of-order and duplicate segments tolerated).
class StreamAssembler {
public:
    void add(const ParsedTcp& pkt);
    std::vector<AssembledFlow> finish();

private:
    struct DirState {
        std::optional<std::uint32_t> isn; // seq of SYN
        bool syn_seen{false};
        std::map<std::uint32_t, std::vector<std::uint8_t>> segments; // key: seq
    };
    struct FlowState {
        std::uint32_t a_ip, b_ip;
        std::uint16_t a_port, b_port; // a = side that sent the first packet
        bool a_is_client{true};
        bool client_known{false};
        Micros first_ts{0}, last_ts{0};
        DirState from_a, from_b;
        std::size_t order{0};
    };
    std::map<std::string, FlowState> flows_;
    std::size_t next_order_{0};
};

std::uint16_t internet_checksum(std::span<const std::uint8_t> data);

} // namespace hmx
