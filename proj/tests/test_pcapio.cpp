#include "hmx/pcapio.hpp"
#include "hmx/util.hpp"

#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "hmx_pcap_test";
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

hmx::TcpEndpoints endpoints() {
    return {*hmx::parse_ipv4("198.51.100.7"), 40123, *hmx::parse_ipv4("127.0.0.2"), 8080};
}

// A correct checksum makes the checksummed block sum to all-ones, so running
// the algorithm over it again yields zero.
bool ip_checksum_valid(std::span<const std::uint8_t> pkt) {
    const std::size_t ihl = (pkt[0] & 0x0f) * 4u;
    return hmx::internet_checksum(pkt.subspan(0, ihl)) == 0;
}

bool tcp_checksum_valid(std::span<const std::uint8_t> pkt) {
    const std::size_t ihl = (pkt[0] & 0x0f) * 4u;
    std::vector<std::uint8_t> block;
    block.insert(block.end(), pkt.begin() + 12, pkt.begin() + 20); // src + dst ip
    block.push_back(0);
    block.push_back(6); // TCP
    const std::size_t seg_len = pkt.size() - ihl;
    hmx::put_u16be(block, static_cast<std::uint16_t>(seg_len));
    block.insert(block.end(), pkt.begin() + ihl, pkt.end());
    return hmx::internet_checksum(block) == 0;
}

} // namespace

TEST_CASE("global header matches the classic format byte for byte") {
    const auto dir = temp_dir();
    const auto path = dir / "header.pcap";
    fs::remove(path);
    hmx::PcapWriter w;
    w.open(path);
    w.close();

    const auto raw = slurp(path);
    REQUIRE(raw.size() == 24);
    // Hand-assembled: magic 0xA1B2C3D4 stored little-endian, version 2.4,
    // zero offsets, snaplen 65535, link type 101 (raw IPv4).
    const std::uint8_t expected[24] = {
        0xd4, 0xc3, 0xb2, 0xa1, // magic
        0x02, 0x00, 0x04, 0x00, // version 2.4
        0x00, 0x00, 0x00, 0x00, // thiszone
        0x00, 0x00, 0x00, 0x00, // sigfigs
        0xff, 0xff, 0x00, 0x00, // snaplen 65535
        0x65, 0x00, 0x00, 0x00, // linktype 101
    };
    CHECK(std::equal(raw.begin(), raw.end(), expected));
}

TEST_CASE("packets round trip with microsecond timestamps") {
    const auto dir = temp_dir();
    const auto path = dir / "roundtrip.pcap";
    fs::remove(path);

    hmx::PcapWriter w;
    w.open(path);
    const std::vector<std::uint8_t> a = {0x45, 0x00, 0x00, 0x01};
    const std::vector<std::uint8_t> b = {0x45, 0x00, 0x00, 0x02, 0xff};
    w.write(1464739200'123456LL, a);
    w.write(1464739201'000007LL, b);
    w.close();

    // Reopening appends instead of truncating.
    hmx::PcapWriter w2;
    w2.open(path);
    w2.write(1464739202'000000LL, a);
    w2.close();

    const auto pkts = hmx::read_pcap_file(path);
    REQUIRE(pkts.size() == 3);
    CHECK(pkts[0].ts == 1464739200'123456LL);
    CHECK(pkts[1].ts == 1464739201'000007LL);
    CHECK(pkts[0].data == a);
    CHECK(pkts[1].data == b);
    CHECK(pkts[2].ts == 1464739202'000000LL);
}

TEST_CASE("malformed files are rejected") {
    const auto dir = temp_dir();

    SUBCASE("bad magic") {
        const auto path = dir / "badmagic.pcap";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "GIF89a not a capture";
        out.close();
        CHECK_THROWS_AS((void)hmx::read_pcap_file(path), hmx::MalformedCapture);
    }
    SUBCASE("truncated packet body") {
        const auto path = dir / "trunc.pcap";
        fs::remove(path);
        hmx::PcapWriter w;
        w.open(path);
        w.write(1000, std::vector<std::uint8_t>(64, 0x45));
        w.close();
        auto raw = slurp(path);
        raw.resize(raw.size() - 10);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<long>(raw.size()));
        out.close();
        CHECK_THROWS_AS((void)hmx::read_pcap_file(path), hmx::MalformedCapture);
    }
}

TEST_CASE("synthesized handshake carries valid headers and checksums") {
    hmx::TcpStreamSynth synth(endpoints(), 1000, 5000);
    const auto pkts = synth.open();
    REQUIRE(pkts.size() == 3);

    std::vector<hmx::ParsedTcp> parsed;
    for (const auto& p : pkts) {
        CHECK(ip_checksum_valid(p));
        CHECK(tcp_checksum_valid(p));
        auto t = hmx::parse_raw_ip_tcp({0, p});
        REQUIRE(t.has_value());
        parsed.push_back(*t);
    }
    // SYN from the client at its ISN.
    CHECK(parsed[0].flags == hmx::kTcpSyn);
    CHECK(parsed[0].src_port == 40123);
    CHECK(parsed[0].seq == 1000);
    // SYN-ACK from the server acknowledging ISN+1.
    CHECK(parsed[1].flags == (hmx::kTcpSyn | hmx::kTcpAck));
    CHECK(parsed[1].seq == 5000);
    CHECK(parsed[1].ack == 1001);
    // Final ACK from the client.
    CHECK(parsed[2].flags == hmx::kTcpAck);
    CHECK(parsed[2].ack == 5001);
}

TEST_CASE("payload is segmented at the synthetic MTU") {
    hmx::TcpStreamSynth synth(endpoints(), 1, 2);
    (void)synth.open();
    std::vector<std::uint8_t> payload(2 * hmx::kSynthSegmentBytes + 200);
    for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<std::uint8_t>(i * 31);

    const auto pkts = synth.data(hmx::Direction::Inbound, payload);
    REQUIRE(pkts.size() == 3);
    std::size_t sizes[3];
    for (int i = 0; i < 3; ++i) {
        auto t = hmx::parse_raw_ip_tcp({0, pkts[i]});
        REQUIRE(t.has_value());
        CHECK((t->flags & hmx::kTcpPsh) != 0);
        CHECK(tcp_checksum_valid(pkts[i]));
        sizes[i] = t->payload.size();
    }
    CHECK(sizes[0] == hmx::kSynthSegmentBytes);
    CHECK(sizes[1] == hmx::kSynthSegmentBytes);
    CHECK(sizes[2] == 200);
}

TEST_CASE("assembler reconstructs both directions in sequence order") {
    hmx::TcpStreamSynth synth(endpoints(), 77, 88);
    std::vector<hmx::PcapPacket> wire;
    hmx::Micros ts = 0;
    auto push = [&](std::vector<std::vector<std::uint8_t>> pkts) {
        for (auto& p : pkts)
            wire.push_back({++ts, std::move(p)});
    };
    std::vector<std::uint8_t> req(3000), resp(5000);
    std::mt19937 rng(7);
    for (auto& b : req)
        b = static_cast<std::uint8_t>(rng());
    for (auto& b : resp)
        b = static_cast<std::uint8_t>(rng());

    push(synth.open());
    push(synth.data(hmx::Direction::Inbound, req));
    push(synth.data(hmx::Direction::Outbound, resp));
    push(synth.close());

    SUBCASE("in order") {}
    SUBCASE("data segments shuffled and duplicated") {
        // Keep the handshake first so client/server attribution is by SYN,
        // then scramble everything else and replay two segments.
        std::shuffle(wire.begin() + 3, wire.end() - 3, rng);
        wire.push_back(wire[4]);
        wire.push_back(wire[6]);
    }

    hmx::StreamAssembler asm_;
    for (const auto& pkt : wire) {
        auto t = hmx::parse_raw_ip_tcp(pkt);
        REQUIRE(t.has_value());
        asm_.add(*t);
    }
    const auto flows = asm_.finish();
    REQUIRE(flows.size() == 1);
    const auto& f = flows[0];
    CHECK(f.handshake_complete);
    CHECK(f.client_port == 40123);
    CHECK(f.server_port == 8080);
    CHECK(f.client_payload == req);
    CHECK(f.server_payload == resp);
}

TEST_CASE("a lone SYN never becomes a completed handshake") {
    hmx::TcpStreamSynth synth(endpoints(), 300, 0);
    const auto pkts = synth.syn_only();
    REQUIRE(pkts.size() == 1);

    hmx::StreamAssembler asm_;
    auto t = hmx::parse_raw_ip_tcp({50, pkts[0]});
    REQUIRE(t.has_value());
    asm_.add(*t);
    const auto flows = asm_.finish();
    REQUIRE(flows.size() == 1);
    CHECK_FALSE(flows[0].handshake_complete);
    CHECK(flows[0].client_payload.empty());
    CHECK(flows[0].server_payload.empty());
}

TEST_CASE("reset packets parse with the RST flag") {
    hmx::TcpStreamSynth synth(endpoints(), 1, 2);
    (void)synth.open();
    const auto pkts = synth.reset();
    REQUIRE(pkts.size() == 1);
    auto t = hmx::parse_raw_ip_tcp({0, pkts[0]});
    REQUIRE(t.has_value());
    CHECK((t->flags & hmx::kTcpRst) != 0);
    CHECK(t->src_port == 8080); // server side sends the reset
}

TEST_CASE("non-TCP packets are ignored by the parser") {
    std::vector<std::uint8_t> udp(28, 0);
    udp[0] = 0x45;
    udp[2] = 0;
    udp[3] = 28;
    udp[9] = 17; // UDP
    CHECK_FALSE(hmx::parse_raw_ip_tcp({0, udp}).has_value());
    CHECK_FALSE(hmx::parse_raw_ip_tcp({0, {0x60, 0x00}}).has_value()); // IPv6
}
