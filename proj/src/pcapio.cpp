#include "hmx/pcapio.hpp"

#include "hmx/util.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

namespace hmx {

namespace {

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint16_t get_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> global_header() {
    std::vector<std::uint8_t> h;
    put_u32le(h, kPcapMagic);
    put_u16le(h, 2); // version major
    put_u16le(h, 4); // version minor
    put_u32le(h, 0); // thiszone
    put_u32le(h, 0); // sigfigs
    put_u32le(h, 65535); // snaplen
    put_u32le(h, kLinkTypeRawIp);
    return h;
}

} // namespace

std::uint16_t internet_checksum(std::span<const std::uint8_t> data) {
    std::uint32_t sum = 0;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) {
        sum += static_cast<std::uint32_t>(data[i]) << 8 | data[i + 1];
    }
    if (i < data.size()) {
        sum += static_cast<std::uint32_t>(data[i]) << 8;
    }
    while (sum >> 16) {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    return static_cast<std::uint16_t>(~sum & 0xffff);
}

// --------------------------------------------------------------------------
// Writer

void PcapWriter::open(const std::filesystem::path& path) {
    close();
    path_ = path;
    failed_ = false;
    bool append = false;
    std::error_code ec;
    if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) >= 24) {
        std::ifstream probe(path, std::ios::binary);
        std::uint8_t magic[4]{};
        probe.read(reinterpret_cast<char*>(magic), 4);
        if (probe.gcount() == 4 && get_u32le(magic) == kPcapMagic) {
            append = true;
        }
    }
    file_.open(path, append ? (std::ios::binary | std::ios::app)
                            : (std::ios::binary | std::ios::trunc));
    if (!file_) {
        throw std::runtime_error("cannot open capture file for writing: " + path.string());
    }
    if (!append) {
        auto h = global_header();
        file_.write(reinterpret_cast<const char*>(h.data()),
                    static_cast<std::streamsize>(h.size()));
        if (!file_) {
            failed_ = true;
            throw std::runtime_error("write failed on capture file: " + path.string());
        }
    }
}

void PcapWriter::write(Micros ts, std::span<const std::uint8_t> packet) {
    if (!file_.is_open() || failed_) {
        return;
    }
    std::vector<std::uint8_t> rec;
    rec.reserve(16 + packet.size());
    put_u32le(rec, static_cast<std::uint32_t>(ts / kMicrosPerSecond));
    put_u32le(rec, static_cast<std::uint32_t>(ts % kMicrosPerSecond));
    put_u32le(rec, static_cast<std::uint32_t>(packet.size()));
    put_u32le(rec, static_cast<std::uint32_t>(packet.size()));
    rec.insert(rec.end(), packet.begin(), packet.end());
    file_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    if (!file_) {
        failed_ = true;
    }
}

void PcapWriter::flush() {
    if (file_.is_open()) {
        file_.flush();
        if (!file_) {
            failed_ = true;
        }
    }
}

void PcapWriter::close() {
    if (file_.is_open()) {
        file_.close();
    }
}

std::vector<PcapPacket> read_pcap_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MalformedCapture("cannot open capture file: " + path.string());
    }
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 24) {
        throw MalformedCapture(path.string() + ": truncated global header");
    }
    const std::uint32_t raw_magic = get_u32le(buf.data());
    bool swapped = false;
    if (raw_magic == kPcapMagic) {
        swapped = false;
    } else if (raw_magic == 0xd4c3b2a1u) {
        swapped = true;
    } else {
        throw MalformedCapture(path.string() + ": bad magic number");
    }
    auto rd16 = [&](std::size_t off) -> std::uint16_t {
        std::uint16_t v = get_u16le(buf.data() + off);
        if (swapped) {
            v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
        }
        return v;
    };
    auto rd32 = [&](std::size_t off) -> std::uint32_t {
        std::uint32_t v = get_u32le(buf.data() + off);
        if (swapped) {
            v = ((v >> 24) & 0xff) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) |
                ((v << 24) & 0xff000000u);
        }
        return v;
    };
    if (rd16(4) != 2 || rd16(6) != 4) {
        throw MalformedCapture(path.string() + ": unsupported container version");
    }
    std::vector<PcapPacket> out;
    std::size_t off = 24;
    while (off < buf.size()) {
        if (off + 16 > buf.size()) {
            throw MalformedCapture(path.string() + ": truncated packet header");
        }
        const std::uint32_t ts_sec = rd32(off);
        const std::uint32_t ts_usec = rd32(off + 4);
        const std::uint32_t incl = rd32(off + 8);
        off += 16;
        if (incl > 0x4000000u || off + incl > buf.size()) {
            throw MalformedCapture(path.string() + ": truncated packet body");
        }
        PcapPacket pkt;
        pkt.ts = static_cast<Micros>(ts_sec) * kMicrosPerSecond + ts_usec;
        pkt.data.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                        buf.begin() + static_cast<std::ptrdiff_t>(off + incl));
        out.push_back(std::move(pkt));
        off += incl;
    }
    return out;
}

// --------------------------------------------------------------------------
// Synthesized TCP

TcpStreamSynth::TcpStreamSynth(TcpEndpoints ep, std::uint32_t client_isn, std::uint32_t server_isn)
    : ep_(ep), client_seq_(client_isn), server_seq_(server_isn) {}

std::vector<std::uint8_t> TcpStreamSynth::segment(Direction dir, std::uint8_t flags,
                                                  std::span<const std::uint8_t> payload) {
    const bool inbound = dir == Direction::Inbound;
    const std::uint32_t src_ip = inbound ? ep_.client_ip : ep_.server_ip;
    const std::uint32_t dst_ip = inbound ? ep_.server_ip : ep_.client_ip;
    const std::uint16_t src_port = inbound ? ep_.client_port : ep_.server_port;
    const std::uint16_t dst_port = inbound ? ep_.server_port : ep_.client_port;
    const std::uint32_t seq = inbound ? client_seq_ : server_seq_;
    const std::uint32_t ack = inbound ? server_seq_ : client_seq_;

    std::vector<std::uint8_t> tcp;
    tcp.reserve(20 + payload.size());
    put_u16be(tcp, src_port);
    put_u16be(tcp, dst_port);
    put_u32be(tcp, seq);
    put_u32be(tcp, (flags & kTcpAck) ? ack : 0);
    tcp.push_back(0x50); // data offset 5 words, no options
    tcp.push_back(flags);
    put_u16be(tcp, 65535); // window
    put_u16be(tcp, 0);     // checksum placeholder
    put_u16be(tcp, 0);     // urgent pointer
    tcp.insert(tcp.end(), payload.begin(), payload.end());

    // Checksum over pseudo-header + TCP segment.
    std::vector<std::uint8_t> pseudo;
    pseudo.reserve(12 + tcp.size());
    put_u32be(pseudo, src_ip);
    put_u32be(pseudo, dst_ip);
    pseudo.push_back(0);
    pseudo.push_back(6); // protocol TCP
    put_u16be(pseudo, static_cast<std::uint16_t>(tcp.size()));
    pseudo.insert(pseudo.end(), tcp.begin(), tcp.end());
    const std::uint16_t tcp_sum = internet_checksum(pseudo);
    tcp[16] = static_cast<std::uint8_t>(tcp_sum >> 8);
    tcp[17] = static_cast<std::uint8_t>(tcp_sum & 0xff);

    std::vector<std::uint8_t> ip;
    ip.reserve(20 + tcp.size());
    ip.push_back(0x45); // IPv4, 20-byte header
    ip.push_back(0);    // TOS
    put_u16be(ip, static_cast<std::uint16_t>(20 + tcp.size()));
    put_u16be(ip, ip_id_++);
    put_u16be(ip, 0x4000); // don't fragment
    ip.push_back(64);      // TTL
    ip.push_back(6);       // protocol TCP
    put_u16be(ip, 0);      // header checksum placeholder
    put_u32be(ip, src_ip);
    put_u32be(ip, dst_ip);
    const std::uint16_t ip_sum = internet_checksum(std::span<const std::uint8_t>(ip.data(), 20));
    ip[10] = static_cast<std::uint8_t>(ip_sum >> 8);
    ip[11] = static_cast<std::uint8_t>(ip_sum & 0xff);
    ip.insert(ip.end(), tcp.begin(), tcp.end());
    return ip;
}

std::vector<std::vector<std::uint8_t>> TcpStreamSynth::open() {
    std::vector<std::vector<std::uint8_t>> pkts;
    pkts.push_back(segment(Direction::Inbound, kTcpSyn, {}));
    client_seq_ += 1; // SYN consumes one sequence number
    pkts.push_back(segment(Direction::Outbound, kTcpSyn | kTcpAck, {}));
    server_seq_ += 1;
    pkts.push_back(segment(Direction::Inbound, kTcpAck, {}));
    return pkts;
}

std::vector<std::vector<std::uint8_t>> TcpStreamSynth::syn_only() {
    std::vector<std::vector<std::uint8_t>> pkts;
    pkts.push_back(segment(Direction::Inbound, kTcpSyn, {}));
    client_seq_ += 1;
    return pkts;
}

std::vector<std::vector<std::uint8_t>> TcpStreamSynth::data(Direction dir,
                                                            std::span<const std::uint8_t> bytes) {
    std::vector<std::vector<std::uint8_t>> pkts;
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t n = std::min(kSynthSegmentBytes, bytes.size() - off);
        pkts.push_back(segment(dir, kTcpPsh | kTcpAck, bytes.subspan(off, n)));
        if (dir == Direction::Inbound) {
            client_seq_ += static_cast<std::uint32_t>(n);
        } else {
            server_seq_ += static_cast<std::uint32_t>(n);
        }
        off += n;
    }
    return pkts;
}

std::vector<std::vector<std::uint8_t>> TcpStreamSynth::close() {
    std::vector<std::vector<std::uint8_t>> pkts;
    pkts.push_back(segment(Direction::Inbound, kTcpFin | kTcpAck, {}));
    client_seq_ += 1; // FIN consumes one sequence number
    pkts.push_back(segment(Direction::Outbound, kTcpFin | kTcpAck, {}));
    server_seq_ += 1;
    pkts.push_back(segment(Direction::Inbound, kTcpAck, {}));
    return pkts;
}

std::vector<std::vector<std::uint8_t>> TcpStreamSynth::reset() {
    std::vector<std::vector<std::uint8_t>> pkts;
    pkts.push_back(segment(Direction::Outbound, kTcpRst | kTcpAck, {}));
    return pkts;
}

// --------------------------------------------------------------------------
// Parsing and reassembly

std::optional<ParsedTcp> parse_raw_ip_tcp(const PcapPacket& pkt) {
    const auto& d = pkt.data;
    if (d.size() < 20 || (d[0] >> 4) != 4) {
        return std::nullopt;
    }
    const std::size_t ihl = static_cast<std::size_t>(d[0] & 0x0f) * 4;
    if (ihl < 20 || d.size() < ihl || d[9] != 6) {
        return std::nullopt;
    }
    std::size_t total = get_u16be(d.data() + 2);
    if (total < ihl || total > d.size()) {
        total = d.size(); // tolerate disagreeing lengths, trust the container
    }
    if (d.size() < ihl + 20) {
        return std::nullopt;
    }
    const std::uint8_t* t = d.data() + ihl;
    const std::size_t tcp_hdr = static_cast<std::size_t>(t[12] >> 4) * 4;
    if (tcp_hdr < 20 || ihl + tcp_hdr > total) {
        return std::nullopt;
    }
    ParsedTcp out;
    out.ts = pkt.ts;
    out.src_ip = get_u32be(d.data() + 12);
    out.dst_ip = get_u32be(d.data() + 16);
    out.src_port = get_u16be(t);
    out.dst_port = get_u16be(t + 2);
    out.seq = get_u32be(t + 4);
    out.ack = get_u32be(t + 8);
    out.flags = t[13];
    out.payload.assign(d.begin() + static_cast<std::ptrdiff_t>(ihl + tcp_hdr),
                       d.begin() + static_cast<std::ptrdiff_t>(total));
    return out;
}

namespace {

std::string flow_key(std::uint32_t ip1, std::uint16_t p1, std::uint32_t ip2, std::uint16_t p2) {
    // Normalized so both directions map to the same key.
    char buf[48];
    if (ip1 < ip2 || (ip1 == ip2 && p1 <= p2)) {
        std::snprintf(buf, sizeof(buf), "%08x:%04x-%08x:%04x", ip1, p1, ip2, p2);
    } else {
        std::snprintf(buf, sizeof(buf), "%08x:%04x-%08x:%04x", ip2, p2, ip1, p1);
    }
    return buf;
}

std::vector<std::uint8_t> assemble_dir(const std::optional<std::uint32_t>& isn,
                                       const std::map<std::uint32_t, std::vector<std::uint8_t>>& segs) {
    std::vector<std::uint8_t> out;
    if (segs.empty()) {
        return out;
    }
    std::uint32_t base = isn ? *isn + 1 : segs.begin()->first;
    // Order by offset relative to the stream base; unsigned arithmetic keeps
    // this correct across the 32-bit wrap as long as streams stay well under
    // 2 GiB, which holds at this scale.
    std::vector<std::pair<std::uint32_t, const std::vector<std::uint8_t>*>> ordered;
    ordered.reserve(segs.size());
    for (const auto& [seq, bytes] : segs) {
        ordered.emplace_back(seq - base, &bytes);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [off, bytes] : ordered) {
        const std::size_t cur = out.size();
        if (off >= cur) {
            // Gap (lost segment) or exact continuation: append as-is.
            out.insert(out.end(), bytes->begin(), bytes->end());
        } else {
            const std::size_t overlap = cur - off;
            if (overlap < bytes->size()) {
                out.insert(out.end(), bytes->begin() + static_cast<std::ptrdiff_t>(overlap),
                           bytes->end());
            }
            // Fully duplicated segment: first arrival wins, drop it.
        }
    }
    return out;
}

} // namespace

void StreamAssembler::add(const ParsedTcp& pkt) {
    const std::string key = flow_key(pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port);
    auto [it, inserted] = flows_.try_emplace(key);
    FlowState& f = it->second;
    if (inserted) {
        f.a_ip = pkt.src_ip;
        f.a_port = pkt.src_port;
        f.b_ip = pkt.dst_ip;
        f.b_port = pkt.dst_port;
        f.first_ts = pkt.ts;
        f.last_ts = pkt.ts;
        f.order = next_order_++;
    } else {
        f.first_ts = std::min(f.first_ts, pkt.ts);
        f.last_ts = std::max(f.last_ts, pkt.ts);
    }
    const bool from_a = pkt.src_ip == f.a_ip && pkt.src_port == f.a_port;
    DirState& dir = from_a ? f.from_a : f.from_b;
    if (pkt.flags & kTcpSyn) {
        dir.syn_seen = true;
        dir.isn = pkt.seq;
        if (!(pkt.flags & kTcpAck)) {
            // Plain SYN identifies the connection initiator.
            f.a_is_client = from_a;
            f.client_known = true;
        } else if (!f.client_known) {
            f.a_is_client = !from_a; // SYN-ACK sender is the server
            f.client_known = true;
        }
        return; // SYN segments carry no stream payload here
    }
    if (!pkt.payload.empty()) {
        dir.segments.emplace(pkt.seq, pkt.payload);
    }
}

std::vector<AssembledFlow> StreamAssembler::finish() {
    std::vector<const FlowState*> ordered;
    ordered.reserve(flows_.size());
    for (const auto& [key, f] : flows_) {
        ordered.push_back(&f);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const FlowState* a, const FlowState* b) { return a->order < b->order; });
    std::vector<AssembledFlow> out;
    out.reserve(ordered.size());
    for (const FlowState* f : ordered) {
        AssembledFlow flow;
        const bool a_client = f->a_is_client;
        flow.client_ip = a_client ? f->a_ip : f->b_ip;
        flow.client_port = a_client ? f->a_port : f->b_port;
        flow.server_ip = a_client ? f->b_ip : f->a_ip;
        flow.server_port = a_client ? f->b_port : f->a_port;
        flow.first_ts = f->first_ts;
        flow.last_ts = f->last_ts;
        const DirState& from_client = a_client ? f->from_a : f->from_b;
        const DirState& from_server = a_client ? f->from_b : f->from_a;
        flow.handshake_complete = from_client.syn_seen && from_server.syn_seen;
        flow.client_payload = assemble_dir(from_client.isn, from_client.segments);
        flow.server_payload = assemble_dir(from_server.isn, from_server.segments);
        out.push_back(std::move(flow));
    }
    return out;
}

} // namespace hmx
