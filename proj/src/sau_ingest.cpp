#include "hmx/sau.hpp"

#include "hmx/capture.hpp"
#include "hmx/log.hpp"
#include "hmx/util.hpp"

#include <algorithm>
#include <cstdlib>

namespace hmx {

namespace {

// Sequential cursor over one reassembled direction.
struct Cursor {
    std::span<const std::uint8_t> data;
    std::size_t pos{0};

    bool eof() const { return pos >= data.size(); }
    std::size_t remaining() const { return data.size() - pos; }

    // Reads through the next LF (tolerating bare-LF), strips CR/LF. Returns
    // nullopt when no full line is available.
    std::optional<std::string> read_line() {
        for (std::size_t i = pos; i < data.size(); ++i) {
            if (data[i] == '\n') {
                std::size_t end = i;
                if (end > pos && data[end - 1] == '\r') {
                    --end;
                }
                std::string line(reinterpret_cast<const char*>(data.data() + pos), end - pos);
                pos = i + 1;
                return line;
            }
        }
        return std::nullopt;
    }

    bool skip(std::size_t n) {
        if (remaining() < n) {
            pos = data.size();
            return false;
        }
        pos += n;
        return true;
    }
};

const char* kMethods[] = {"GET",     "POST",  "PUT",   "DELETE", "HEAD",
                          "OPTIONS", "PATCH", "TRACE", "CONNECT"};

bool known_method(const std::string& m) {
    return std::any_of(std::begin(kMethods), std::end(kMethods),
                       [&](const char* k) { return m == k; });
}

using HeaderMap = std::map<std::string, std::string>; // lower-cased names

// Reads header lines until the blank separator. Returns false on truncation.
bool read_headers(Cursor& cur, HeaderMap& out) {
    while (true) {
        const auto line = cur.read_line();
        if (!line) {
            return false;
        }
        if (line->empty()) {
            return true;
        }
        const auto colon = line->find(':');
        if (colon == std::string::npos) {
            continue; // tolerate malformed header lines
        }
        out[to_lower(trim(line->substr(0, colon)))] = trim(line->substr(colon + 1));
    }
}

// Consumes a chunked-encoded body; best-effort on truncation.
void skip_chunked(Cursor& cur) {
    while (true) {
        const auto size_line = cur.read_line();
        if (!size_line) {
            return;
        }
        const unsigned long size = std::strtoul(size_line->c_str(), nullptr, 16);
        if (size == 0) {
            // Trailer section: lines until the final blank.
            while (true) {
                const auto t = cur.read_line();
                if (!t || t->empty()) {
                    return;
                }
            }
        }
        if (!cur.skip(size)) {
            return;
        }
        cur.read_line(); // CRLF after the chunk data
    }
}

void skip_body(Cursor& cur, const HeaderMap& headers, bool to_eof_allowed) {
    if (const auto it = headers.find("transfer-encoding");
        it != headers.end() && icontains(it->second, "chunked")) {
        skip_chunked(cur);
        return;
    }
    if (const auto it = headers.find("content-length"); it != headers.end()) {
        cur.skip(static_cast<std::size_t>(std::strtoull(it->second.c_str(), nullptr, 10)));
        return;
    }
    if (to_eof_allowed) {
        cur.pos = cur.data.size(); // close-delimited body swallows the rest
    }
}

struct RequestView {
    std::string method;
    std::string path;
    std::optional<std::string> user_agent;
    std::optional<std::pair<std::string, std::string>> credentials;
};

std::vector<RequestView> parse_requests(std::span<const std::uint8_t> bytes) {
    std::vector<RequestView> out;
    Cursor cur{bytes};
    while (!cur.eof() && out.size() < 100000) {
        const std::size_t mark = cur.pos;
        const auto line = cur.read_line();
        if (!line) {
            break;
        }
        if (line->empty()) {
            continue; // stray blank between pipelined requests
        }
        const auto parts = split(*line, ' ');
        if (parts.size() != 3 || !known_method(parts[0]) || parts[2].rfind("HTTP/", 0) != 0) {
            cur.pos = mark;
            break; // not HTTP (or garbage): stop parsing this direction
        }
        HeaderMap headers;
        if (!read_headers(cur, headers)) {
            // Truncated mid-headers: still record the request line.
            RequestView r;
            r.method = parts[0];
            r.path = parts[1];
            out.push_back(std::move(r));
            break;
        }
        RequestView r;
        r.method = parts[0];
        r.path = parts[1];
        if (const auto it = headers.find("user-agent"); it != headers.end()) {
            r.user_agent = it->second;
        }
        if (const auto it = headers.find("authorization"); it != headers.end()) {
            const std::string& v = it->second;
            if (v.size() > 6 && to_lower(v.substr(0, 6)) == "basic ") {
                if (const auto decoded = base64_decode(trim(v.substr(6)))) {
                    const std::string pair(decoded->begin(), decoded->end());
                    const auto colon = pair.find(':');
                    if (colon != std::string::npos) {
                        r.credentials = {pair.substr(0, colon), pair.substr(colon + 1)};
                    }
                }
            }
        }
        out.push_back(std::move(r));
        skip_body(cur, headers, /*to_eof_allowed=*/false);
    }
    return out;
}

std::vector<int> parse_response_statuses(std::span<const std::uint8_t> bytes) {
    std::vector<int> out;
    Cursor cur{bytes};
    while (!cur.eof() && out.size() < 100000) {
        const auto line = cur.read_line();
        if (!line) {
            break;
        }
        if (line->empty()) {
            continue;
        }
        if (line->rfind("HTTP/", 0) != 0) {
            break; // not an HTTP response stream
        }
        const auto parts = split(*line, ' ');
        if (parts.size() < 2) {
            break;
        }
        const int status = std::atoi(parts[1].c_str());
        if (status < 100 || status > 599) {
            break;
        }
        HeaderMap headers;
        if (!read_headers(cur, headers)) {
            out.push_back(status); // truncated after the status line still counts
            break;
        }
        out.push_back(status);
        if (status >= 100 && status < 200) {
            continue; // interim response, no body
        }
        if (status == 204 || status == 304) {
            continue;
        }
        skip_body(cur, headers, /*to_eof_allowed=*/true);
    }
    return out;
}

} // namespace

std::vector<HttpTransaction> parse_http_stream(std::span<const std::uint8_t> client_bytes,
                                               std::span<const std::uint8_t> server_bytes) {
    const auto requests = parse_requests(client_bytes);
    if (requests.empty()) {
        return {};
    }
    const auto statuses = parse_response_statuses(server_bytes);
    std::vector<HttpTransaction> out;
    out.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
        HttpTransaction txn;
        txn.method = requests[i].method;
        txn.path = requests[i].path;
        txn.user_agent = requests[i].user_agent;
        if (i < statuses.size()) {
            txn.response_status = statuses[i];
        }
        if (requests[i].credentials) {
            AuthView auth;
            auth.username = requests[i].credentials->first;
            auth.password = requests[i].credentials->second;
            auth.success = txn.response_status && *txn.response_status >= 200 &&
                           *txn.response_status < 300;
            txn.auth = auth;
        }
        out.push_back(std::move(txn));
    }
    return out;
}

IngestResult ingest_captures(const std::vector<std::filesystem::path>& files,
                             const IngestOptions& opt) {
    IngestResult out;
    std::vector<std::filesystem::path> ordered = files;
    std::sort(ordered.begin(), ordered.end());
    for (const auto& file : ordered) {
        std::vector<PcapPacket> packets;
        try {
            packets = read_pcap_file(file);
        } catch (const MalformedCapture& ex) {
            out.rejected_files.push_back(ex.what());
            log_warn("sau", std::string("skipping capture: ") + ex.what());
            continue;
        }
        ++out.files_ok;
        const std::string wormhole_id = capture_id_from_filename(file);
        StreamAssembler assembler;
        for (const auto& pkt : packets) {
            if (const auto tcp = parse_raw_ip_tcp(pkt)) {
                assembler.add(*tcp);
            }
        }
        for (auto& flow : assembler.finish()) {
            if (!flow.handshake_complete) {
                ++out.syn_only_probes;
                continue;
            }
            ConnectionRecord rec;
            rec.remote_ip = format_ipv4(flow.client_ip);
            rec.remote_port = flow.client_port;
            const std::string key = rec.remote_ip + ":" + std::to_string(rec.remote_port);
            if (const auto it = opt.label_map.find(key); it != opt.label_map.end()) {
                rec.remote_ip = it->second;
            }
            rec.wormhole_id = wormhole_id;
            rec.wormhole_port = flow.server_port;
            rec.first_ts = flow.first_ts;
            rec.last_ts = flow.last_ts;
            rec.bytes_in = flow.client_payload.size();
            rec.bytes_out = flow.server_payload.size();
            bool try_http = true;
            if (opt.topology) {
                if (const auto* m = find_mapping(*opt.topology, wormhole_id, flow.server_port)) {
                    rec.device_id = m->device_id;
                    if (const auto* dev = opt.topology->find_device(m->device_id);
                        dev && dev->service_protocol == ServiceProtocol::RawTcp) {
                        try_http = false;
                    }
                }
            }
            if (try_http) {
                rec.http_transactions =
                    parse_http_stream(flow.client_payload, flow.server_payload);
            }
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace hmx
