#pragma once

#include "hmx/pcapio.hpp"
#include "hmx/time.hpp"

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace hmx {

class CaptureSink;

// Per-connection capture handle. Synthesizes IPv4/TCP packets around the
// payload snapshots taken by the relay and hands them to the shared sink.
class ConnCapture {
public:
    ConnCapture(CaptureSink* sink, TcpEndpoints ep, std::uint32_t client_isn,
                std::uint32_t server_isn)
        : sink_(sink), synth_(ep, client_isn, server_isn) {}

    void on_open(Micros ts);     // full three-way handshake
    void on_syn_only(Micros ts); // lone probe, no follow-up expected
    void on_data(Micros ts, Direction dir, std::span<const std::uint8_t> bytes);
    void on_close(Micros ts); // orderly FIN exchange
    void on_reset(Micros ts); // abrupt teardown

private:
    CaptureSink* sink_;
    TcpStreamSynth synth_;
};

// Shared, thread-safe capture file manager for one listener identity.
// Files are named "<id>-YYYYMMDD.pcap" and rotate at UTC midnight based on
// the timestamps supplied by callers. A failed write (e.g. disk full) drops
// the sink into forward-only mode: relaying continues, capture stops.
class CaptureSink {
public:
    CaptureSink(std::filesystem::path dir, std::string id);

    // ISNs are derived deterministically from the endpoints and an internal
    // counter, so repeated runs produce identical captures.
    ConnCapture start_conn(TcpEndpoints ep);

    // Writes a packet batch; packets within a batch get consecutive
    // microsecond timestamps starting at ts.
    void write_batch(Micros ts, const std::vector<std::vector<std::uint8_t>>& pkts);

    void flush();
    void close();
    bool forward_only() const;
    std::filesystem::path path_for_date(const std::string& date_token) const;

private:
    void ensure_open_locked(Micros ts);

    mutable std::mutex mu_;
    std::filesystem::path dir_;
    std::string id_;
    PcapWriter writer_;
    std::string current_token_;
    std::uint64_t conn_counter_{0};
    bool forward_only_{false};
};

// Extracts the listener identity from a capture filename of the form
// "<id>-YYYYMMDD.pcap"; returns the bare stem when the suffix is absent.
std::string capture_id_from_filename(const std::filesystem::path& path);

} // namespace hmx
