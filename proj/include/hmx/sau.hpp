#pragma once

#include "hmx/pcapio.hpp"
#include "hmx/registry.hpp"
#include "hmx/time.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hmx {

// ---------------------------------------------------------------------------
// Connection records (ingest output)

struct AuthView {
    std::string username;
    std::string password;
    bool success{false}; // 2xx response with credentials present
};

struct HttpTransaction {
    std::string method;
    std::string path;
    std::optional<std::string> user_agent;
    std::optional<AuthView> auth;        // decoded Basic credentials, when presented
    std::optional<int> response_status;  // absent when the response never arrived
};

struct ConnectionRecord {
    std::string remote_ip;
    std::uint16_t remote_port{0};
    std::string wormhole_id;
    std::uint16_t wormhole_port{0};
    std::optional<std::string> device_id; // empty for unmapped/log-only ports
    Micros first_ts{0};
    Micros last_ts{0};
    std::uint64_t bytes_in{0};  // attacker -> wormhole
    std::uint64_t bytes_out{0}; // wormhole -> attacker
    std::vector<HttpTransaction> http_transactions;
};

struct IngestOptions {
    const Topology* topology{nullptr}; // enables device attribution
    // Live loopback runs tag sources by ephemeral port; this maps
    // "<ip>:<port>" of the raw capture endpoint to the attacker label IP.
    std::map<std::string, std::string> label_map;
};

struct IngestResult {
    std::vector<ConnectionRecord> records;
    std::vector<std::string> rejected_files; // malformed captures, skipped
    std::size_t files_ok{0};
    std::size_t syn_only_probes{0}; // handshake-less flows, not records
};

// One record per completed TCP connection across all capture files; TCP
// payload is reassembled in sequence order and parsed as HTTP where it looks
// like HTTP. Malformed files are skipped and reported, not fatal.
IngestResult ingest_captures(const std::vector<std::filesystem::path>& files,
                             const IngestOptions& opt);

// Request/response pairing over one connection's two reassembled directions.
std::vector<HttpTransaction> parse_http_stream(std::span<const std::uint8_t> client_bytes,
                                               std::span<const std::uint8_t> server_bytes);

// ---------------------------------------------------------------------------
// Sessions and brute-force detection

struct Session {
    std::string remote_ip;
    std::string wormhole_id;
    std::uint16_t wormhole_port{0};
    std::optional<std::string> device_id;
    std::vector<std::size_t> members; // indexes into the record vector, by first_ts
    std::size_t login_attempts{0};    // transactions presenting credentials
    std::size_t login_successes{0};
    Micros first_ts{0};
    Micros last_ts{0};

    double duration_seconds() const {
        return static_cast<double>(last_ts - first_ts) / static_cast<double>(kMicrosPerSecond);
    }
};

constexpr std::int64_t kDefaultSessionGapSeconds = 300;

// Partition of records keyed by (remote_ip, wormhole_id, wormhole_port),
// split where the idle gap between consecutive records exceeds the timeout.
std::vector<Session> sessionize(const std::vector<ConnectionRecord>& records,
                                std::int64_t gap_timeout_seconds = kDefaultSessionGapSeconds);

struct BruteforceReport {
    std::vector<std::size_t> flagged;    // session indexes with login_attempts > 3
    std::vector<std::size_t> successful; // session indexes with >= 1 successful login
};

BruteforceReport detect_bruteforce(const std::vector<Session>& sessions);

// ---------------------------------------------------------------------------
// User-agent classification

// Ordered first-match substring rules (case-insensitive):
// masscan, scanbot, wget, curl, python, Chrome, Mozilla; anything else
// (including a missing agent) is Other.
std::string classify_agent(const std::optional<std::string>& user_agent);

// Shell-probe heuristic: function-definition prologue smuggled in a header.
bool is_shellshock_probe(const std::string& header_value);

// ---------------------------------------------------------------------------
// Geolocation

struct GeoRange {
    std::uint32_t lo{0};
    std::uint32_t hi{0}; // inclusive
    std::string country;
    std::string city;
};

class GeoTable {
public:
    GeoTable() = default;
    // Throws std::runtime_error on parse errors or overlapping ranges.
    static GeoTable from_csv_text(const std::string& text, const std::string& origin);
    static GeoTable load_csv(const std::filesystem::path& path);

    const GeoRange* lookup(std::uint32_t ip) const;
    const GeoRange* lookup(const std::string& dotted) const;
    std::size_t size() const { return ranges_.size(); }

private:
    std::vector<GeoRange> ranges_; // sorted by lo, non-overlapping
};

// ---------------------------------------------------------------------------
// Distributions

enum class Dimension { City, Port, Country, Device, Agent };

std::string to_string(Dimension d);

struct DistributionRow {
    std::string category;
    std::size_t count{0};
    double share{0.0};
};

// Counts sum to records.size(); shares sum to 1 (empty input: empty table).
// City comes from the record's wormhole, country from the remote IP via the
// geo table (Unknown bin), device from the mapping (Unmapped bin), agent from
// the first transaction's user agent.
std::vector<DistributionRow> aggregate(const std::vector<ConnectionRecord>& records,
                                       const Topology* topology, const GeoTable* geo,
                                       Dimension dimension);

// ---------------------------------------------------------------------------
// Listing impact

struct ListingEvent {
    std::string wormhole_id;
    Micros listed_at{0};
};

// Loads "wormhole_id,listed_at" CSV (ISO-8601 or epoch-seconds timestamps).
std::vector<ListingEvent> load_listing_events(const std::filesystem::path& path);

struct ListingImpactRow {
    std::string wormhole_id;
    std::uint64_t before_week{0};     // [listed_at - 7d, listed_at)
    std::uint64_t first_week{0};      // [listed_at, listed_at + 7d)
    std::uint64_t two_weeks{0};       // [listed_at, listed_at + 14d)
    bool insufficient_span{false};    // excluded from the averages
};

struct ListingImpact {
    std::vector<ListingImpactRow> rows; // ordered as the events were given
    double avg_before{0.0};
    double avg_first_week{0.0};
    double avg_two_weeks{0.0};
    std::size_t wormholes_averaged{0};
};

// Half-open windows pivoting on listed_at; a wormhole with records on only
// one side of its listing moment is flagged InsufficientSpan and excluded
// from the averages (a wormhole with no records at all counts as zeros).
ListingImpact listing_impact(const std::vector<ConnectionRecord>& records,
                             const std::vector<ListingEvent>& events);

// ---------------------------------------------------------------------------
// Session durations

enum class GroupBy { Device, Model };

struct DurationRow {
    std::string group;
    std::size_t sessions{0};
    double mean_seconds{0.0};
    double median_seconds{0.0};
};

// Empty groups are omitted; rows sorted by group name.
std::vector<DurationRow> duration_stats(const std::vector<Session>& sessions,
                                        const Topology* topology, GroupBy group_by);

std::size_t distinct_remotes(const std::vector<ConnectionRecord>& records);

// ---------------------------------------------------------------------------
// Record store and full-pipeline orchestration

void write_record_store(const std::vector<ConnectionRecord>& records,
                        const std::filesystem::path& records_csv,
                        const std::filesystem::path& transactions_csv);
std::vector<ConnectionRecord> read_record_store(const std::filesystem::path& records_csv,
                                                const std::filesystem::path& transactions_csv);

struct AnalyzeConfig {
    std::filesystem::path captures_dir;
    std::filesystem::path topology_file; // optional ("")
    std::filesystem::path geo_csv;       // optional
    std::filesystem::path listing_csv;   // optional
    std::filesystem::path labels_csv;    // optional: "endpoint,label" lines
    std::filesystem::path out_dir;
    std::int64_t gap_timeout_seconds{kDefaultSessionGapSeconds};
};

struct Analysis {
    IngestResult ingest;
    std::vector<Session> sessions;
    BruteforceReport bruteforce;
    std::map<Dimension, std::vector<DistributionRow>> distributions;
    std::optional<ListingImpact> listing;
    std::vector<DurationRow> durations;
    std::size_t distinct_remote_ips{0};
    std::size_t shellshock_probes{0};
    std::size_t total_login_attempts{0};
    std::size_t total_login_successes{0};
    std::int64_t gap_timeout_seconds{kDefaultSessionGapSeconds};
};

// Runs the full pipeline and (when out_dir is non-empty) writes the record
// store, one CSV per distribution, durations, listing impact, and a
// deterministic summary file.
Analysis run_analysis(const AnalyzeConfig& cfg);

std::map<std::string, std::string> load_label_map(const std::filesystem::path& path);

} // namespace hmx
