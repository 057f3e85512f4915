#pragma once

#include "hmx/registry.hpp"
#include "hmx/sau.hpp"
#include "hmx/time.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmx {

// ---------------------------------------------------------------------------
// Campaign plans: deterministic attacker scripts aimed at the deployment.

enum class Behavior {
    PortScan,            // connect, send nothing, close
    HttpProbe,           // one anonymous GET /
    Bruteforce,          // walk the dictionary until a login succeeds
    CuriousBrowser,      // anonymous probe + exactly three credentialed requests
    LowInteractionBounce // one anonymous GET, then leave
};

std::string to_string(Behavior b);
Behavior behavior_from_string(const std::string& text); // throws std::invalid_argument

struct AttackerScript {
    std::string script_id;
    Behavior behavior{Behavior::HttpProbe};
    std::string source_ip_label;         // attacker address written into captures
    std::vector<Credential> dictionary;  // required non-empty for bruteforce
    std::string user_agent;              // "" = behavior default ("-" = omit header)
    double dwell_seconds{0.0};           // connection open time (first to last packet)
    std::uint64_t seed{0};
};

struct CampaignEntry {
    std::string script_id;
    std::string wormhole_id;
    std::uint16_t public_port{0};
    double start_offset_seconds{0.0};
    int repeat{1};
    bool vary_source{false}; // distinct source address per repetition
};

struct CampaignPlan {
    std::string plan_id{"campaign"};
    std::uint64_t seed{1};
    Micros base_ts{0};                  // timestamp origin of synthetic captures
    double jitter_seconds{0.0};         // uniform +/- jitter applied to dwell
    double repeat_spacing_seconds{0.1}; // start stagger between repetitions
    std::vector<AttackerScript> scripts;
    std::vector<CampaignEntry> entries;
};

class PlanError : public std::runtime_error {
public:
    explicit PlanError(const std::string& what) : std::runtime_error(what) {}
};

class TargetUnreachable : public std::runtime_error {
public:
    explicit TargetUnreachable(const std::string& what) : std::runtime_error(what) {}
};

CampaignPlan parse_plan_text(const std::string& text, const std::string& origin);
CampaignPlan load_plan_file(const std::filesystem::path& path);
std::string serialize_plan(const CampaignPlan& plan);

// Bundled factory-default credential list (well-known router/camera/DVR
// passwords, including the botnet staples such as root:xc3511). Under 100
// entries so dictionary runs stay fast.
const std::vector<Credential>& default_credential_dictionary();

// ---------------------------------------------------------------------------
// Plan expansion: one elaborated element per attacker connection.

struct PlannedRequest {
    std::string method;
    std::string path;
    std::string user_agent; // "" = omit the header
    std::optional<Credential> credential;
    std::string body;
    std::string content_type;
    double at_offset_seconds{0.0}; // from connection start
    int expect_status{0};          // status the decoy will return
};

struct PlannedConn {
    std::string script_id;
    Behavior behavior{Behavior::HttpProbe};
    std::string source_ip;
    std::uint16_t source_port{0};
    std::string wormhole_id;
    std::uint16_t public_port{0};
    std::optional<std::string> device_id; // resolved mapping, if any
    Micros start_ts{0};
    double duration_seconds{0.0}; // dwell with jitter applied
    std::vector<PlannedRequest> requests;
};

// Deterministic: identical (plan, topology) inputs yield identical output.
// Throws PlanError for dangling script references, empty bruteforce
// dictionaries, or HTTP behaviors aimed at non-HTTP devices.
std::vector<PlannedConn> expand_plan(const CampaignPlan& plan, const Topology& topo);

// "a.b.c.d" + k (32-bit wrap), used by vary_source.
std::string derive_source_ip(const std::string& base, std::uint32_t k);

// Request bytes exactly as the live client sends them (synthetic captures
// embed the same bytes, so both paths parse identically).
std::vector<std::uint8_t> render_request(const PlannedRequest& req, const std::string& host);
std::vector<std::uint8_t> render_response(const PlannedRequest& req);

// ---------------------------------------------------------------------------
// Synthetic execution: fabricate capture files without running anything.

void synthesize_captures(const std::vector<PlannedConn>& conns, const Topology& topo,
                         const std::filesystem::path& captures_dir);

// Analytic replay: the connection records the capture/ingest path would
// produce, derived straight from the plan.
std::vector<ConnectionRecord> replay_records(const std::vector<PlannedConn>& conns);

// ---------------------------------------------------------------------------
// Ground-truth manifest.

// Byte-stable for a fixed (plan, topology, geo): counts, flags, successes and
// all five distribution tables, computed by the same analytics the pipeline
// applies to real captures.
nlohmann::ordered_json build_manifest(const CampaignPlan& plan,
                                      const std::vector<PlannedConn>& conns,
                                      const Topology& topo, const GeoTable* geo);

void write_manifest(const nlohmann::ordered_json& manifest, const std::filesystem::path& path);
nlohmann::ordered_json load_manifest(const std::filesystem::path& path);

// Human-readable mismatch list; empty means the analysis reproduces the
// manifest exactly.
std::vector<std::string> compare_manifest(const nlohmann::ordered_json& manifest,
                                          const Analysis& analysis);

// ---------------------------------------------------------------------------
// Live execution against a running deployment.

struct LiveRunOptions {
    const Topology* topology{nullptr}; // resolves wormhole bind addresses
    double time_scale{0.0};            // scale plan offsets/dwell (0 = flat out)
    int max_parallel{8};
    int connect_timeout_ms{3000};
    std::filesystem::path labels_csv; // "" = skip writing the label map
};

struct LiveRunStats {
    std::size_t connections{0};
    std::size_t requests{0};
    std::size_t status_mismatches{0}; // responses that differ from the plan
};

// Runs every planned connection as a real TCP client. Local endpoints are
// recorded into the label map so ingest can restore the planned source
// addresses. Throws TargetUnreachable on connect failure (in-flight
// connections finish; completed labels are still written).
LiveRunStats run_campaign_live(const std::vector<PlannedConn>& conns, const LiveRunOptions& opt);

void write_label_map(const std::map<std::string, std::string>& labels,
                     const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Periodic device resets.

class ResetScheduler {
public:
    // Returns false when the device is unreachable (logged, retried on the
    // next tick).
    using ResetFn = std::function<bool(const std::string& device_id)>;

    // Throws std::invalid_argument when interval <= 0.
    ResetScheduler(std::vector<std::string> device_ids, Micros interval, Clock* clock,
                   ResetFn fn, std::filesystem::path log_path = {});

    // Fires every tick due since construction: floor(elapsed / interval)
    // ticks total; each tick resets every device once. Returns the number of
    // reset invocations performed by this call.
    int poll();

    int ticks_fired() const { return ticks_fired_; }
    int resets_ok() const { return resets_ok_; }
    int resets_failed() const { return resets_failed_; }

private:
    std::vector<std::string> device_ids_;
    Micros interval_;
    Clock* clock_;
    ResetFn fn_;
    std::filesystem::path log_path_;
    Micros start_;
    int ticks_fired_{0};
    int resets_ok_{0};
    int resets_failed_{0};
};

// ---------------------------------------------------------------------------
// Report rendering from an analysis output directory.

struct ReportResult {
    std::vector<std::string> rendered;      // table names written
    std::vector<std::string> missing_input; // tables skipped for missing inputs
};

// One fixed-width table per analytics product (ports, cities, countries,
// devices, agents, durations, listing impact) plus plot-ready CSVs.
// Deterministic: identical inputs produce byte-identical files. A missing
// input marks that table MissingInput; the others still render.
ReportResult write_report(const std::filesystem::path& analysis_dir,
                          const std::filesystem::path& report_dir);

// ---------------------------------------------------------------------------
// Self-contained loopback demo deployment.

struct DemoOptions {
    std::filesystem::path work_dir;
    std::uint64_t seed{1};
    int min_connections{520};
    int max_parallel{8};
    bool quiet{false};
};

struct DemoResult {
    std::filesystem::path topology_file;
    std::filesystem::path captures_dir;
    std::filesystem::path analysis_dir;
    std::filesystem::path report_dir;
    std::filesystem::path manifest_path;
    std::size_t mappings{0};
    std::size_t connections_executed{0};
    std::size_t status_mismatches{0};
    std::vector<std::string> mismatches; // manifest vs analysis; empty = exact
    double elapsed_seconds{0.0};
};

// Spins up two emulated devices, a forwarder, and five wormhole listeners on
// loopback aliases; runs a seeded campaign live through the whole stack;
// analyzes the captures and verifies the result against the campaign
// manifest.
DemoResult run_demo(const DemoOptions& opt);

// The deployment and campaign the demo uses (exposed for tests).
Topology demo_topology(std::uint16_t cam_port, std::uint16_t printer_port);
CampaignPlan demo_plan(std::uint64_t seed, int min_connections);
std::string demo_geo_csv();

} // namespace hmx
