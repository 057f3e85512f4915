#pragma once

#include "hmx/util.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hmx {

enum class Difficulty { Default, Easy, Hard };
enum class ServiceProtocol { Http, RawTcp };

std::string to_string(Difficulty d);
std::string to_string(ServiceProtocol p);
Difficulty difficulty_from_string(const std::string& s);
ServiceProtocol service_protocol_from_string(const std::string& s);

struct Credential {
    std::string username;
    std::string password;
    bool operator==(const Credential&) const = default;
};

struct DeviceSpec {
    std::string device_id;
    std::string model_name;
    HostPort local_endpoint;
    Credential credential;
    Difficulty difficulty{Difficulty::Default};
    ServiceProtocol service_protocol{ServiceProtocol::Http};
};

struct WormholeSpec {
    std::string wormhole_id;
    std::string bind_address;
    std::string city;
    std::string country;
    std::string provider;
    std::set<std::uint16_t> listen_ports;
};

struct PortMapping {
    std::string wormhole_id;
    std::uint16_t public_port{0};
    std::string device_id;
    std::uint16_t device_port{0};
};

enum class TopologyErrorCode {
    DuplicateId,
    PortSpaceExhausted,
    NoSuchMapping,
    BadReference,
    InvalidField,
};

class TopologyError : public std::runtime_error {
public:
    TopologyError(TopologyErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    TopologyErrorCode code() const { return code_; }

private:
    TopologyErrorCode code_;
};

// Immutable after construction/loading; safe to share read-only across
// concurrent relays.
struct Topology {
    std::vector<DeviceSpec> devices;     // count n
    std::vector<WormholeSpec> wormholes; // count m
    std::vector<PortMapping> mappings;
    int max_connections_per_device{16};

    const DeviceSpec* find_device(const std::string& device_id) const;
    const WormholeSpec* find_wormhole(const std::string& wormhole_id) const;

    // Built by finalize(); validate_topology() and the loaders call it.
    void finalize();

private:
    std::unordered_map<std::string, std::size_t> device_index_;
    std::unordered_map<std::string, std::size_t> wormhole_index_;
    std::unordered_map<std::string, std::size_t> mapping_index_; // "<wormhole>\n<port>"
    friend struct ResolveResult;
    friend const PortMapping* find_mapping(const Topology&, const std::string&, std::uint16_t);
};

const PortMapping* find_mapping(const Topology& topo, const std::string& wormhole_id,
                                std::uint16_t public_port);

// Per-wormhole cap; kept below 65535 so the agent's own control ports have
// headroom.
constexpr std::size_t kMaxPortsPerWormhole = 65000;

// Round-robin assignment of devices over wormholes, deterministic given input
// order. Replica r of device i lands on wormhole (i + r) mod m; public ports
// ascend from base_port per wormhole, skipping ports already listened on.
Topology build_topology(std::vector<DeviceSpec> devices, std::vector<WormholeSpec> wormholes,
                        int replication_factor, std::uint16_t base_port,
                        int max_connections_per_device = 16);

std::size_t exposed_service_count(const Topology& topo);

struct ResolveResult {
    std::string device_id;
    HostPort endpoint;
};

// Throws TopologyError(NoSuchMapping) for unmapped (wormhole, port) pairs.
ResolveResult resolve(const Topology& topo, const std::string& wormhole_id,
                      std::uint16_t public_port);

// Checks every Topology invariant; throws TopologyError on the first
// violation. Also finalizes the lookup index.
void validate_topology(Topology& topo);

std::string serialize_topology(const Topology& topo);
Topology parse_topology_text(const std::string& text, const std::string& origin);
Topology load_topology_file(const std::filesystem::path& path);
void save_topology_file(const Topology& topo, const std::filesystem::path& path);

// Known device models with their shipped passwords and difficulty tier. Specs
// whose model_name matches a row must carry the same difficulty label.
struct CredentialTier {
    std::string model;
    std::string password;
    Difficulty difficulty;
};

std::span<const CredentialTier> credential_tier_table();

} // namespace hmx
