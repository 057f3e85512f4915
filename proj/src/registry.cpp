#include "hmx/registry.hpp"

#include "hmx/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hmx {

std::string to_string(Difficulty d) {
    switch (d) {
    case Difficulty::Default: return "default";
    case Difficulty::Easy: return "easy";
    case Difficulty::Hard: return "hard";
    }
    return "?";
}

std::string to_string(ServiceProtocol p) {
    return p == ServiceProtocol::Http ? "http" : "raw-tcp";
}

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "default") return Difficulty::Default;
    if (s == "easy") return Difficulty::Easy;
    if (s == "hard") return Difficulty::Hard;
    throw TopologyError(TopologyErrorCode::InvalidField, "unknown difficulty '" + s + "'");
}

ServiceProtocol service_protocol_from_string(const std::string& s) {
    if (s == "http") return ServiceProtocol::Http;
    if (s == "raw-tcp") return ServiceProtocol::RawTcp;
    throw TopologyError(TopologyErrorCode::InvalidField, "unknown service_protocol '" + s + "'");
}

namespace {
std::string mapping_key(const std::string& wormhole_id, std::uint16_t port) {
    return wormhole_id + "\n" + std::to_string(port);
}
} // namespace

void Topology::finalize() {
    device_index_.clear();
    wormhole_index_.clear();
    mapping_index_.clear();
    for (std::size_t i = 0; i < devices.size(); ++i)
        device_index_.emplace(devices[i].device_id, i);
    for (std::size_t i = 0; i < wormholes.size(); ++i)
        wormhole_index_.emplace(wormholes[i].wormhole_id, i);
    for (std::size_t i = 0; i < mappings.size(); ++i)
        mapping_index_.emplace(mapping_key(mappings[i].wormhole_id, mappings[i].public_port), i);
}

const DeviceSpec* Topology::find_device(const std::string& device_id) const {
    auto it = device_index_.find(device_id);
    return it == device_index_.end() ? nullptr : &devices[it->second];
}

const WormholeSpec* Topology::find_wormhole(const std::string& wormhole_id) const {
    auto it = wormhole_index_.find(wormhole_id);
    return it == wormhole_index_.end() ? nullptr : &wormholes[it->second];
}

const PortMapping* find_mapping(const Topology& topo, const std::string& wormhole_id,
                                std::uint16_t public_port) {
    auto it = topo.mapping_index_.find(mapping_key(wormhole_id, public_port));
    return it == topo.mapping_index_.end() ? nullptr : &topo.mappings[it->second];
}

std::span<const CredentialTier> credential_tier_table() {
    static const CredentialTier table[] = {
        {"HP Pro Printer 6830", "1234567890", Difficulty::Easy},
        {"D-Link DCS-9050", "password123", Difficulty::Easy},
        {"D-Link DCS-930L", "YAQvwrjy", Difficulty::Hard},
        {"D-Link DCS-942L", "1234567890", Difficulty::Easy},
        {"Aztech WIPC409HD", "admin", Difficulty::Default},
        {"Sineoji PT603V", "9WgnTMxe", Difficulty::Hard},
        {"Trendnet Emulator", "admin", Difficulty::Easy},
        {"HikVision NVR 7604NI-E1/4P", "xDk2PKHU", Difficulty::Hard},
    };
    return table;
}

namespace {

const CredentialTier* tier_for_model(const std::string& model) {
    for (const auto& row : credential_tier_table())
        if (row.model == model)
            return &row;
    return nullptr;
}

void check_device(const DeviceSpec& d) {
    if (d.device_id.empty())
        throw TopologyError(TopologyErrorCode::InvalidField, "device with empty device_id");
    if (d.local_endpoint.port == 0)
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "device '" + d.device_id + "' local_endpoint port must be 1..65535");
    if (const CredentialTier* tier = tier_for_model(d.model_name)) {
        if (tier->difficulty != d.difficulty)
            throw TopologyError(TopologyErrorCode::InvalidField,
                                "device '" + d.device_id + "' difficulty '" +
                                    to_string(d.difficulty) + "' disagrees with the tier table ('" +
                                    to_string(tier->difficulty) + "' for " + d.model_name + ")");
    }
}

void check_wormhole(const WormholeSpec& w) {
    if (w.wormhole_id.empty())
        throw TopologyError(TopologyErrorCode::InvalidField, "wormhole with empty wormhole_id");
    if (w.listen_ports.empty())
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "wormhole '" + w.wormhole_id + "' has no listen_ports");
    if (w.listen_ports.size() >= 65536)
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "wormhole '" + w.wormhole_id + "' listen_ports too large");
    if (w.listen_ports.count(0))
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "wormhole '" + w.wormhole_id + "' lists port 0");
}

} // namespace

void validate_topology(Topology& topo) {
    std::set<std::string> device_ids;
    for (const auto& d : topo.devices) {
        check_device(d);
        if (!device_ids.insert(d.device_id).second)
            throw TopologyError(TopologyErrorCode::DuplicateId,
                                "duplicate device_id '" + d.device_id + "'");
    }
    std::set<std::string> wormhole_ids;
    for (const auto& w : topo.wormholes) {
        check_wormhole(w);
        if (!wormhole_ids.insert(w.wormhole_id).second)
            throw TopologyError(TopologyErrorCode::DuplicateId,
                                "duplicate wormhole_id '" + w.wormhole_id + "'");
    }
    if (topo.max_connections_per_device < 1)
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "max_connections_per_device must be positive");

    topo.finalize();

    std::set<std::pair<std::string, std::uint16_t>> seen_ports;
    std::set<std::pair<std::string, std::string>> seen_device_per_wormhole;
    std::unordered_map<std::string, std::size_t> ports_per_wormhole;
    for (const auto& m : topo.mappings) {
        const WormholeSpec* w = topo.find_wormhole(m.wormhole_id);
        if (!w)
            throw TopologyError(TopologyErrorCode::BadReference,
                                "mapping references unknown wormhole '" + m.wormhole_id + "'");
        const DeviceSpec* d = topo.find_device(m.device_id);
        if (!d)
            throw TopologyError(TopologyErrorCode::BadReference,
                                "mapping references unknown device '" + m.device_id + "'");
        if (!w->listen_ports.count(m.public_port))
            throw TopologyError(TopologyErrorCode::BadReference,
                                "mapping port " + std::to_string(m.public_port) +
                                    " not in listen_ports of '" + m.wormhole_id + "'");
        if (!seen_ports.insert({m.wormhole_id, m.public_port}).second)
            throw TopologyError(TopologyErrorCode::DuplicateId,
                                "duplicate mapping for (" + m.wormhole_id + ", " +
                                    std::to_string(m.public_port) + ")");
        if (!seen_device_per_wormhole.insert({m.wormhole_id, m.device_id}).second)
            throw TopologyError(TopologyErrorCode::DuplicateId,
                                "device '" + m.device_id + "' exposed twice on wormhole '" +
                                    m.wormhole_id + "'");
        if (++ports_per_wormhole[m.wormhole_id] > kMaxPortsPerWormhole)
            throw TopologyError(TopologyErrorCode::PortSpaceExhausted,
                                "wormhole '" + m.wormhole_id + "' exceeds " +
                                    std::to_string(kMaxPortsPerWormhole) + " mapped ports");
    }
    // Each (device, wormhole) pair occurs at most once, so this cannot exceed
    // n*m; keep the scan as a defense against future edits.
    if (topo.mappings.size() > topo.devices.size() * topo.wormholes.size())
        throw TopologyError(TopologyErrorCode::InvalidField, "more mappings than n*m");
}

Topology build_topology(std::vector<DeviceSpec> devices, std::vector<WormholeSpec> wormholes,
                        int replication_factor, std::uint16_t base_port,
                        int max_connections_per_device) {
    if (replication_factor < 1)
        throw TopologyError(TopologyErrorCode::InvalidField, "replication_factor must be >= 1");
    if (wormholes.empty())
        throw TopologyError(TopologyErrorCode::InvalidField, "no wormholes");
    if (static_cast<std::size_t>(replication_factor) > wormholes.size())
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "replication_factor " + std::to_string(replication_factor) +
                                " exceeds wormhole count " + std::to_string(wormholes.size()));

    Topology topo;
    topo.devices = std::move(devices);
    topo.wormholes = std::move(wormholes);
    topo.max_connections_per_device = max_connections_per_device;

    const std::size_t m = topo.wormholes.size();
    // Next candidate port per wormhole; listen_ports set while assigning.
    std::vector<std::uint32_t> next_port(m, base_port);
    std::vector<std::size_t> assigned(m, 0);

    for (int r = 0; r < replication_factor; ++r) {
        for (std::size_t i = 0; i < topo.devices.size(); ++i) {
            const std::size_t wi = (i + static_cast<std::size_t>(r)) % m;
            WormholeSpec& w = topo.wormholes[wi];
            if (assigned[wi] + 1 > kMaxPortsPerWormhole)
                throw TopologyError(TopologyErrorCode::PortSpaceExhausted,
                                    "wormhole '" + w.wormhole_id + "' would exceed " +
                                        std::to_string(kMaxPortsPerWormhole) + " mappings");
            std::uint32_t port = next_port[wi];
            while (port <= 65535 && w.listen_ports.count(static_cast<std::uint16_t>(port)))
                ++port;
            if (port > 65535)
                throw TopologyError(TopologyErrorCode::PortSpaceExhausted,
                                    "wormhole '" + w.wormhole_id + "' ran out of ports");
            next_port[wi] = port + 1;
            ++assigned[wi];
            w.listen_ports.insert(static_cast<std::uint16_t>(port));
            topo.mappings.push_back(PortMapping{w.wormhole_id, static_cast<std::uint16_t>(port),
                                                topo.devices[i].device_id,
                                                topo.devices[i].local_endpoint.port});
        }
    }
    validate_topology(topo);
    return topo;
}

std::size_t exposed_service_count(const Topology& topo) { return topo.mappings.size(); }

ResolveResult resolve(const Topology& topo, const std::string& wormhole_id,
                      std::uint16_t public_port) {
    const PortMapping* m = find_mapping(topo, wormhole_id, public_port);
    if (!m)
        throw TopologyError(TopologyErrorCode::NoSuchMapping,
                            "no mapping for (" + wormhole_id + ", " + std::to_string(public_port) +
                                ")");
    const DeviceSpec* d = topo.find_device(m->device_id);
    return ResolveResult{m->device_id, HostPort{d->local_endpoint.host, m->device_port}};
}

std::string serialize_topology(const Topology& topo) {
    std::ostringstream out;
    out << "[topology]\n";
    out << "max_connections_per_device = " << topo.max_connections_per_device << "\n";
    for (const auto& d : topo.devices) {
        out << "\n[device]\n";
        out << "device_id = " << d.device_id << "\n";
        out << "model_name = " << d.model_name << "\n";
        out << "local_endpoint = " << d.local_endpoint.str() << "\n";
        out << "credential = " << d.credential.username << ":" << d.credential.password << "\n";
        out << "difficulty = " << to_string(d.difficulty) << "\n";
        out << "service_protocol = " << to_string(d.service_protocol) << "\n";
    }
    for (const auto& w : topo.wormholes) {
        out << "\n[wormhole]\n";
        out << "wormhole_id = " << w.wormhole_id << "\n";
        out << "bind_address = " << w.bind_address << "\n";
        out << "city = " << w.city << "\n";
        out << "country = " << w.country << "\n";
        out << "provider = " << w.provider << "\n";
        out << "listen_ports = ";
        bool first = true;
        for (std::uint16_t p : w.listen_ports) {
            if (!first)
                out << ",";
            out << p;
            first = false;
        }
        out << "\n";
    }
    for (const auto& m : topo.mappings) {
        out << "\n[mapping]\n";
        out << "wormhole_id = " << m.wormhole_id << "\n";
        out << "public_port = " << m.public_port << "\n";
        out << "device_id = " << m.device_id << "\n";
        out << "device_port = " << m.device_port << "\n";
    }
    return out.str();
}

namespace {

std::uint16_t parse_port_value(const std::string& text, const std::string& what) {
    int v;
    try {
        v = std::stoi(text);
    } catch (const std::exception&) {
        throw TopologyError(TopologyErrorCode::InvalidField, "bad " + what + ": '" + text + "'");
    }
    if (v < 1 || v > 65535)
        throw TopologyError(TopologyErrorCode::InvalidField,
                            what + " out of range 1..65535: " + text);
    return static_cast<std::uint16_t>(v);
}

Credential parse_credential(const std::string& text) {
    std::size_t pos = text.find(':');
    if (pos == std::string::npos)
        throw TopologyError(TopologyErrorCode::InvalidField,
                            "credential must be username:password, got '" + text + "'");
    return Credential{text.substr(0, pos), text.substr(pos + 1)};
}

} // namespace

Topology parse_topology_text(const std::string& text, const std::string& origin) {
    Topology topo;
    for (const ConfigSection& sec : parse_config_text(text, origin)) {
        if (sec.name == "topology") {
            if (auto v = sec.find("max_connections_per_device"))
                topo.max_connections_per_device = std::stoi(*v);
        } else if (sec.name == "device") {
            DeviceSpec d;
            d.device_id = sec.require("device_id");
            d.model_name = sec.require("model_name");
            d.local_endpoint = parse_host_port(sec.require("local_endpoint"));
            d.credential = parse_credential(sec.require("credential"));
            d.difficulty = difficulty_from_string(sec.require("difficulty"));
            d.service_protocol = service_protocol_from_string(sec.require("service_protocol"));
            topo.devices.push_back(std::move(d));
        } else if (sec.name == "wormhole") {
            WormholeSpec w;
            w.wormhole_id = sec.require("wormhole_id");
            w.bind_address = sec.require("bind_address");
            w.city = sec.require("city");
            w.country = sec.require("country");
            w.provider = sec.require("provider");
            for (const std::string& tok : split(sec.require("listen_ports"), ',')) {
                std::string t = trim(tok);
                if (!t.empty())
                    w.listen_ports.insert(parse_port_value(t, "listen port"));
            }
            topo.wormholes.push_back(std::move(w));
        } else if (sec.name == "mapping") {
            PortMapping m;
            m.wormhole_id = sec.require("wormhole_id");
            m.public_port = parse_port_value(sec.require("public_port"), "public_port");
            m.device_id = sec.require("device_id");
            m.device_port = parse_port_value(sec.require("device_port"), "device_port");
            topo.mappings.push_back(std::move(m));
        } else {
            throw TopologyError(TopologyErrorCode::InvalidField,
                                origin + ": unknown section [" + sec.name + "]");
        }
    }
    validate_topology(topo);
    return topo;
}

Topology load_topology_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open topology file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_topology_text(buf.str(), path.string());
}

void save_topology_file(const Topology& topo, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write topology file: " + path.string());
    out << serialize_topology(topo);
}

} // namespace hmx
