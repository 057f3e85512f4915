#include "hmx/harness.hpp"

#include "hmx/util.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <sstream>

namespace hmx {

namespace {

// Agents the probe script rotates through; classification covers every rule.
constexpr std::array<const char*, 6> kProbeAgents = {
    "curl/7.68.0",
    "Wget/1.20.3",
    "python-requests/2.25.1",
    "masscan/1.3 (https://github.com/robertdavidgraham/masscan)",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/91.0.4472.124 Safari/537.36",
    "Mozilla/5.0 (X11; Linux x86_64; rv:78.0) Gecko/20100101 Firefox/78.0",
};

constexpr const char* kChromeAgent = kProbeAgents[4];
constexpr const char* kWgetAgent = kProbeAgents[1];

// [0, 1) with 53 bits, independent of the standard library's distribution
// implementation so plans replay identically everywhere.
double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::mt19937_64 conn_rng(const CampaignPlan& plan, const AttackerScript& script,
                         std::size_t entry_index, int rep) {
    const std::string key = std::to_string(plan.seed) + '|' + script.script_id + '|' +
                            std::to_string(script.seed) + '|' + std::to_string(entry_index) +
                            '|' + std::to_string(rep);
    return std::mt19937_64(
        fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(key.data()), key.size())));
}

std::string behavior_default_agent(Behavior b, std::mt19937_64& rng) {
    switch (b) {
    case Behavior::PortScan:
        return ""; // no payload at all
    case Behavior::HttpProbe:
        return kProbeAgents[rng() % kProbeAgents.size()];
    case Behavior::Bruteforce:
        return ""; // classic dictionary tools send no agent header
    case Behavior::CuriousBrowser:
        return kChromeAgent;
    case Behavior::LowInteractionBounce:
        return kWgetAgent;
    }
    return "";
}

std::string resolve_agent(const AttackerScript& script, std::mt19937_64& rng) {
    if (script.user_agent == "-") {
        return "";
    }
    if (!script.user_agent.empty()) {
        return script.user_agent;
    }
    return behavior_default_agent(script.behavior, rng);
}

int status_for(const DeviceSpec* device, const std::optional<Credential>& cred) {
    if (!device) {
        return 0;
    }
    if (cred && *cred == device->credential) {
        return 200;
    }
    return 401;
}

PlannedRequest make_request(std::string method, std::string path, std::string agent,
                            std::optional<Credential> cred, const DeviceSpec* device) {
    PlannedRequest r;
    r.method = std::move(method);
    r.path = std::move(path);
    r.user_agent = std::move(agent);
    r.expect_status = status_for(device, cred);
    r.credential = std::move(cred);
    return r;
}

std::vector<PlannedRequest> build_requests(const AttackerScript& script,
                                           const DeviceSpec* device, std::mt19937_64& rng) {
    const std::string agent = resolve_agent(script, rng);
    std::vector<PlannedRequest> reqs;
    switch (script.behavior) {
    case Behavior::PortScan:
        break;
    case Behavior::HttpProbe:
        reqs.push_back(make_request("GET", "/", agent, std::nullopt, device));
        break;
    case Behavior::Bruteforce:
        for (const Credential& cred : script.dictionary) {
            reqs.push_back(make_request("GET", "/", agent, cred, device));
            if (reqs.back().expect_status == 200) {
                break; // the dictionary walker stops at the first hit
            }
        }
        break;
    case Behavior::CuriousBrowser: {
        reqs.push_back(make_request("GET", "/", agent, std::nullopt, device));
        const std::optional<Credential> cred =
            script.dictionary.empty() ? std::nullopt
                                      : std::optional<Credential>(script.dictionary.front());
        if (cred) {
            // Exactly three credentialed requests: enough to browse, too few
            // to look like a dictionary run.
            reqs.push_back(make_request("GET", "/", agent, cred, device));
            reqs.push_back(make_request("GET", "/image.jpg", agent, cred, device));
            PlannedRequest ptz = make_request("POST", "/ptz", agent, cred, device);
            ptz.body = "dir=left&steps=5";
            ptz.content_type = "application/x-www-form-urlencoded";
            reqs.push_back(std::move(ptz));
        } else {
            reqs.push_back(make_request("GET", "/image.jpg", agent, std::nullopt, device));
            reqs.push_back(make_request("GET", "/wifi/scan", agent, std::nullopt, device));
        }
        break;
    }
    case Behavior::LowInteractionBounce:
        reqs.push_back(make_request("GET", "/", agent, std::nullopt, device));
        break;
    }
    return reqs;
}

} // namespace

std::string to_string(Behavior b) {
    switch (b) {
    case Behavior::PortScan: return "port-scan";
    case Behavior::HttpProbe: return "http-probe";
    case Behavior::Bruteforce: return "bruteforce";
    case Behavior::CuriousBrowser: return "curious-browser";
    case Behavior::LowInteractionBounce: return "low-interaction-bounce";
    }
    return "unknown";
}

Behavior behavior_from_string(const std::string& text) {
    if (text == "port-scan") return Behavior::PortScan;
    if (text == "http-probe") return Behavior::HttpProbe;
    if (text == "bruteforce") return Behavior::Bruteforce;
    if (text == "curious-browser") return Behavior::CuriousBrowser;
    if (text == "low-interaction-bounce") return Behavior::LowInteractionBounce;
    throw std::invalid_argument("unknown behavior: '" + text + "'");
}

const std::vector<Credential>& default_credential_dictionary() {
    // Factory defaults shipped on widely deployed embedded devices, the kind
    // of list botnet loaders walk. Deliberately excludes strong per-device
    // passwords so hardened profiles survive a default-dictionary run.
    static const std::vector<Credential> dict = {
        {"root", "xc3511"},      {"root", "vizxv"},       {"root", "admin"},
        {"admin", "admin"},      {"root", "888888"},      {"root", "xmhdipc"},
        {"root", "default"},     {"root", "juantech"},    {"root", "123456"},
        {"root", "54321"},       {"support", "support"},  {"root", ""},
        {"admin", "password"},   {"root", "root"},        {"root", "12345"},
        {"user", "user"},        {"admin", ""},           {"root", "pass"},
        {"admin", "admin1234"},  {"root", "1111"},        {"admin", "smcadmin"},
        {"admin", "1111"},       {"root", "666666"},      {"root", "password"},
        {"root", "1234"},        {"root", "klv123"},      {"Administrator", "admin"},
        {"service", "service"},  {"supervisor", "supervisor"}, {"guest", "guest"},
        {"guest", "12345"},      {"admin1", "password"},  {"administrator", "1234"},
        {"666666", "666666"},    {"888888", "888888"},    {"ubnt", "ubnt"},
        {"root", "klv1234"},     {"root", "Zte521"},      {"root", "hi3518"},
        {"root", "jvbzd"},       {"root", "anko"},        {"root", "zlxx."},
        {"root", "7ujMko0vizxv"}, {"root", "7ujMko0admin"}, {"root", "system"},
        {"root", "ikwb"},        {"root", "dreambox"},    {"root", "user"},
        {"root", "realtek"},     {"root", "00000000"},    {"admin", "1111111"},
        {"admin", "1234"},       {"admin", "12345"},      {"admin", "54321"},
        {"admin", "123456"},     {"admin", "7ujMko0admin"}, {"admin", "meinsm"},
        {"tech", "tech"},
    };
    return dict;
}

std::string derive_source_ip(const std::string& base, std::uint32_t k) {
    const auto v = parse_ipv4(base);
    if (!v) {
        throw PlanError("source_ip_label is not an IPv4 address: '" + base + "'");
    }
    return format_ipv4(*v + k);
}

std::vector<PlannedConn> expand_plan(const CampaignPlan& plan, const Topology& topo) {
    std::map<std::string, const AttackerScript*> scripts;
    for (const auto& s : plan.scripts) {
        if (!scripts.emplace(s.script_id, &s).second) {
            throw PlanError("duplicate script_id '" + s.script_id + "'");
        }
        if (s.behavior == Behavior::Bruteforce && s.dictionary.empty()) {
            throw PlanError("bruteforce script '" + s.script_id + "' has an empty dictionary");
        }
        if (s.source_ip_label.empty()) {
            throw PlanError("script '" + s.script_id + "' has no source_ip_label");
        }
    }

    std::vector<PlannedConn> out;
    std::uint64_t conn_counter = 0;
    for (std::size_t e = 0; e < plan.entries.size(); ++e) {
        const CampaignEntry& entry = plan.entries[e];
        const auto it = scripts.find(entry.script_id);
        if (it == scripts.end()) {
            throw PlanError("entry references unknown script '" + entry.script_id + "'");
        }
        const AttackerScript& script = *it->second;
        const WormholeSpec* wh = topo.find_wormhole(entry.wormhole_id);
        if (!wh) {
            throw PlanError("entry targets unknown wormhole '" + entry.wormhole_id + "'");
        }
        if (wh->listen_ports.count(entry.public_port) == 0) {
            throw PlanError("wormhole '" + entry.wormhole_id + "' does not listen on port " +
                            std::to_string(entry.public_port));
        }
        if (entry.repeat < 1) {
            throw PlanError("entry repeat must be >= 1");
        }
        const PortMapping* mapping = find_mapping(topo, entry.wormhole_id, entry.public_port);
        const DeviceSpec* device = mapping ? topo.find_device(mapping->device_id) : nullptr;
        if (script.behavior != Behavior::PortScan) {
            if (!device) {
                throw PlanError("script '" + script.script_id +
                                "' needs an HTTP device behind " + entry.wormhole_id + ":" +
                                std::to_string(entry.public_port));
            }
            if (device->service_protocol != ServiceProtocol::Http) {
                throw PlanError("script '" + script.script_id + "' targets non-HTTP device '" +
                                device->device_id + "'");
            }
        }

        for (int rep = 0; rep < entry.repeat; ++rep) {
            auto rng = conn_rng(plan, script, e, rep);
            PlannedConn c;
            c.script_id = script.script_id;
            c.behavior = script.behavior;
            c.source_ip = entry.vary_source
                              ? derive_source_ip(script.source_ip_label,
                                                 static_cast<std::uint32_t>(rep))
                              : script.source_ip_label;
            c.source_port = static_cast<std::uint16_t>(30000 + conn_counter % 35000);
            ++conn_counter;
            c.wormhole_id = entry.wormhole_id;
            c.public_port = entry.public_port;
            if (mapping) {
                c.device_id = mapping->device_id;
            }
            const double start_s =
                entry.start_offset_seconds + rep * plan.repeat_spacing_seconds;
            c.start_ts = plan.base_ts + static_cast<Micros>(start_s * kMicrosPerSecond);
            double jitter = 0.0;
            if (plan.jitter_seconds > 0.0) {
                jitter = (unit_real(rng) * 2.0 - 1.0) * plan.jitter_seconds;
            }
            c.duration_seconds = std::max(0.0, script.dwell_seconds + jitter);
            c.requests = build_requests(script, device, rng);
            const std::size_t n = c.requests.size();
            for (std::size_t i = 0; i < n; ++i) {
                c.requests[i].at_offset_seconds =
                    c.duration_seconds * static_cast<double>(i) / static_cast<double>(n);
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<std::uint8_t> render_request(const PlannedRequest& req, const std::string& host) {
    std::string s = req.method + " " + req.path + " HTTP/1.1\r\n";
    s += "Host: " + host + "\r\n";
    if (!req.user_agent.empty()) {
        s += "User-Agent: " + req.user_agent + "\r\n";
    }
    if (req.credential) {
        const std::string userpass = req.credential->username + ":" + req.credential->password;
        s += "Authorization: Basic " +
             base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(userpass.data()),
                                     userpass.size())) +
             "\r\n";
    }
    if (!req.body.empty()) {
        if (!req.content_type.empty()) {
            s += "Content-Type: " + req.content_type + "\r\n";
        }
        s += "Content-Length: " + std::to_string(req.body.size()) + "\r\n";
    } else if (req.method == "POST" || req.method == "PUT") {
        s += "Content-Length: 0\r\n";
    }
    s += "Connection: keep-alive\r\n\r\n";
    s += req.body;
    return {s.begin(), s.end()};
}

std::vector<std::uint8_t> render_response(const PlannedRequest& req) {
    const int status = req.expect_status == 0 ? 200 : req.expect_status;
    const char* reason = status == 200   ? "OK"
                         : status == 401 ? "Unauthorized"
                         : status == 404 ? "Not Found"
                                         : "Status";
    std::string body;
    if (status == 200) {
        body = "<html><body>ok</body></html>";
    } else {
        body = "<html><body>" + std::to_string(status) + " " + reason + "</body></html>";
    }
    std::string s = "HTTP/1.1 " + std::to_string(status) + " " + reason + "\r\n";
    s += "Server: emu-httpd/1.0\r\n";
    s += "Content-Type: text/html\r\n";
    if (status == 401) {
        s += "WWW-Authenticate: Basic realm=\"device\"\r\n";
    }
    s += "Content-Length: " + std::to_string(body.size()) + "\r\n";
    s += "Connection: keep-alive\r\n\r\n";
    s += body;
    return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Plan file format (same sectioned key=value shape as the topology files).

namespace {

struct PlanSection {
    std::string name;
    int line{0};
    std::vector<std::pair<std::string, std::string>> kv;
};

std::vector<PlanSection> scan_sections(const std::string& text, const std::string& origin) {
    std::vector<PlanSection> sections;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw PlanError(origin + ":" + std::to_string(lineno) + ": unterminated section");
            }
            sections.push_back({trim(t.substr(1, t.size() - 2)), lineno, {}});
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos || sections.empty()) {
            throw PlanError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        sections.back().kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return sections;
}

std::vector<Credential> parse_dictionary(const std::string& value, const std::string& where) {
    if (value == "default") {
        return default_credential_dictionary();
    }
    std::vector<Credential> dict;
    for (const std::string& item : split(value, ',')) {
        const std::string t = trim(item);
        if (t.empty()) {
            continue;
        }
        const auto colon = t.find(':');
        if (colon == std::string::npos) {
            throw PlanError(where + ": dictionary entry '" + t + "' is not user:pass");
        }
        dict.push_back({t.substr(0, colon), t.substr(colon + 1)});
    }
    return dict;
}

bool parse_bool(const std::string& value, const std::string& where) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw PlanError(where + ": expected a boolean, got '" + value + "'");
}

double parse_double(const std::string& value, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw PlanError(where + ": bad number '" + value + "'");
    }
}

} // namespace

CampaignPlan parse_plan_text(const std::string& text, const std::string& origin) {
    CampaignPlan plan;
    bool saw_plan = false;
    for (const PlanSection& sec : scan_sections(text, origin)) {
        const std::string where = origin + ":" + std::to_string(sec.line);
        if (sec.name == "plan") {
            if (saw_plan) {
                throw PlanError(where + ": duplicate [plan] section");
            }
            saw_plan = true;
            for (const auto& [k, v] : sec.kv) {
                if (k == "plan_id") plan.plan_id = v;
                else if (k == "seed") plan.seed = std::stoull(v);
                else if (k == "base_ts") plan.base_ts = parse_timestamp(v);
                else if (k == "jitter_seconds") plan.jitter_seconds = parse_double(v, where);
                else if (k == "repeat_spacing_seconds")
                    plan.repeat_spacing_seconds = parse_double(v, where);
                else throw PlanError(where + ": unknown [plan] key '" + k + "'");
            }
        } else if (sec.name == "script") {
            AttackerScript s;
            for (const auto& [k, v] : sec.kv) {
                if (k == "script_id") s.script_id = v;
                else if (k == "behavior") {
                    try {
                        s.behavior = behavior_from_string(v);
                    } catch (const std::invalid_argument& e) {
                        throw PlanError(where + ": " + e.what());
                    }
                } else if (k == "source_ip_label") s.source_ip_label = v;
                else if (k == "dictionary") s.dictionary = parse_dictionary(v, where);
                else if (k == "user_agent") s.user_agent = v;
                else if (k == "dwell_seconds") s.dwell_seconds = parse_double(v, where);
                else if (k == "seed") s.seed = std::stoull(v);
                else throw PlanError(where + ": unknown [script] key '" + k + "'");
            }
            if (s.script_id.empty()) {
                throw PlanError(where + ": script without script_id");
            }
            plan.scripts.push_back(std::move(s));
        } else if (sec.name == "entry") {
            CampaignEntry e;
            for (const auto& [k, v] : sec.kv) {
                if (k == "script") e.script_id = v;
                else if (k == "wormhole") e.wormhole_id = v;
                else if (k == "port") e.public_port = static_cast<std::uint16_t>(std::stoi(v));
                else if (k == "start_offset_seconds")
                    e.start_offset_seconds = parse_double(v, where);
                else if (k == "repeat") e.repeat = std::stoi(v);
                else if (k == "vary_source") e.vary_source = parse_bool(v, where);
                else throw PlanError(where + ": unknown [entry] key '" + k + "'");
            }
            if (e.script_id.empty() || e.wormhole_id.empty() || e.public_port == 0) {
                throw PlanError(where + ": entry needs script, wormhole and port");
            }
            plan.entries.push_back(std::move(e));
        } else {
            throw PlanError(where + ": unknown section [" + sec.name + "]");
        }
    }
    return plan;
}

CampaignPlan load_plan_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PlanError("cannot open plan file: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_plan_text(buf.str(), path.string());
}

std::string serialize_plan(const CampaignPlan& plan) {
    std::ostringstream out;
    out << "[plan]\n";
    out << "plan_id = " << plan.plan_id << "\n";
    out << "seed = " << plan.seed << "\n";
    out << "base_ts = " << format_iso8601(plan.base_ts) << "\n";
    out << "jitter_seconds = " << plan.jitter_seconds << "\n";
    out << "repeat_spacing_seconds = " << plan.repeat_spacing_seconds << "\n";
    for (const auto& s : plan.scripts) {
        out << "\n[script]\n";
        out << "script_id = " << s.script_id << "\n";
        out << "behavior = " << to_string(s.behavior) << "\n";
        out << "source_ip_label = " << s.source_ip_label << "\n";
        if (!s.dictionary.empty()) {
            out << "dictionary = ";
            for (std::size_t i = 0; i < s.dictionary.size(); ++i) {
                if (i) out << ",";
                out << s.dictionary[i].username << ":" << s.dictionary[i].password;
            }
            out << "\n";
        }
        if (!s.user_agent.empty()) {
            out << "user_agent = " << s.user_agent << "\n";
        }
        out << "dwell_seconds = " << s.dwell_seconds << "\n";
        out << "seed = " << s.seed << "\n";
    }
    for (const auto& e : plan.entries) {
        out << "\n[entry]\n";
        out << "script = " << e.script_id << "\n";
        out << "wormhole = " << e.wormhole_id << "\n";
        out << "port = " << e.public_port << "\n";
        out << "start_offset_seconds = " << e.start_offset_seconds << "\n";
        out << "repeat = " << e.repeat << "\n";
        out << "vary_source = " << (e.vary_source ? "true" : "false") << "\n";
    }
    return out.str();
}

} // namespace hmx
