#include "hmx/harness.hpp"

#include "hmx/capture.hpp"
#include "hmx/log.hpp"
#include "hmx/net.hpp"
#include "hmx/util.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace hmx {

// ---------------------------------------------------------------------------
// Synthetic execution: write the capture files the live stack would produce.

namespace {

std::size_t packet_count(std::size_t payload) {
    return (payload + kSynthSegmentBytes - 1) / kSynthSegmentBytes;
}

std::uint32_t require_ipv4(const std::string& text, const std::string& what) {
    const auto v = parse_ipv4(text);
    if (!v) {
        throw PlanError(what + " is not an IPv4 address: '" + text + "'");
    }
    return *v;
}

} // namespace

void synthesize_captures(const std::vector<PlannedConn>& conns, const Topology& topo,
                         const std::filesystem::path& captures_dir) {
    std::filesystem::create_directories(captures_dir);

    // One sink per wormhole; connections are laid down in start order so a
    // rerun of the same plan produces byte-identical files.
    std::vector<std::size_t> order(conns.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return conns[a].start_ts < conns[b].start_ts;
    });

    std::map<std::string, std::unique_ptr<CaptureSink>> sinks;
    for (const std::size_t idx : order) {
        const PlannedConn& c = conns[idx];
        auto it = sinks.find(c.wormhole_id);
        if (it == sinks.end()) {
            it = sinks.emplace(c.wormhole_id,
                               std::make_unique<CaptureSink>(captures_dir, c.wormhole_id))
                     .first;
        }
        const WormholeSpec* wh = topo.find_wormhole(c.wormhole_id);
        if (!wh) {
            throw PlanError("plan references unknown wormhole '" + c.wormhole_id + "'");
        }
        TcpEndpoints ep;
        ep.client_ip = require_ipv4(c.source_ip, "source_ip");
        ep.client_port = c.source_port;
        ep.server_ip = require_ipv4(wh->bind_address, "wormhole bind_address");
        ep.server_port = c.public_port;

        ConnCapture cap = it->second->start_conn(ep);
        const std::string host = wh->bind_address + ":" + std::to_string(c.public_port);

        Micros cursor = c.start_ts;
        cap.on_open(cursor);
        cursor += 4; // three handshake packets plus a gap

        for (const PlannedRequest& req : c.requests) {
            const Micros at = c.start_ts +
                              static_cast<Micros>(req.at_offset_seconds * kMicrosPerSecond);
            cursor = std::max(cursor, at);
            const auto request = render_request(req, host);
            cap.on_data(cursor, Direction::Inbound, request);
            cursor += static_cast<Micros>(packet_count(request.size())) + 1;
            const auto response = render_response(req);
            cap.on_data(cursor, Direction::Outbound, response);
            cursor += static_cast<Micros>(packet_count(response.size())) + 1;
        }

        const Micros close_at = std::max(
            cursor, c.start_ts + static_cast<Micros>(c.duration_seconds * kMicrosPerSecond));
        cap.on_close(close_at);
    }
    for (auto& [id, sink] : sinks) {
        sink->close();
    }
}

std::vector<ConnectionRecord> replay_records(const std::vector<PlannedConn>& conns) {
    std::vector<ConnectionRecord> records;
    records.reserve(conns.size());
    for (const PlannedConn& c : conns) {
        ConnectionRecord r;
        r.remote_ip = c.source_ip;
        r.remote_port = c.source_port;
        r.wormhole_id = c.wormhole_id;
        r.wormhole_port = c.public_port;
        r.device_id = c.device_id;
        r.first_ts = c.start_ts;
        r.last_ts = c.start_ts + static_cast<Micros>(c.duration_seconds * kMicrosPerSecond);
        for (const PlannedRequest& req : c.requests) {
            HttpTransaction txn;
            txn.method = req.method;
            txn.path = req.path;
            if (!req.user_agent.empty()) {
                txn.user_agent = req.user_agent;
            }
            if (req.credential) {
                AuthView auth;
                auth.username = req.credential->username;
                auth.password = req.credential->password;
                auth.success = req.expect_status >= 200 && req.expect_status < 300;
                txn.auth = auth;
            }
            txn.response_status = req.expect_status;
            r.http_transactions.push_back(std::move(txn));
        }
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Ground-truth manifest.

nlohmann::ordered_json build_manifest(const CampaignPlan& plan,
                                      const std::vector<PlannedConn>& conns,
                                      const Topology& topo, const GeoTable* geo) {
    const std::vector<ConnectionRecord> records = replay_records(conns);
    const std::vector<Session> sessions = sessionize(records);
    const BruteforceReport bf = detect_bruteforce(sessions);

    std::size_t transactions = 0;
    for (const auto& r : records) {
        transactions += r.http_transactions.size();
    }
    std::size_t attempts = 0;
    std::size_t successes = 0;
    for (const auto& s : sessions) {
        attempts += s.login_attempts;
        successes += s.login_successes;
    }

    nlohmann::ordered_json m;
    m["plan_id"] = plan.plan_id;
    m["seed"] = plan.seed;
    m["connections"] = records.size();
    m["syn_only_probes"] = 0;
    m["transactions"] = transactions;
    m["login_attempts"] = attempts;
    m["login_successes"] = successes;
    m["sessions"] = sessions.size();
    m["flagged_sessions"] = bf.flagged.size();
    m["successful_sessions"] = bf.successful.size();
    m["distinct_remote_ips"] = distinct_remotes(records);
    nlohmann::ordered_json dists;
    for (const Dimension dim : {Dimension::City, Dimension::Port, Dimension::Country,
                                Dimension::Device, Dimension::Agent}) {
        nlohmann::ordered_json table;
        for (const DistributionRow& row : aggregate(records, &topo, geo, dim)) {
            table[row.category] = row.count;
        }
        dists[to_string(dim)] = std::move(table);
    }
    m["distributions"] = std::move(dists);
    return m;
}

void write_manifest(const nlohmann::ordered_json& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write manifest: " + path.string());
    }
    out << manifest.dump(2) << "\n";
}

nlohmann::ordered_json load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open manifest: " + path.string());
    }
    return nlohmann::ordered_json::parse(in);
}

namespace {

Dimension dimension_from_name(const std::string& name) {
    if (name == "city") return Dimension::City;
    if (name == "port") return Dimension::Port;
    if (name == "country") return Dimension::Country;
    if (name == "device") return Dimension::Device;
    if (name == "agent") return Dimension::Agent;
    throw std::runtime_error("unknown distribution dimension '" + name + "'");
}

} // namespace

std::vector<std::string> compare_manifest(const nlohmann::ordered_json& manifest,
                                          const Analysis& analysis) {
    std::vector<std::string> mismatches;
    const auto check = [&](const char* name, std::uint64_t expected, std::uint64_t actual) {
        if (expected != actual) {
            mismatches.push_back(std::string(name) + ": manifest " + std::to_string(expected) +
                                 ", analysis " + std::to_string(actual));
        }
    };

    std::size_t transactions = 0;
    for (const auto& r : analysis.ingest.records) {
        transactions += r.http_transactions.size();
    }

    check("connections", manifest.at("connections").get<std::uint64_t>(),
          analysis.ingest.records.size());
    check("syn_only_probes", manifest.at("syn_only_probes").get<std::uint64_t>(),
          analysis.ingest.syn_only_probes);
    check("transactions", manifest.at("transactions").get<std::uint64_t>(), transactions);
    check("login_attempts", manifest.at("login_attempts").get<std::uint64_t>(),
          analysis.total_login_attempts);
    check("login_successes", manifest.at("login_successes").get<std::uint64_t>(),
          analysis.total_login_successes);
    check("sessions", manifest.at("sessions").get<std::uint64_t>(), analysis.sessions.size());
    check("flagged_sessions", manifest.at("flagged_sessions").get<std::uint64_t>(),
          analysis.bruteforce.flagged.size());
    check("successful_sessions", manifest.at("successful_sessions").get<std::uint64_t>(),
          analysis.bruteforce.successful.size());
    check("distinct_remote_ips", manifest.at("distinct_remote_ips").get<std::uint64_t>(),
          analysis.distinct_remote_ips);

    if (manifest.contains("distributions")) {
        for (const auto& [dim_name, table] : manifest.at("distributions").items()) {
            const Dimension dim = dimension_from_name(dim_name);
            std::map<std::string, std::uint64_t> actual;
            const auto it = analysis.distributions.find(dim);
            if (it != analysis.distributions.end()) {
                for (const DistributionRow& row : it->second) {
                    actual[row.category] = row.count;
                }
            }
            for (const auto& [category, count] : table.items()) {
                const auto found = actual.find(category);
                const std::uint64_t got = found == actual.end() ? 0 : found->second;
                if (got != count.get<std::uint64_t>()) {
                    mismatches.push_back(dim_name + "/" + category + ": manifest " +
                                         count.dump() + ", analysis " + std::to_string(got));
                }
                actual.erase(category);
            }
            for (const auto& [category, count] : actual) {
                if (count != 0) {
                    mismatches.push_back(dim_name + "/" + category + ": manifest 0, analysis " +
                                         std::to_string(count));
                }
            }
        }
    }
    return mismatches;
}

// ---------------------------------------------------------------------------
// Live execution.

namespace {

// Reads one HTTP response (status line, headers, Content-Length body) and
// returns the status code, or -1 when the connection died first.
int read_http_response(Socket& sock) {
    std::string buf;
    std::uint8_t chunk[4096];
    std::size_t header_end = std::string::npos;
    while (header_end == std::string::npos) {
        const long n = sock.recv_some(chunk, sizeof(chunk));
        if (n <= 0) {
            return -1;
        }
        buf.append(reinterpret_cast<const char*>(chunk), static_cast<std::size_t>(n));
        header_end = buf.find("\r\n\r\n");
        if (buf.size() > 1 << 20) {
            return -1;
        }
    }
    const std::string head = buf.substr(0, header_end);
    int status = -1;
    if (head.rfind("HTTP/", 0) == 0) {
        const auto sp = head.find(' ');
        if (sp != std::string::npos) {
            status = std::atoi(head.c_str() + sp + 1);
        }
    }
    std::size_t content_length = 0;
    for (const std::string& line : split(head, '\n')) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            continue;
        }
        if (to_lower(trim(line.substr(0, colon))) == "content-length") {
            content_length = static_cast<std::size_t>(std::stoull(trim(line.substr(colon + 1))));
        }
    }
    std::size_t have = buf.size() - header_end - 4;
    while (have < content_length) {
        const long n = sock.recv_some(chunk, sizeof(chunk));
        if (n <= 0) {
            return -1;
        }
        have += static_cast<std::size_t>(n);
    }
    return status;
}

} // namespace

void write_label_map(const std::map<std::string, std::string>& labels,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write label map: " + path.string());
    }
    out << "# capture endpoint -> attacker source label\n";
    for (const auto& [endpoint, label] : labels) {
        out << endpoint << "," << label << "\n";
    }
}

LiveRunStats run_campaign_live(const std::vector<PlannedConn>& conns, const LiveRunOptions& opt) {
    if (!opt.topology) {
        throw std::invalid_argument("run_campaign_live needs a topology");
    }
    std::vector<std::size_t> order(conns.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return conns[a].start_ts < conns[b].start_ts;
    });

    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;
    std::map<std::string, std::string> labels;
    std::atomic<std::size_t> requests{0};
    std::atomic<std::size_t> mismatches{0};
    std::atomic<std::size_t> completed{0};
    std::atomic<bool> abort{false};
    std::string abort_why;
    std::mutex abort_mu;

    const Micros campaign_t0 = order.empty() ? 0 : conns[order.front()].start_ts;
    const auto wall_t0 = std::chrono::steady_clock::now();

    // Every client pins a distinct loopback source address so the label map
    // key (local ip:port) stays unique even when ephemeral ports get reused
    // across a long campaign.
    const auto local_bind_for = [](std::size_t seq) {
        return "127." + std::to_string(64 + ((seq >> 16) & 0x3f)) + "." +
               std::to_string((seq >> 8) & 0xff) + "." + std::to_string(seq & 0xff);
    };

    auto worker = [&](const PlannedConn& c, const std::string& host, std::uint16_t port,
                      std::size_t seq) {
        try {
            const bool loop = host.rfind("127.", 0) == 0;
            Socket sock = Socket::connect_to(host, port, opt.connect_timeout_ms,
                                             loop ? local_bind_for(seq) : std::string());
            sock.set_nodelay();
            sock.set_recv_timeout_ms(10000);
            {
                std::lock_guard lock(mu);
                labels[sock.local_ip() + ":" + std::to_string(sock.local_port())] = c.source_ip;
            }
            const std::string host_header = host + ":" + std::to_string(port);
            for (std::size_t i = 0; i < c.requests.size(); ++i) {
                const PlannedRequest& req = c.requests[i];
                if (opt.time_scale > 0.0 && i > 0) {
                    const double gap =
                        (req.at_offset_seconds - c.requests[i - 1].at_offset_seconds) *
                        opt.time_scale;
                    if (gap > 0.0) {
                        std::this_thread::sleep_for(std::chrono::duration<double>(gap));
                    }
                }
                if (!sock.send_all(render_request(req, host_header))) {
                    mismatches.fetch_add(c.requests.size() - i);
                    break;
                }
                requests.fetch_add(1);
                const int status = read_http_response(sock);
                if (status != req.expect_status) {
                    mismatches.fetch_add(1);
                }
            }
            completed.fetch_add(1);
        } catch (const NetError& e) {
            abort.store(true);
            std::lock_guard lock(abort_mu);
            if (abort_why.empty()) {
                abort_why = std::string("connect ") + host + ":" + std::to_string(port) + ": " +
                            e.what();
            }
        }
        std::lock_guard lock(mu);
        --in_flight;
        cv.notify_all();
    };

    std::vector<std::thread> threads;
    threads.reserve(order.size());
    std::size_t seq = 0;
    for (const std::size_t idx : order) {
        if (abort.load()) {
            break;
        }
        const PlannedConn& c = conns[idx];
        const WormholeSpec* wh = opt.topology->find_wormhole(c.wormhole_id);
        if (!wh) {
            throw PlanError("plan references unknown wormhole '" + c.wormhole_id + "'");
        }
        if (opt.time_scale > 0.0) {
            const double due_s =
                static_cast<double>(c.start_ts - campaign_t0) / kMicrosPerSecond * opt.time_scale;
            std::this_thread::sleep_until(wall_t0 + std::chrono::duration_cast<
                                                        std::chrono::steady_clock::duration>(
                                                        std::chrono::duration<double>(due_s)));
        }
        {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return in_flight < opt.max_parallel; });
            ++in_flight;
        }
        threads.emplace_back(worker, std::cref(c), wh->bind_address, c.public_port, seq++);
    }
    for (auto& t : threads) {
        t.join();
    }

    if (!opt.labels_csv.empty()) {
        std::lock_guard lock(mu);
        write_label_map(labels, opt.labels_csv);
    }
    if (abort.load()) {
        std::lock_guard lock(abort_mu);
        throw TargetUnreachable(abort_why.empty() ? "campaign target unreachable" : abort_why);
    }

    LiveRunStats stats;
    stats.connections = completed.load();
    stats.requests = requests.load();
    stats.status_mismatches = mismatches.load();
    return stats;
}

// ---------------------------------------------------------------------------
// Periodic resets.

ResetScheduler::ResetScheduler(std::vector<std::string> device_ids, Micros interval, Clock* clock,
                               ResetFn fn, std::filesystem::path log_path)
    : device_ids_(std::move(device_ids)), interval_(interval),
      clock_(clock ? clock : &SystemClock::instance()), fn_(std::move(fn)),
      log_path_(std::move(log_path)), start_(clock_->now()) {
    if (interval_ <= 0) {
        throw std::invalid_argument("reset interval must be positive");
    }
    if (!fn_) {
        throw std::invalid_argument("reset scheduler needs a reset function");
    }
}

int ResetScheduler::poll() {
    const Micros now = clock_->now();
    const auto due = static_cast<int>((now - start_) / interval_);
    int invoked = 0;
    std::ofstream log;
    if (!log_path_.empty()) {
        log.open(log_path_, std::ios::app);
    }
    while (ticks_fired_ < due) {
        ++ticks_fired_;
        const Micros tick_ts = start_ + static_cast<Micros>(ticks_fired_) * interval_;
        for (const std::string& dev : device_ids_) {
            const bool ok = fn_(dev);
            ++invoked;
            if (ok) {
                ++resets_ok_;
            } else {
                ++resets_failed_;
            }
            if (log.is_open()) {
                log << format_iso8601(tick_ts) << " | reset | " << dev << " | "
                    << (ok ? "ok" : "unreachable") << "\n";
            }
        }
    }
    return invoked;
}

} // namespace hmx
