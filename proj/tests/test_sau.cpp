#include "hmx/capture.hpp"
#include "hmx/sau.hpp"
#include "hmx/util.hpp"

#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

constexpr hmx::Micros kSec = hmx::kMicrosPerSecond;
constexpr hmx::Micros kT0 = 1464739200LL * kSec; // 2016-06-01T00:00:00Z

hmx::ConnectionRecord make_record(const std::string& ip, std::uint16_t rport,
                                  const std::string& wh, std::uint16_t wport,
                                  hmx::Micros first, hmx::Micros last) {
    hmx::ConnectionRecord r;
    r.remote_ip = ip;
    r.remote_port = rport;
    r.wormhole_id = wh;
    r.wormhole_port = wport;
    r.first_ts = first;
    r.last_ts = last;
    return r;
}

hmx::HttpTransaction login_txn(const std::string& user, const std::string& pass, int status) {
    hmx::HttpTransaction t;
    t.method = "GET";
    t.path = "/";
    t.auth = hmx::AuthView{user, pass, status >= 200 && status < 300};
    t.response_status = status;
    return t;
}

} // namespace

TEST_CASE("http transactions are paired from the two stream directions") {
    const std::string client = "GET / HTTP/1.1\r\n"
                               "Host: cam\r\n"
                               "User-Agent: curl/7.68.0\r\n"
                               "Authorization: Basic YWRtaW46d3Jvbmc=\r\n" // admin:wrong
                               "\r\n"
                               "POST /ptz HTTP/1.1\r\n"
                               "Host: cam\r\n"
                               "User-Agent: curl/7.68.0\r\n"
                               "Authorization: Basic YWRtaW46YWRtaW4=\r\n" // admin:admin
                               "Content-Length: 10\r\n"
                               "Content-Type: application/x-www-form-urlencoded\r\n"
                               "\r\n"
                               "pan=1&tilt";
    const std::string server = "HTTP/1.1 401 Unauthorized\r\n"
                               "Content-Length: 12\r\n"
                               "WWW-Authenticate: Basic realm=\"cam\"\r\n"
                               "\r\n"
                               "Unauthorized"
                               "HTTP/1.1 200 OK\r\n"
                               "Transfer-Encoding: chunked\r\n"
                               "\r\n"
                               "4\r\nokay\r\n0\r\n\r\n";

    const auto txns = hmx::parse_http_stream(as_bytes(client), as_bytes(server));
    REQUIRE(txns.size() == 2);

    CHECK(txns[0].method == "GET");
    CHECK(txns[0].path == "/");
    CHECK(txns[0].user_agent == "curl/7.68.0");
    REQUIRE(txns[0].auth.has_value());
    CHECK(txns[0].auth->username == "admin");
    CHECK(txns[0].auth->password == "wrong");
    CHECK_FALSE(txns[0].auth->success);
    CHECK(txns[0].response_status == 401);

    CHECK(txns[1].method == "POST");
    CHECK(txns[1].path == "/ptz");
    REQUIRE(txns[1].auth.has_value());
    CHECK(txns[1].auth->password == "admin");
    CHECK(txns[1].auth->success);
    CHECK(txns[1].response_status == 200);
}

TEST_CASE("requests without responses keep an absent status") {
    const std::string client = "GET /x HTTP/1.1\r\nHost: h\r\n\r\n";
    const auto txns = hmx::parse_http_stream(as_bytes(client), {});
    REQUIRE(txns.size() == 1);
    CHECK_FALSE(txns[0].response_status.has_value());
    CHECK_FALSE(txns[0].auth.has_value());
    CHECK_FALSE(txns[0].user_agent.has_value());
}

TEST_CASE("non-http payload yields no transactions") {
    const std::string junk = "\x16\x03\x01\x02\x00 TLS hello or whatever";
    CHECK(hmx::parse_http_stream(as_bytes(junk), as_bytes(junk)).empty());
    CHECK(hmx::parse_http_stream({}, {}).empty());
}

TEST_CASE("ingest builds one record per completed connection") {
    const auto dir = fresh_dir("hmx_sau_ingest");
    hmx::Topology topo;
    topo.devices = {{"cam-1", "Trendnet Emulator", {"127.0.0.1", 9001}, {"admin", "admin"},
                     hmx::Difficulty::Easy, hmx::ServiceProtocol::Http}};
    topo.wormholes = {{"wh-fra", "127.0.0.2", "Frankfurt", "DE", "lab", {8080}}};
    topo.mappings = {{"wh-fra", 8080, "cam-1", 9001}};
    hmx::validate_topology(topo);

    const std::string req = "GET / HTTP/1.1\r\nHost: cam\r\nUser-Agent: Wget/1.20.3\r\n\r\n";
    const std::string resp = "HTTP/1.1 401 Unauthorized\r\nContent-Length: 0\r\n\r\n";
    {
        hmx::CaptureSink sink(dir, "wh-fra");
        auto conn = sink.start_conn(
            {*hmx::parse_ipv4("192.0.2.77"), 41000, *hmx::parse_ipv4("127.0.0.2"), 8080});
        conn.on_open(kT0);
        conn.on_data(kT0 + 1000, hmx::Direction::Inbound, as_bytes(req));
        conn.on_data(kT0 + 2000, hmx::Direction::Outbound, as_bytes(resp));
        conn.on_close(kT0 + 3000);
        // A second, handshake-less probe on the same file.
        auto probe = sink.start_conn(
            {*hmx::parse_ipv4("198.51.100.9"), 42000, *hmx::parse_ipv4("127.0.0.2"), 8080});
        probe.on_syn_only(kT0 + 5000);
        sink.close();
    }
    // A malformed capture sits alongside and must not abort the run.
    std::ofstream(dir / "wh-bad-20160601.pcap") << "this is not a capture";

    hmx::IngestOptions opt;
    opt.topology = &topo;
    const auto res = hmx::ingest_captures(
        {dir / "wh-fra-20160601.pcap", dir / "wh-bad-20160601.pcap"}, opt);

    CHECK(res.files_ok == 1);
    CHECK(res.rejected_files.size() == 1);
    CHECK(res.syn_only_probes == 1);
    REQUIRE(res.records.size() == 1);
    const auto& r = res.records[0];
    CHECK(r.remote_ip == "192.0.2.77");
    CHECK(r.remote_port == 41000);
    CHECK(r.wormhole_id == "wh-fra");
    CHECK(r.wormhole_port == 8080);
    CHECK(r.device_id == "cam-1");
    CHECK(r.bytes_in == req.size());
    CHECK(r.bytes_out == resp.size());
    CHECK(r.first_ts == kT0);
    CHECK(r.last_ts == kT0 + 3000 + 2); // close batch: 3 packets
    REQUIRE(r.http_transactions.size() == 1);
    CHECK(r.http_transactions[0].user_agent == "Wget/1.20.3");
    CHECK(r.http_transactions[0].response_status == 401);
}

TEST_CASE("label map restores planned source addresses at ingest") {
    const auto dir = fresh_dir("hmx_sau_labels");
    {
        hmx::CaptureSink sink(dir, "wh-x");
        auto conn = sink.start_conn(
            {*hmx::parse_ipv4("127.0.0.1"), 35001, *hmx::parse_ipv4("127.0.0.2"), 8080});
        conn.on_open(kT0);
        conn.on_close(kT0 + 10);
        sink.close();
    }
    hmx::IngestOptions opt;
    opt.label_map["127.0.0.1:35001"] = "203.0.113.50";
    const auto res = hmx::ingest_captures({dir / "wh-x-20160601.pcap"}, opt);
    REQUIRE(res.records.size() == 1);
    CHECK(res.records[0].remote_ip == "203.0.113.50");
    CHECK(res.records[0].device_id == std::nullopt);
}

TEST_CASE("sessionize partitions records by source and service") {
    // Deterministic random workload over a handful of keys.
    std::mt19937 rng(1234);
    std::vector<hmx::ConnectionRecord> records;
    const std::string ips[] = {"10.0.0.1", "10.0.0.2", "10.0.0.3"};
    const std::uint16_t ports[] = {8080, 8081};
    hmx::Micros t = kT0;
    for (int i = 0; i < 400; ++i) {
        t += (rng() % 400) * kSec; // gaps 0..399s straddle the 300s timeout
        const auto dur = static_cast<hmx::Micros>(rng() % 30) * kSec;
        records.push_back(make_record(ips[rng() % 3], static_cast<std::uint16_t>(40000 + i),
                                      "wh-a", ports[rng() % 2], t, t + dur));
    }
    // sessionize expects and preserves chronological grouping per key.
    const auto sessions = hmx::sessionize(records, 300);

    // Every record lands in exactly one session of its own key.
    std::vector<int> seen(records.size(), 0);
    for (const auto& s : sessions) {
        REQUIRE(!s.members.empty());
        hmx::Micros watermark = 0; // latest end seen so far within the session
        bool first = true;
        for (const auto idx : s.members) {
            ++seen[idx];
            const auto& r = records[idx];
            CHECK(r.remote_ip == s.remote_ip);
            CHECK(r.wormhole_id == s.wormhole_id);
            CHECK(r.wormhole_port == s.wormhole_port);
            if (!first)
                CHECK(r.first_ts - watermark <= 300 * kSec); // within-session gap
            watermark = std::max(watermark, r.last_ts);
            first = false;
        }
        CHECK(s.first_ts == records[s.members.front()].first_ts);
        CHECK(s.last_ts >= s.first_ts);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));

    // Consecutive sessions of the same key are separated by more than the
    // timeout.
    std::map<std::string, hmx::Micros> last_end;
    for (const auto& s : sessions) {
        const auto key = s.remote_ip + "|" + s.wormhole_id + "|" + std::to_string(s.wormhole_port);
        if (last_end.count(key))
            CHECK(s.first_ts - last_end[key] > 300 * kSec);
        last_end[key] = s.last_ts;
    }
}

TEST_CASE("session gap boundary: exactly the timeout stays together") {
    std::vector<hmx::ConnectionRecord> records = {
        make_record("10.1.1.1", 40001, "wh-a", 8080, kT0, kT0 + 10 * kSec),
        // Gap of exactly 300s from the previous record's end.
        make_record("10.1.1.1", 40002, "wh-a", 8080, kT0 + 310 * kSec, kT0 + 320 * kSec),
        // Gap of 300s + 1us: a new session.
        make_record("10.1.1.1", 40003, "wh-a", 8080, kT0 + 620 * kSec + 1, kT0 + 630 * kSec),
    };
    const auto sessions = hmx::sessionize(records, 300);
    REQUIRE(sessions.size() == 2);
    CHECK(sessions[0].members.size() == 2);
    CHECK(sessions[1].members.size() == 1);
}

TEST_CASE("brute force flag: recount oracle over synthetic sessions") {
    std::mt19937 rng(777);
    std::vector<hmx::ConnectionRecord> records;
    // Build sessions through the real pipeline: each source IP makes one
    // burst of connections, each with 0..2 login attempts.
    const int kSessions = 500;
    std::vector<std::size_t> want_attempts;
    for (int s = 0; s < kSessions; ++s) {
        const std::string ip = "10.2." + std::to_string(s / 250) + "." + std::to_string(s % 250);
        const hmx::Micros base = kT0 + static_cast<hmx::Micros>(s) * 3600 * kSec;
        const int conns = 1 + static_cast<int>(rng() % 4);
        std::size_t attempts = 0;
        for (int c = 0; c < conns; ++c) {
            auto rec = make_record(ip, static_cast<std::uint16_t>(40000 + c), "wh-a", 8080,
                                   base + c * kSec, base + c * kSec + kSec / 2);
            const int logins = static_cast<int>(rng() % 3);
            for (int l = 0; l < logins; ++l) {
                rec.http_transactions.push_back(login_txn("root", "p" + std::to_string(l), 401));
                ++attempts;
            }
            records.push_back(std::move(rec));
        }
        want_attempts.push_back(attempts);
    }
    const auto sessions = hmx::sessionize(records, 300);
    REQUIRE(sessions.size() == static_cast<std::size_t>(kSessions));
    const auto report = hmx::detect_bruteforce(sessions);

    // Oracle: recount attempts per session straight from the records.
    std::set<std::size_t> expect_flagged;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        std::size_t n = 0;
        for (const auto idx : sessions[i].members)
            for (const auto& t : records[idx].http_transactions)
                if (t.auth.has_value())
                    ++n;
        CHECK(sessions[i].login_attempts == n);
        if (n > 3)
            expect_flagged.insert(i);
    }
    CHECK(std::set<std::size_t>(report.flagged.begin(), report.flagged.end()) == expect_flagged);
    CHECK(report.successful.empty());
}

TEST_CASE("brute force boundary: 3 attempts clean, 4 flagged") {
    auto session_with = [](int attempts, int successes) {
        std::vector<hmx::ConnectionRecord> records;
        auto rec = make_record("10.3.0.1", 40000, "wh-a", 8080, kT0, kT0 + kSec);
        for (int i = 0; i < attempts; ++i)
            rec.http_transactions.push_back(
                login_txn("root", "pw" + std::to_string(i), i < successes ? 200 : 401));
        records.push_back(std::move(rec));
        return hmx::sessionize(records, 300);
    };

    const auto three = session_with(3, 0);
    REQUIRE(three.size() == 1);
    CHECK(three[0].login_attempts == 3);
    CHECK(hmx::detect_bruteforce(three).flagged.empty());

    const auto four = session_with(4, 0);
    REQUIRE(four.size() == 1);
    const auto rep4 = hmx::detect_bruteforce(four);
    REQUIRE(rep4.flagged.size() == 1);
    CHECK(rep4.successful.empty());

    // 5 wrong + 1 right: flagged and successful.
    const auto win = session_with(6, 1);
    const auto repw = hmx::detect_bruteforce(win);
    CHECK(repw.flagged.size() == 1);
    CHECK(repw.successful.size() == 1);
    CHECK(win[0].login_successes == 1);
}

TEST_CASE("agent classification follows the ordered substring rules") {
    using hmx::classify_agent;
    CHECK(classify_agent(std::string("masscan/1.3 (https://github.com/robertdavidgraham/masscan)")) == "masscan");
    CHECK(classify_agent(std::string("Mozilla/5.0 compatible; ScanBot/1.0")) == "scanbot");
    CHECK(classify_agent(std::string("Wget/1.20.3 (linux-gnu)")) == "wget");
    CHECK(classify_agent(std::string("curl/7.68.0")) == "curl");
    CHECK(classify_agent(std::string("python-requests/2.25.1")) == "python");
    CHECK(classify_agent(std::string(
              "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
              "Chrome/91.0.4472.124 Safari/537.36")) == "Chrome");
    CHECK(classify_agent(std::string(
              "Mozilla/5.0 (X11; Linux x86_64; rv:78.0) Gecko/20100101 Firefox/78.0")) == "Mozilla");
    CHECK(classify_agent(std::string("GoogleBot/2.1")) == "Other");
    CHECK(classify_agent(std::nullopt) == "Other");
    // Order decides when several substrings appear.
    CHECK(classify_agent(std::string("curl via Wget wrapper")) == "wget");
    CHECK(classify_agent(std::string("MASSCAN curl wget")) == "masscan");
}

TEST_CASE("shellshock prologue detection") {
    CHECK(hmx::is_shellshock_probe("() { :; }; /bin/bash -c 'cat /etc/passwd'"));
    CHECK(hmx::is_shellshock_probe("() { ignored; }; echo pwned"));
    CHECK_FALSE(hmx::is_shellshock_probe("Mozilla/5.0 (normal browser)"));
    CHECK_FALSE(hmx::is_shellshock_probe(""));
}

TEST_CASE("geo table: lookups are inclusive, overlaps rejected") {
    const std::string csv = "# ranges\n"
                            "192.0.2.0,192.0.2.255,CN,Shenzhen\n"
                            "198.51.100.0,198.51.100.127,US,Dallas\n";
    const auto table = hmx::GeoTable::from_csv_text(csv, "inline");
    CHECK(table.size() == 2);
    REQUIRE(table.lookup("192.0.2.0") != nullptr);
    CHECK(table.lookup("192.0.2.0")->city == "Shenzhen");
    CHECK(table.lookup("192.0.2.255")->city == "Shenzhen");  // hi is inclusive
    CHECK(table.lookup("198.51.100.128") == nullptr);        // one past hi
    CHECK(table.lookup("203.0.113.1") == nullptr);
    CHECK(table.lookup("not-an-ip") == nullptr);

    const std::string overlapping = "10.0.0.0,10.0.0.200,AA,A\n10.0.0.100,10.0.1.0,BB,B\n";
    CHECK_THROWS_AS((void)hmx::GeoTable::from_csv_text(overlapping, "inline"),
                    std::runtime_error);
}

TEST_CASE("aggregate conserves counts across every dimension") {
    hmx::Topology topo;
    topo.devices = {{"cam-1", "Trendnet Emulator", {"127.0.0.1", 9001}, {"admin", "admin"},
                     hmx::Difficulty::Easy, hmx::ServiceProtocol::Http}};
    topo.wormholes = {{"wh-fra", "127.0.0.2", "Frankfurt", "DE", "lab", {8080, 8081}}};
    topo.mappings = {{"wh-fra", 8080, "cam-1", 9001}};
    hmx::validate_topology(topo);
    const auto geo = hmx::GeoTable::from_csv_text("192.0.2.0,192.0.2.255,CN,Shenzhen\n", "x");

    std::vector<hmx::ConnectionRecord> records;
    // 3 mapped / geo-resolved, 2 unmapped / unknown sources.
    for (int i = 0; i < 3; ++i) {
        auto r = make_record("192.0.2." + std::to_string(i), 40000, "wh-fra", 8080, kT0, kT0);
        r.device_id = "cam-1";
        hmx::HttpTransaction t;
        t.method = "GET";
        t.path = "/";
        t.user_agent = i == 0 ? std::optional<std::string>("curl/7.68.0")
                              : std::optional<std::string>("Wget/1.20");
        records.push_back(std::move(r));
        records.back().http_transactions.push_back(std::move(t));
    }
    for (int i = 0; i < 2; ++i)
        records.push_back(make_record("203.0.113." + std::to_string(i), 40001, "wh-mystery",
                                      9999, kT0, kT0));

    for (const auto dim : {hmx::Dimension::City, hmx::Dimension::Port, hmx::Dimension::Country,
                           hmx::Dimension::Device, hmx::Dimension::Agent}) {
        const auto rows = hmx::aggregate(records, &topo, &geo, dim);
        std::size_t total = 0;
        double share = 0.0;
        for (const auto& row : rows) {
            total += row.count;
            share += row.share;
        }
        CHECK(total == records.size());
        CHECK(share == doctest::Approx(1.0));
        // Sorted by count descending, category ascending on ties.
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const bool ordered = rows[i - 1].count > rows[i].count ||
                                 (rows[i - 1].count == rows[i].count &&
                                  rows[i - 1].category < rows[i].category);
            CHECK(ordered);
        }
    }

    const auto cities = hmx::aggregate(records, &topo, &geo, hmx::Dimension::City);
    REQUIRE(cities.size() == 2);
    CHECK(cities[0].category == "Frankfurt");
    CHECK(cities[0].count == 3);
    CHECK(cities[1].category == "Unknown");

    const auto devices = hmx::aggregate(records, &topo, &geo, hmx::Dimension::Device);
    REQUIRE(devices.size() == 2);
    CHECK(devices[0].category == "cam-1");
    CHECK(devices[1].category == "Unmapped");

    const auto countries = hmx::aggregate(records, &topo, &geo, hmx::Dimension::Country);
    CHECK(countries[0].category == "CN");

    const auto agents = hmx::aggregate(records, &topo, &geo, hmx::Dimension::Agent);
    // 2 wget, 1 curl, 2 Other (no transactions at all).
    REQUIRE(agents.size() == 3);
    CHECK(agents[0].count == 2);
    CHECK(agents[1].count == 2);
    CHECK(agents[2].count == 1);

    CHECK(hmx::aggregate({}, &topo, &geo, hmx::Dimension::Port).empty());
}

TEST_CASE("listing impact windows are half-open around the listing moment") {
    std::vector<hmx::ConnectionRecord> records;
    const hmx::Micros listed = kT0 + 30 * hmx::kMicrosPerDay;
    // wh-l: 2/day for 7 days before, 6/day for 14 days after, plus edge cases.
    for (int d = 1; d <= 7; ++d)
        for (int k = 0; k < 2; ++k)
            records.push_back(make_record("10.9.0.1", 40000, "wh-l", 8080,
                                          listed - d * hmx::kMicrosPerDay + k * kSec,
                                          listed - d * hmx::kMicrosPerDay + k * kSec));
    for (int d = 0; d < 14; ++d)
        for (int k = 0; k < 6; ++k)
            records.push_back(make_record("10.9.0.2", 40000, "wh-l", 8080,
                                          listed + d * hmx::kMicrosPerDay + (k + 1) * kSec,
                                          listed + d * hmx::kMicrosPerDay + (k + 1) * kSec));
    // Exactly at the listing moment: belongs to the after-windows only.
    records.push_back(make_record("10.9.0.3", 40000, "wh-l", 8080, listed, listed));
    // Exactly 7 days before: inside [listed-7d, listed).
    records.push_back(
        make_record("10.9.0.4", 40000, "wh-l", 8080, listed - 7 * hmx::kMicrosPerDay,
                    listed - 7 * hmx::kMicrosPerDay));
    // One-sided wormhole: records only after its listing -> insufficient span.
    records.push_back(make_record("10.9.0.5", 40000, "wh-one", 8080, listed + kSec, listed + kSec));

    const std::vector<hmx::ListingEvent> events = {
        {"wh-l", listed}, {"wh-one", listed}, {"wh-silent", listed}};
    const auto impact = hmx::listing_impact(records, events);

    REQUIRE(impact.rows.size() == 3);
    const auto& l = impact.rows[0];
    CHECK(l.wormhole_id == "wh-l");
    CHECK(l.before_week == 2 * 7 + 1); // the -7d edge record counts
    CHECK(l.first_week == 6 * 7 + 1);  // the at-listing record counts
    CHECK(l.two_weeks == 6 * 14 + 1);
    CHECK_FALSE(l.insufficient_span);

    CHECK(impact.rows[1].wormhole_id == "wh-one");
    CHECK(impact.rows[1].insufficient_span);

    // No records at all: zeros, but still averaged.
    CHECK(impact.rows[2].wormhole_id == "wh-silent");
    CHECK_FALSE(impact.rows[2].insufficient_span);
    CHECK(impact.rows[2].before_week == 0);

    CHECK(impact.wormholes_averaged == 2);
    CHECK(impact.avg_before == doctest::Approx((15 + 0) / 2.0));
    CHECK(impact.avg_first_week == doctest::Approx((43 + 0) / 2.0));
    CHECK(impact.avg_two_weeks == doctest::Approx((85 + 0) / 2.0));
}

TEST_CASE("duration statistics per group: mean and median") {
    hmx::Topology topo;
    topo.devices = {{"cam-1", "Trendnet Emulator", {"127.0.0.1", 9001}, {"admin", "admin"},
                     hmx::Difficulty::Easy, hmx::ServiceProtocol::Http},
                    {"cam-2", "Aztech WIPC409HD", {"127.0.0.1", 9002}, {"admin", "admin"},
                     hmx::Difficulty::Default, hmx::ServiceProtocol::Http}};
    topo.wormholes = {{"wh-a", "127.0.0.2", "T", "XX", "lab", {8080, 8081}}};
    topo.mappings = {{"wh-a", 8080, "cam-1", 9001}, {"wh-a", 8081, "cam-2", 9002}};
    hmx::validate_topology(topo);

    auto session_of = [](const std::string& dev, double secs, int salt) {
        hmx::Session s;
        s.remote_ip = "10.4.0." + std::to_string(salt);
        s.wormhole_id = "wh-a";
        s.wormhole_port = dev == "cam-1" ? 8080 : 8081;
        s.device_id = dev;
        s.first_ts = kT0;
        s.last_ts = kT0 + static_cast<hmx::Micros>(secs * kSec);
        return s;
    };
    const std::vector<hmx::Session> sessions = {
        session_of("cam-1", 10, 1), session_of("cam-1", 20, 2), session_of("cam-1", 90, 3),
        session_of("cam-2", 40, 4), session_of("cam-2", 60, 5)};

    const auto by_device = hmx::duration_stats(sessions, &topo, hmx::GroupBy::Device);
    REQUIRE(by_device.size() == 2);
    CHECK(by_device[0].group == "cam-1");
    CHECK(by_device[0].sessions == 3);
    CHECK(by_device[0].mean_seconds == doctest::Approx(40.0));
    CHECK(by_device[0].median_seconds == doctest::Approx(20.0));
    CHECK(by_device[1].group == "cam-2");
    CHECK(by_device[1].mean_seconds == doctest::Approx(50.0));
    CHECK(by_device[1].median_seconds == doctest::Approx(50.0)); // even count: midpoint

    const auto by_model = hmx::duration_stats(sessions, &topo, hmx::GroupBy::Model);
    REQUIRE(by_model.size() == 2);
    CHECK(by_model[0].group == "Aztech WIPC409HD");
    CHECK(by_model[1].group == "Trendnet Emulator");
}

TEST_CASE("record store round trips hostile strings") {
    const auto dir = fresh_dir("hmx_sau_store");
    std::vector<hmx::ConnectionRecord> records;
    auto r = make_record("203.0.113.5", 41999, "wh-a", 8080, kT0 + 123456, kT0 + 999999);
    r.device_id = "cam-1";
    r.bytes_in = 777;
    r.bytes_out = 8888;
    hmx::HttpTransaction t1;
    t1.method = "GET";
    t1.path = "/search?q=\"a,b\"";
    t1.user_agent = "Mozilla/5.0 (weird, \"agent\")";
    t1.response_status = 200;
    t1.auth = hmx::AuthView{"ad,min", "pa\"ss", true};
    r.http_transactions.push_back(std::move(t1));
    hmx::HttpTransaction t2;
    t2.method = "POST";
    t2.path = "/upload";
    records.push_back(std::move(r));
    records.back().http_transactions.push_back(std::move(t2));
    records.push_back(make_record("198.51.100.4", 42000, "wh-b", 8081, kT0, kT0));

    hmx::write_record_store(records, dir / "records.csv", dir / "transactions.csv");
    const auto back = hmx::read_record_store(dir / "records.csv", dir / "transactions.csv");

    REQUIRE(back.size() == 2);
    CHECK(back[0].remote_ip == records[0].remote_ip);
    CHECK(back[0].remote_port == records[0].remote_port);
    CHECK(back[0].device_id == records[0].device_id);
    CHECK(back[0].first_ts == records[0].first_ts);
    CHECK(back[0].last_ts == records[0].last_ts);
    CHECK(back[0].bytes_in == 777);
    REQUIRE(back[0].http_transactions.size() == 2);
    const auto& bt = back[0].http_transactions[0];
    CHECK(bt.path == "/search?q=\"a,b\"");
    CHECK(bt.user_agent == records[0].http_transactions[0].user_agent);
    REQUIRE(bt.auth.has_value());
    CHECK(bt.auth->username == "ad,min");
    CHECK(bt.auth->password == "pa\"ss");
    CHECK(bt.auth->success);
    CHECK_FALSE(back[0].http_transactions[1].response_status.has_value());
    CHECK_FALSE(back[0].http_transactions[1].auth.has_value());
    CHECK(back[1].device_id == std::nullopt);
    CHECK(back[1].http_transactions.empty());
}

TEST_CASE("label maps parse endpoint,label lines") {
    const auto dir = fresh_dir("hmx_sau_labelmap");
    std::ofstream(dir / "labels.csv") << "# capture endpoint -> attacker source label\n"
                                      << "127.0.0.1:35000,192.0.2.10\n"
                                      << "127.0.0.1:35001,192.0.2.11\n";
    const auto map = hmx::load_label_map(dir / "labels.csv");
    REQUIRE(map.size() == 2);
    CHECK(map.at("127.0.0.1:35000") == "192.0.2.10");
}

TEST_CASE("distinct remotes counts unique source addresses") {
    std::vector<hmx::ConnectionRecord> records = {
        make_record("1.1.1.1", 1, "w", 1, kT0, kT0),
        make_record("1.1.1.1", 2, "w", 1, kT0, kT0),
        make_record("2.2.2.2", 3, "w", 1, kT0, kT0),
    };
    CHECK(hmx::distinct_remotes(records) == 2);
    CHECK(hmx::distinct_remotes({}) == 0);
}
