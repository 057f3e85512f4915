#include "hmx/decoy.hpp"
#include "hmx/forwarder.hpp"
#include "hmx/pcapio.hpp"
#include "hmx/wormhole.hpp"

#include "doctest.h"

#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

hmx::DecoyDevice::Options echo_opts() {
    return {.profile_name = "echo",
            .host = "127.0.0.1",
            .port = 0,
            .log_path = {},
            .upload_dir = {},
            .frame_cycling = false,
            .clock = nullptr};
}

hmx::Topology topo_for(std::uint16_t device_port) {
    // Two registry entries for the same echo process: a device may be exposed
    // at most once per wormhole, and the fixture needs both ports mapped.
    hmx::Topology t;
    t.devices = {{"echo-1", "Echo Fixture", {"127.0.0.1", device_port}, {"", ""},
                  hmx::Difficulty::Default, hmx::ServiceProtocol::RawTcp},
                 {"echo-2", "Echo Fixture", {"127.0.0.1", device_port}, {"", ""},
                  hmx::Difficulty::Default, hmx::ServiceProtocol::RawTcp}};
    t.wormholes = {{"wh-loop", "127.0.0.2", "Testville", "XX", "lab", {18080, 18081}}};
    t.mappings = {{"wh-loop", 18080, "echo-1", device_port}, {"wh-loop", 18081, "echo-2", device_port}};
    t.max_connections_per_device = 8;
    hmx::validate_topology(t);
    return t;
}

hmx::WormholeOptions agent_opts(const hmx::Topology& topo, std::uint16_t fwd_port,
                                const fs::path& captures) {
    hmx::WormholeOptions opt;
    opt.spec = topo.wormholes[0];
    opt.forwarder_address = {"127.0.0.1", fwd_port};
    opt.capture_dir = captures;
    opt.backoff_initial_ms = 50;
    opt.backoff_cap_ms = 200;
    opt.connect_timeout_ms = 500;
    return opt;
}

std::vector<std::uint8_t> rand_bytes(std::size_t n, std::uint32_t seed) {
    std::vector<std::uint8_t> out(n);
    std::mt19937 rng(seed);
    for (auto& b : out)
        b = static_cast<std::uint8_t>(rng());
    return out;
}

std::vector<std::uint8_t> echo_through(std::uint16_t port, const std::vector<std::uint8_t>& data) {
    auto sock = hmx::Socket::connect_to("127.0.0.2", port, 2000);
    sock.set_recv_timeout_ms(5000);
    REQUIRE(sock.send_all(data));
    sock.shutdown_write();
    std::vector<std::uint8_t> back;
    std::uint8_t buf[8192];
    long n;
    while ((n = sock.recv_some(buf, sizeof(buf))) > 0)
        back.insert(back.end(), buf, buf + n);
    return back;
}

} // namespace

TEST_CASE("attacker bytes ride the tunnel to the device and back") {
    const auto dir = fresh_dir("hmx_wh_relay");
    hmx::DecoyDevice echo(echo_opts());
    echo.start();
    const auto topo = topo_for(echo.port());

    hmx::ForwarderOptions fo;
    fo.topology = topo;
    hmx::Forwarder fwd(std::move(fo));
    fwd.start();

    hmx::WormholeAgent agent(agent_opts(topo, fwd.port(), dir));
    agent.start();
    REQUIRE(agent.wait_tunnel_up(3000));

    const auto payload = rand_bytes(100'000, 11);
    const auto back = echo_through(18080, payload);
    CHECK(back == payload);
    CHECK(agent.bytes_from_attackers() == payload.size());
    CHECK(agent.bytes_to_attackers() == payload.size());

    // Both mapped ports work concurrently.
    const auto p2 = rand_bytes(500, 12);
    CHECK(echo_through(18081, p2) == p2);

    agent.stop();
    fwd.stop();
    echo.stop();

    // The capture holds one complete flow per connection with both payloads.
    int flows = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        hmx::StreamAssembler asm_;
        for (const auto& pkt : hmx::read_pcap_file(entry.path())) {
            const auto t = hmx::parse_raw_ip_tcp(pkt);
            REQUIRE(t.has_value());
            asm_.add(*t);
        }
        for (const auto& f : asm_.finish()) {
            ++flows;
            CHECK(f.handshake_complete);
            if (f.server_port == 18080) {
                CHECK(f.client_payload == payload);
                CHECK(f.server_payload == payload);
            } else {
                CHECK(f.server_port == 18081);
                CHECK(f.client_payload == p2);
            }
        }
    }
    CHECK(flows == 2);
}

TEST_CASE("log-only mode captures without relaying") {
    const auto dir = fresh_dir("hmx_wh_logonly");
    const auto topo = topo_for(1); // device endpoint never used
    hmx::WormholeOptions opt = agent_opts(topo, 1, dir);
    opt.log_only = true;
    hmx::WormholeAgent agent(std::move(opt));
    agent.start();
    // Log-only agents are immediately "up": no tunnel needed for the ports.
    std::this_thread::sleep_for(100ms);
    REQUIRE_FALSE(agent.bound_ports().empty());

    auto sock = hmx::Socket::connect_to("127.0.0.2", 18080, 2000);
    sock.set_recv_timeout_ms(1000);
    const auto probe = rand_bytes(1500, 3);
    REQUIRE(sock.send_all(probe));
    sock.shutdown_write();
    std::uint8_t buf[256];
    // Nothing ever comes back.
    CHECK(sock.recv_some(buf, sizeof(buf)) <= 0);
    sock.close();
    std::this_thread::sleep_for(200ms);
    agent.stop();

    bool found = false;
    for (const auto& entry : fs::directory_iterator(dir)) {
        hmx::StreamAssembler asm_;
        for (const auto& pkt : hmx::read_pcap_file(entry.path())) {
            const auto t = hmx::parse_raw_ip_tcp(pkt);
            REQUIRE(t.has_value());
            asm_.add(*t);
        }
        for (const auto& f : asm_.finish()) {
            if (f.client_payload == probe && f.server_payload.empty())
                found = true;
        }
    }
    CHECK(found);
    CHECK(agent.tunnel_connects() == 0);
}

TEST_CASE("ports stay closed while the tunnel is down, reconnect reopens them") {
    const auto dir = fresh_dir("hmx_wh_reconnect");
    hmx::DecoyDevice echo(echo_opts());
    echo.start();
    const auto topo = topo_for(echo.port());

    // Reserve a forwarder port by starting and stopping one.
    std::uint16_t fwd_port;
    {
        hmx::ForwarderOptions fo;
        fo.topology = topo;
        hmx::Forwarder probe_fwd(std::move(fo));
        probe_fwd.start();
        fwd_port = probe_fwd.port();
        probe_fwd.stop();
    }

    hmx::WormholeAgent agent(agent_opts(topo, fwd_port, dir));
    agent.start();
    std::this_thread::sleep_for(200ms);
    CHECK_FALSE(agent.tunnel_up());
    CHECK(agent.bound_ports().empty());
    // An attacker finds nothing listening.
    CHECK_THROWS_AS((void)hmx::Socket::connect_to("127.0.0.2", 18080, 300), hmx::NetError);

    // The relay comes back on the same port; the agent reconnects by itself.
    hmx::ForwarderOptions fo;
    fo.topology = topo;
    fo.listen_port = fwd_port;
    hmx::Forwarder fwd(std::move(fo));
    fwd.start();
    REQUIRE(agent.wait_tunnel_up(5000));
    for (int i = 0; i < 100 && agent.bound_ports().size() != 2; ++i)
        std::this_thread::sleep_for(20ms);
    REQUIRE(agent.bound_ports().size() == 2);

    const auto payload = rand_bytes(256, 9);
    CHECK(echo_through(18080, payload) == payload);
    CHECK(agent.tunnel_connects() >= 1);

    agent.stop();
    fwd.stop();
    echo.stop();
}

TEST_CASE("a severed tunnel ends captures after the last relayed byte") {
    const auto dir = fresh_dir("hmx_wh_severed");
    hmx::DecoyDevice echo(echo_opts());
    echo.start();
    const auto topo = topo_for(echo.port());

    hmx::ForwarderOptions fo;
    fo.topology = topo;
    auto fwd = std::make_unique<hmx::Forwarder>(std::move(fo));
    fwd->start();

    hmx::WormholeOptions wo = agent_opts(topo, fwd->port(), dir);
    wo.max_reconnect_attempts = 1;
    hmx::WormholeAgent agent(std::move(wo));
    agent.start();
    REQUIRE(agent.wait_tunnel_up(3000));

    auto sock = hmx::Socket::connect_to("127.0.0.2", 18080, 2000);
    sock.set_recv_timeout_ms(2000);
    const auto first = rand_bytes(64, 21);
    REQUIRE(sock.send_all(first));
    std::uint8_t buf[4096];
    long n = sock.recv_some(buf, sizeof(buf));
    REQUIRE(n == 64);

    // Relay dies mid-connection.
    fwd->stop();
    fwd.reset();
    // The attacker-facing socket gets torn down rather than hanging.
    while ((n = sock.recv_some(buf, sizeof(buf))) > 0) {
    }
    CHECK(n <= 0);
    sock.close();
    agent.stop();
    echo.stop();

    // The capture still holds the bytes relayed before the cut.
    bool found = false;
    for (const auto& entry : fs::directory_iterator(dir)) {
        hmx::StreamAssembler asm_;
        for (const auto& pkt : hmx::read_pcap_file(entry.path())) {
            const auto t = hmx::parse_raw_ip_tcp(pkt);
            if (t)
                asm_.add(*t);
        }
        for (const auto& f : asm_.finish()) {
            if (f.client_payload == first && f.server_payload == first)
                found = true;
        }
    }
    CHECK(found);
}
