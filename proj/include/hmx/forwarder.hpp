#pragma once

#include "hmx/net.hpp"
#include "hmx/registry.hpp"
#include "hmx/time.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hmx {

// Per-device concurrent-connection cap. active() never exceeds the cap.
class DeviceGate {
public:
    explicit DeviceGate(int cap) : cap_(cap) {}

    bool try_acquire() {
        int cur = active_.load();
        while (cur < cap_) {
            if (active_.compare_exchange_weak(cur, cur + 1)) {
                return true;
            }
        }
        return false;
    }

    void release() { active_.fetch_sub(1); }
    int active() const { return active_.load(); }
    int cap() const { return cap_; }

private:
    std::atomic<int> active_{0};
    int cap_;
};

// Pluggable device transport so tests can fake devices and inject failures.
class DeviceConnector {
public:
    virtual ~DeviceConnector() = default;
    // Throws NetError when the device cannot be reached.
    virtual Socket connect_device(const HostPort& endpoint) = 0;
};

class TcpDeviceConnector : public DeviceConnector {
public:
    explicit TcpDeviceConnector(int timeout_ms = 3000) : timeout_ms_(timeout_ms) {}
    Socket connect_device(const HostPort& endpoint) override {
        return Socket::connect_to(endpoint.host, endpoint.port, timeout_ms_);
    }

private:
    int timeout_ms_;
};

struct ForwarderOptions {
    Topology topology;
    std::string listen_host{"127.0.0.1"};
    std::uint16_t listen_port{0}; // 0 = ephemeral
    std::filesystem::path event_log; // "" = no log
    Clock* clock{nullptr};
    std::shared_ptr<DeviceConnector> connector; // default: real TCP
};

// Aggregate counters, readable while running.
struct ForwarderCounters {
    std::atomic<std::uint64_t> tunnels_accepted{0};
    std::atomic<std::uint64_t> tunnels_torn_down{0};
    std::atomic<std::uint64_t> sessions_opened{0};
    std::atomic<std::uint64_t> sessions_closed{0};
    std::atomic<std::uint64_t> rejects_no_mapping{0};
    std::atomic<std::uint64_t> rejects_saturated{0};
    std::atomic<std::uint64_t> rejects_unreachable{0};
    std::atomic<std::uint64_t> bytes_in{0};  // attacker -> device
    std::atomic<std::uint64_t> bytes_out{0}; // device -> attacker
};

// Central relay: terminates tunnels from the listener agents, resolves each
// OPEN against the topology, enforces per-device caps, and relays payload
// bidirectionally without modification.
class Forwarder {
public:
    explicit Forwarder(ForwarderOptions opt);
    ~Forwarder();
    Forwarder(const Forwarder&) = delete;
    Forwarder& operator=(const Forwarder&) = delete;

    void start();
    void stop();
    std::uint16_t port() const { return port_; }

    const ForwarderCounters& counters() const { return counters_; }
    int gate_active(const std::string& device_id) const;

private:
    struct Tunnel;
    struct Session;

    void accept_loop();
    void tunnel_loop(std::shared_ptr<Tunnel> tunnel);
    void handle_open(Tunnel& tunnel, std::uint32_t conn_id, std::uint16_t public_port);
    void device_pump(std::shared_ptr<Tunnel> tunnel, std::shared_ptr<Session> session);
    void reap_retired(Tunnel& tunnel);
    void finish_session(Tunnel& tunnel, const std::shared_ptr<Session>& session,
                        const char* reason);
    void teardown_tunnel(Tunnel& tunnel, const std::string& why);
    void log_event(const std::string& event, const std::string& wormhole_id,
                   const std::string& conn_id, const std::string& public_port,
                   const std::string& device_id, std::uint64_t bytes_in, std::uint64_t bytes_out,
                   const std::string& detail);

    ForwarderOptions opt_;
    Clock* clock_;
    std::uint16_t port_{0};
    Listener listener_;
    std::thread accept_thread_;
    std::atomic<bool> running_{false};

    std::map<std::string, std::unique_ptr<DeviceGate>> gates_;
    ForwarderCounters counters_;

    std::mutex tunnels_mu_;
    std::vector<std::shared_ptr<Tunnel>> tunnels_;

    std::mutex log_mu_;
};

} // namespace hmx
