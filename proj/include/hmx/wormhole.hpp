#pragma once

#include "hmx/capture.hpp"
#include "hmx/muxtunnel.hpp"
#include "hmx/net.hpp"
#include "hmx/registry.hpp"
#include "hmx/time.hpp"
#include "hmx/tunnel_io.hpp"
#include "hmx/util.hpp"

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace hmx {

struct WormholeOptions {
    WormholeSpec spec;        // identity, bind address, listen ports
    HostPort forwarder_address;
    std::filesystem::path capture_dir;
    bool log_only{false}; // capture locally, never tunnel
    Clock* clock{nullptr};

    // Tunnel liveness and reconnect tuning (tests shrink these).
    int ping_after_ms{15000};   // send PING after this much tunnel silence
    int max_missed_pongs{3};    // declare the tunnel dead after this many unanswered PINGs
    int backoff_initial_ms{1000};
    int backoff_cap_ms{60000};
    int connect_timeout_ms{3000};
    int max_reconnect_attempts{0}; // 0 = retry forever
};

// The public-facing agent: binds the wormhole's listen ports, captures every
// byte in both directions, and multiplexes accepted connections over a single
// tunnel to the forwarder. In log-only mode traffic is captured and never
// relayed. While the tunnel is down the agent stops accepting (ports closed),
// mimicking an offline device.
class WormholeAgent {
public:
    explicit WormholeAgent(WormholeOptions opt);
    ~WormholeAgent();
    WormholeAgent(const WormholeAgent&) = delete;
    WormholeAgent& operator=(const WormholeAgent&) = delete;

    void start();
    void stop();

    bool tunnel_up() const { return tunnel_up_.load(); }
    int tunnel_connects() const { return tunnel_connects_.load(); }
    std::vector<std::uint16_t> bound_ports() const;
    std::uint64_t bytes_from_attackers() const { return bytes_in_.load(); }
    std::uint64_t bytes_to_attackers() const { return bytes_out_.load(); }
    CaptureSink& capture_sink() { return sink_; }

    // Blocks until the tunnel is up (true) or the deadline passes (false).
    bool wait_tunnel_up(int timeout_ms);

private:
    struct AgentConn {
        std::uint32_t conn_id{0};
        std::uint16_t public_port{0};
        Socket sock;
        ConnCapture capture;
        std::atomic<std::uint64_t> bytes_in{0}, bytes_out{0};
        bool close_local{false};  // we sent CLOSE (attacker-side EOF); guarded by conns_mu_
        bool close_remote{false}; // CLOSE delivered from the forwarder; guarded by conns_mu_
        std::atomic<bool> finished{false};
        std::atomic<bool> reader_done{false}; // reader thread exited; safe to reap
        std::thread reader;

        AgentConn(Socket s, ConnCapture cap) : sock(std::move(s)), capture(std::move(cap)) {}
    };

    void supervisor();
    void open_listeners();
    void close_listeners();
    void accept_loop(std::size_t index);
    void tunnel_read_loop();
    void conn_reader(std::shared_ptr<AgentConn> conn);
    void log_only_reader(std::shared_ptr<AgentConn> conn);
    void finalize_conn(const std::shared_ptr<AgentConn>& conn, bool orderly);
    void reap_retired();
    void teardown_all_conns();
    MuxResult step_locked(MuxEvent ev); // serializes mux transitions + frame writes
    bool interruptible_sleep(int ms);   // false when stopping

    WormholeOptions opt_;
    Clock* clock_;
    CaptureSink sink_;

    std::atomic<bool> running_{false};
    std::atomic<bool> tunnel_up_{false};
    std::atomic<int> tunnel_connects_{0};
    std::atomic<std::uint64_t> bytes_in_{0}, bytes_out_{0};

    std::thread supervisor_;
    std::mutex sleep_mu_;
    std::condition_variable sleep_cv_;

    // Tunnel state (owned by the supervisor between connect and disconnect).
    Socket tunnel_sock_;
    std::unique_ptr<FrameWriter> writer_;
    std::mutex mux_mu_;
    MuxState mux_;

    struct Port {
        std::uint16_t port;
        Listener listener;
        std::thread accept_thread;
    };
    mutable std::mutex ports_mu_;
    std::vector<std::unique_ptr<Port>> ports_;

    std::mutex conns_mu_;
    std::map<std::uint32_t, std::shared_ptr<AgentConn>> conns_;
    std::vector<std::shared_ptr<AgentConn>> retired_;
    std::uint32_t log_only_next_id_{1};
};

} // namespace hmx
