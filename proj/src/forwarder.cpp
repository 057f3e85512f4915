#include "hmx/forwarder.hpp"

#include "hmx/log.hpp"
#include "hmx/tunnel_io.hpp"

#include <fstream>

namespace hmx {

struct Forwarder::Session {
    std::uint32_t conn_id{0};
    std::uint16_t public_port{0};
    std::string device_id;
    Socket device_sock;
    DeviceGate* gate{nullptr};
    Micros started_at{0};
    std::atomic<std::uint64_t> bytes_in{0};  // attacker -> device
    std::atomic<std::uint64_t> bytes_out{0}; // device -> attacker
    std::atomic<bool> close_from_agent{false}; // CLOSE frame received for this conn
    std::atomic<bool> close_to_agent{false};   // CLOSE frame sent for this conn
    std::atomic<bool> finished{false};
    std::atomic<bool> pump_done{false}; // pump thread exited; safe to reap
    std::thread pump;
};

struct Forwarder::Tunnel {
    Socket sock;
    std::unique_ptr<FrameWriter> writer;
    std::string wormhole_id;
    std::atomic<bool> alive{true};
    std::mutex sessions_mu;
    std::map<std::uint32_t, std::shared_ptr<Session>> sessions;
    std::vector<std::shared_ptr<Session>> retired; // finished but pump not yet joined
    std::thread thread;
};

Forwarder::Forwarder(ForwarderOptions opt)
    : opt_(std::move(opt)), clock_(opt_.clock ? opt_.clock : &SystemClock::instance()) {
    opt_.topology.finalize();
    for (const auto& dev : opt_.topology.devices) {
        gates_.emplace(dev.device_id,
                       std::make_unique<DeviceGate>(opt_.topology.max_connections_per_device));
    }
    if (!opt_.connector) {
        opt_.connector = std::make_shared<TcpDeviceConnector>();
    }
}

Forwarder::~Forwarder() {
    stop();
}

void Forwarder::start() {
    if (running_.exchange(true)) {
        return;
    }
    listener_ = Listener::bind_listen(opt_.listen_host, opt_.listen_port);
    port_ = listener_.port();
    accept_thread_ = std::thread([this] { accept_loop(); });
    log_info("forwarder", "listening on " + opt_.listen_host + ":" + std::to_string(port_));
}

void Forwarder::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    listener_.shutdown();
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    listener_.close();
    std::vector<std::shared_ptr<Tunnel>> tunnels;
    {
        std::lock_guard lock(tunnels_mu_);
        tunnels.swap(tunnels_);
    }
    for (auto& t : tunnels) {
        t->sock.shutdown_both();
    }
    for (auto& t : tunnels) {
        if (t->thread.joinable()) {
            t->thread.join();
        }
    }
}

int Forwarder::gate_active(const std::string& device_id) const {
    const auto it = gates_.find(device_id);
    return it == gates_.end() ? -1 : it->second->active();
}

void Forwarder::accept_loop() {
    while (running_.load()) {
        Socket sock = listener_.accept_conn();
        if (!sock.valid()) {
            break;
        }
        sock.set_nodelay();
        sock.set_recv_timeout_ms(120000); // live agents ping on 15 s silence
        auto tunnel = std::make_shared<Tunnel>();
        tunnel->sock = std::move(sock);
        tunnel->writer = std::make_unique<FrameWriter>(&tunnel->sock);
        counters_.tunnels_accepted.fetch_add(1);
        {
            std::lock_guard lock(tunnels_mu_);
            tunnels_.push_back(tunnel);
        }
        tunnel->thread = std::thread([this, tunnel] { tunnel_loop(tunnel); });
    }
}

void Forwarder::tunnel_loop(std::shared_ptr<Tunnel> tunnel) {
    FrameReader reader(&tunnel->sock);
    Frame frame;
    std::string detail;

    // The peer must introduce itself before anything is relayed.
    const auto first = reader.next(frame, &detail);
    if (first != FrameReader::Status::FrameReady || frame.type != FrameType::Hello) {
        teardown_tunnel(*tunnel, "no HELLO received");
        return;
    }
    const std::string claimed_id = frame.payload_as_string();
    if (opt_.topology.find_wormhole(claimed_id) == nullptr) {
        teardown_tunnel(*tunnel, "unknown wormhole id '" + claimed_id + "'");
        return;
    }
    tunnel->wormhole_id = claimed_id;
    log_event("hello", claimed_id, "-", "-", "-", 0, 0, tunnel->sock.peer_ip());

    while (running_.load() && tunnel->alive.load()) {
        reap_retired(*tunnel);
        const auto status = reader.next(frame, &detail);
        if (status == FrameReader::Status::Timeout) {
            teardown_tunnel(*tunnel, "tunnel idle timeout");
            return;
        }
        if (status == FrameReader::Status::Eof) {
            teardown_tunnel(*tunnel, "tunnel closed by agent");
            return;
        }
        if (status == FrameReader::Status::Error) {
            teardown_tunnel(*tunnel, "tunnel transport error");
            return;
        }
        if (status == FrameReader::Status::Malformed) {
            // Protocol violation kills this tunnel only; other tunnels and
            // their sessions are untouched.
            teardown_tunnel(*tunnel, "malformed frame: " + detail);
            return;
        }
        switch (frame.type) {
        case FrameType::Open: {
            const auto port = frame.open_port();
            if (!port) {
                teardown_tunnel(*tunnel, "OPEN with malformed port payload");
                return;
            }
            handle_open(*tunnel, frame.conn_id, *port);
            break;
        }
        case FrameType::Data: {
            std::shared_ptr<Session> session;
            {
                std::lock_guard lock(tunnel->sessions_mu);
                const auto it = tunnel->sessions.find(frame.conn_id);
                if (it != tunnel->sessions.end()) {
                    session = it->second;
                }
            }
            if (!session || session->close_from_agent.load()) {
                break; // stale data for a connection already gone; drop
            }
            if (!session->device_sock.send_all(frame.payload)) {
                // Device write failed; close our half toward the agent.
                session->device_sock.shutdown_both();
            } else {
                session->bytes_in.fetch_add(frame.payload.size());
                counters_.bytes_in.fetch_add(frame.payload.size());
            }
            break;
        }
        case FrameType::Close: {
            std::shared_ptr<Session> session;
            {
                std::lock_guard lock(tunnel->sessions_mu);
                const auto it = tunnel->sessions.find(frame.conn_id);
                if (it != tunnel->sessions.end()) {
                    session = it->second;
                }
            }
            if (!session) {
                break;
            }
            session->close_from_agent.store(true);
            // Attacker finished sending: pass the EOF to the device.
            session->device_sock.shutdown_write();
            if (session->close_to_agent.load()) {
                finish_session(*tunnel, session, "closed");
            }
            break;
        }
        case FrameType::Ping:
            tunnel->writer->send(Frame::pong());
            break;
        case FrameType::Pong:
            break;
        case FrameType::Hello:
            break; // duplicate HELLO ignored
        }
    }
    teardown_tunnel(*tunnel, "forwarder stopping");
}

void Forwarder::handle_open(Tunnel& tunnel, std::uint32_t conn_id, std::uint16_t public_port) {
    const std::string port_str = std::to_string(public_port);
    ResolveResult target;
    try {
        target = resolve(opt_.topology, tunnel.wormhole_id, public_port);
    } catch (const TopologyError&) {
        counters_.rejects_no_mapping.fetch_add(1);
        log_event("reject", tunnel.wormhole_id, std::to_string(conn_id), port_str, "-", 0, 0,
                  "no-mapping");
        tunnel.writer->send(Frame::close(conn_id));
        return;
    }
    DeviceGate* gate = gates_.at(target.device_id).get();
    if (!gate->try_acquire()) {
        counters_.rejects_saturated.fetch_add(1);
        log_event("reject", tunnel.wormhole_id, std::to_string(conn_id), port_str,
                  target.device_id, 0, 0, "device-saturated");
        tunnel.writer->send(Frame::close(conn_id));
        return;
    }
    Socket device_sock;
    try {
        device_sock = opt_.connector->connect_device(target.endpoint);
    } catch (const NetError& ex) {
        gate->release();
        counters_.rejects_unreachable.fetch_add(1);
        log_event("reject", tunnel.wormhole_id, std::to_string(conn_id), port_str,
                  target.device_id, 0, 0, std::string("device-unreachable: ") + ex.what());
        tunnel.writer->send(Frame::close(conn_id));
        return;
    }
    device_sock.set_nodelay();

    auto session = std::make_shared<Session>();
    session->conn_id = conn_id;
    session->public_port = public_port;
    session->device_id = target.device_id;
    session->device_sock = std::move(device_sock);
    session->gate = gate;
    session->started_at = clock_->now();
    {
        std::lock_guard lock(tunnel.sessions_mu);
        tunnel.sessions.emplace(conn_id, session);
    }
    counters_.sessions_opened.fetch_add(1);
    log_event("open", tunnel.wormhole_id, std::to_string(conn_id), port_str, target.device_id, 0,
              0, target.endpoint.str());

    // Find the shared_ptr for this tunnel so the pump can outlive this frame.
    std::shared_ptr<Tunnel> tunnel_ref;
    {
        std::lock_guard lock(tunnels_mu_);
        for (const auto& t : tunnels_) {
            if (t.get() == &tunnel) {
                tunnel_ref = t;
                break;
            }
        }
    }
    if (!tunnel_ref) {
        // stop() already detached this tunnel from the registry; abort the open.
        finish_session(tunnel, session, "forwarder stopping");
        tunnel.writer->send(Frame::close(conn_id));
        return;
    }
    session->pump = std::thread(
        [this, tunnel_ref, session] { device_pump(tunnel_ref, session); });
}

void Forwarder::device_pump(std::shared_ptr<Tunnel> tunnel, std::shared_ptr<Session> session) {
    std::vector<std::uint8_t> buf(kMaxFramePayload);
    while (true) {
        const long n = session->device_sock.recv_some(buf.data(), buf.size());
        if (n <= 0) {
            break; // device EOF or error
        }
        session->bytes_out.fetch_add(static_cast<std::uint64_t>(n));
        counters_.bytes_out.fetch_add(static_cast<std::uint64_t>(n));
        const Frame f =
            Frame::data(session->conn_id,
                        std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
        if (!tunnel->writer->send(f)) {
            break; // tunnel gone; its loop will tear everything down
        }
    }
    if (!session->close_to_agent.exchange(true)) {
        tunnel->writer->send(Frame::close(session->conn_id));
    }
    if (session->close_from_agent.load()) {
        finish_session(*tunnel, session, "closed");
    }
    session->pump_done.store(true);
}

void Forwarder::reap_retired(Tunnel& tunnel) {
    // Joins finished pump threads and drops our references so device-side
    // fds close as traffic flows instead of piling up until tunnel teardown.
    std::vector<std::shared_ptr<Session>> done;
    {
        std::lock_guard lock(tunnel.sessions_mu);
        auto it = tunnel.retired.begin();
        while (it != tunnel.retired.end()) {
            if ((*it)->pump_done.load()) {
                done.push_back(std::move(*it));
                it = tunnel.retired.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& s : done) {
        if (s->pump.joinable()) {
            s->pump.join();
        }
    }
}

void Forwarder::finish_session(Tunnel& tunnel, const std::shared_ptr<Session>& session,
                               const char* reason) {
    if (session->finished.exchange(true)) {
        return;
    }
    session->gate->release();
    counters_.sessions_closed.fetch_add(1);
    {
        std::lock_guard lock(tunnel.sessions_mu);
        tunnel.sessions.erase(session->conn_id);
        tunnel.retired.push_back(session);
    }
    session->device_sock.shutdown_both();
    log_event("close", tunnel.wormhole_id, std::to_string(session->conn_id),
              std::to_string(session->public_port), session->device_id, session->bytes_in.load(),
              session->bytes_out.load(), reason);
}

void Forwarder::teardown_tunnel(Tunnel& tunnel, const std::string& why) {
    if (!tunnel.alive.exchange(false)) {
        return;
    }
    counters_.tunnels_torn_down.fetch_add(1);
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(tunnel.sessions_mu);
        for (auto& [id, s] : tunnel.sessions) {
            all.push_back(s);
        }
        tunnel.sessions.clear();
        for (auto& s : tunnel.retired) {
            all.push_back(s);
        }
        tunnel.retired.clear();
    }
    for (auto& s : all) {
        s->device_sock.shutdown_both(); // unblocks the pump
    }
    for (auto& s : all) {
        if (s->pump.joinable()) {
            s->pump.join();
        }
    }
    for (auto& s : all) {
        if (!s->finished.exchange(true)) {
            s->gate->release();
            counters_.sessions_closed.fetch_add(1);
            log_event("close", tunnel.wormhole_id, std::to_string(s->conn_id),
                      std::to_string(s->public_port), s->device_id, s->bytes_in.load(),
                      s->bytes_out.load(), "tunnel-teardown");
        }
    }
    tunnel.sock.shutdown_both();
    log_event("tunnel-close", tunnel.wormhole_id.empty() ? "-" : tunnel.wormhole_id, "-", "-",
              "-", 0, 0, why);
    log_info("forwarder", "tunnel closed (" +
                              (tunnel.wormhole_id.empty() ? std::string("unidentified")
                                                          : tunnel.wormhole_id) +
                              "): " + why);
}

void Forwarder::log_event(const std::string& event, const std::string& wormhole_id,
                          const std::string& conn_id, const std::string& public_port,
                          const std::string& device_id, std::uint64_t bytes_in,
                          std::uint64_t bytes_out, const std::string& detail) {
    if (opt_.event_log.empty()) {
        return;
    }
    std::lock_guard lock(log_mu_);
    std::ofstream out(opt_.event_log, std::ios::app);
    out << format_iso8601(clock_->now()) << " | " << event << " | " << wormhole_id << " | "
        << conn_id << " | " << public_port << " | " << device_id << " | " << bytes_in << " | "
        << bytes_out << " | " << detail << "\n";
}

} // namespace hmx
