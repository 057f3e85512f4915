#include "hmx/wormhole.hpp"

#include "hmx/log.hpp"

#include <algorithm>
#include <chrono>

namespace hmx {

namespace {

std::int64_t steady_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace

WormholeAgent::WormholeAgent(WormholeOptions opt)
    : opt_(std::move(opt)), clock_(opt_.clock ? opt_.clock : &SystemClock::instance()),
      sink_(opt_.capture_dir, opt_.spec.wormhole_id) {}

WormholeAgent::~WormholeAgent() {
    stop();
}

void WormholeAgent::start() {
    if (running_.exchange(true)) {
        return;
    }
    supervisor_ = std::thread([this] { supervisor(); });
}

void WormholeAgent::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    sleep_cv_.notify_all();
    if (supervisor_.joinable()) {
        supervisor_.join();
    }
    sink_.flush();
}

bool WormholeAgent::wait_tunnel_up(int timeout_ms) {
    const auto deadline = steady_ms() + timeout_ms;
    while (steady_ms() < deadline) {
        if (tunnel_up_.load()) {
            return true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return tunnel_up_.load();
}

std::vector<std::uint16_t> WormholeAgent::bound_ports() const {
    std::vector<std::uint16_t> out;
    std::lock_guard lock(ports_mu_);
    for (const auto& p : ports_) {
        out.push_back(p->port);
    }
    return out;
}

bool WormholeAgent::interruptible_sleep(int ms) {
    std::unique_lock lock(sleep_mu_);
    sleep_cv_.wait_for(lock, std::chrono::milliseconds(ms), [this] { return !running_.load(); });
    return running_.load();
}

MuxResult WormholeAgent::step_locked(MuxEvent ev) {
    std::lock_guard lock(mux_mu_);
    MuxResult result = mux_step(mux_, ev);
    if (writer_) {
        for (const auto& frame : result.emit) {
            writer_->send(frame);
        }
    }
    return result;
}

void WormholeAgent::supervisor() {
    const std::string id = opt_.spec.wormhole_id;
    if (opt_.log_only) {
        open_listeners();
        std::unique_lock lock(sleep_mu_);
        sleep_cv_.wait(lock, [this] { return !running_.load(); });
        lock.unlock();
        close_listeners();
        teardown_all_conns();
        return;
    }

    int backoff_ms = opt_.backoff_initial_ms;
    int failed_attempts = 0;
    while (running_.load()) {
        try {
            tunnel_sock_ = Socket::connect_to(opt_.forwarder_address.host,
                                              opt_.forwarder_address.port,
                                              opt_.connect_timeout_ms);
        } catch (const NetError& ex) {
            ++failed_attempts;
            log_warn("wormhole", id + ": tunnel connect failed (" + ex.what() + "), retry in " +
                                     std::to_string(backoff_ms) + " ms");
            if (opt_.max_reconnect_attempts > 0 &&
                failed_attempts >= opt_.max_reconnect_attempts) {
                log_error("wormhole", id + ": giving up after " +
                                          std::to_string(failed_attempts) + " attempts");
                break;
            }
            if (!interruptible_sleep(backoff_ms)) {
                break;
            }
            backoff_ms = std::min(backoff_ms * 2, opt_.backoff_cap_ms);
            continue;
        }
        failed_attempts = 0;
        backoff_ms = opt_.backoff_initial_ms;

        tunnel_sock_.set_nodelay();
        const int poll_ms = std::clamp(opt_.ping_after_ms / 3, 20, 1000);
        tunnel_sock_.set_recv_timeout_ms(poll_ms);
        writer_ = std::make_unique<FrameWriter>(&tunnel_sock_);
        writer_->send(Frame::hello(id));
        tunnel_connects_.fetch_add(1);
        tunnel_up_.store(true);
        log_info("wormhole", id + ": tunnel established to " + opt_.forwarder_address.str());

        open_listeners();
        tunnel_read_loop();
        tunnel_up_.store(false);

        close_listeners();
        teardown_all_conns();
        {
            std::lock_guard lock(mux_mu_);
            writer_.reset();
            mux_ = MuxState{};
        }
        tunnel_sock_.close();
        if (!running_.load()) {
            break;
        }
        log_info("wormhole", id + ": tunnel lost, reconnecting in " + std::to_string(backoff_ms) +
                                 " ms (ports closed meanwhile)");
        if (!interruptible_sleep(backoff_ms)) {
            break;
        }
        backoff_ms = std::min(backoff_ms * 2, opt_.backoff_cap_ms);
    }
    tunnel_up_.store(false);
}

void WormholeAgent::open_listeners() {
    std::lock_guard lock(ports_mu_);
    for (const std::uint16_t port : opt_.spec.listen_ports) {
        auto entry = std::make_unique<Port>();
        entry->port = port;
        try {
            entry->listener = Listener::bind_listen(opt_.spec.bind_address, port);
        } catch (const NetError& ex) {
            // One unbindable port must not take the whole agent down.
            log_warn("wormhole", opt_.spec.wormhole_id + ": cannot bind port " +
                                     std::to_string(port) + ": " + ex.what());
            continue;
        }
        Port* raw = entry.get();
        entry->accept_thread = std::thread([this, raw] {
            while (true) {
                Socket s = raw->listener.accept_conn();
                if (!s.valid()) {
                    return;
                }
                if (!running_.load()) {
                    return;
                }
                s.set_nodelay();
                const Micros now = clock_->now();
                TcpEndpoints ep;
                ep.client_ip = resolve_ipv4(s.peer_ip());
                ep.client_port = s.peer_port();
                ep.server_ip = resolve_ipv4(s.local_ip());
                ep.server_port = raw->port;
                auto conn = std::make_shared<AgentConn>(std::move(s), sink_.start_conn(ep));
                conn->public_port = raw->port;
                if (opt_.log_only) {
                    {
                        std::lock_guard clock_guard(conns_mu_);
                        conn->conn_id = 0x80000000u | log_only_next_id_++;
                        conns_.emplace(conn->conn_id, conn);
                    }
                    conn->capture.on_open(now);
                    conn->reader = std::thread([this, conn] { log_only_reader(conn); });
                } else {
                    {
                        // Allocate the id, register the connection, and emit
                        // OPEN atomically so tunnel deliveries can't race the
                        // registry insert.
                        std::lock_guard mux_guard(mux_mu_);
                        MuxResult r = mux_step(mux_, MuxEvent::local_open(raw->port));
                        conn->conn_id = r.opened_conn.value();
                        {
                            std::lock_guard conns_guard(conns_mu_);
                            conns_.emplace(conn->conn_id, conn);
                        }
                        conn->capture.on_open(now);
                        if (writer_) {
                            for (const auto& frame : r.emit) {
                                writer_->send(frame);
                            }
                        }
                    }
                    conn->reader = std::thread([this, conn] { conn_reader(conn); });
                }
                reap_retired();
            }
        });
        ports_.push_back(std::move(entry));
    }
}

void WormholeAgent::close_listeners() {
    std::lock_guard lock(ports_mu_);
    for (auto& p : ports_) {
        p->listener.shutdown();
    }
    for (auto& p : ports_) {
        if (p->accept_thread.joinable()) {
            p->accept_thread.join();
        }
        p->listener.close();
    }
    ports_.clear();
}

void WormholeAgent::conn_reader(std::shared_ptr<AgentConn> conn) {
    std::vector<std::uint8_t> buf(kMaxFramePayload);
    while (true) {
        const long n = conn->sock.recv_some(buf.data(), buf.size());
        if (n <= 0) {
            break;
        }
        const Micros now = clock_->now();
        conn->capture.on_data(now, Direction::Inbound,
                              std::span<const std::uint8_t>(buf.data(),
                                                            static_cast<std::size_t>(n)));
        conn->bytes_in.fetch_add(static_cast<std::uint64_t>(n));
        bytes_in_.fetch_add(static_cast<std::uint64_t>(n));
        step_locked(MuxEvent::local_data(
            conn->conn_id, std::vector<std::uint8_t>(buf.begin(), buf.begin() + n)));
    }
    bool should_finalize = false;
    {
        std::lock_guard lock(conns_mu_);
        conn->close_local = true;
        should_finalize = conn->close_remote;
    }
    step_locked(MuxEvent::local_close(conn->conn_id));
    if (should_finalize) {
        finalize_conn(conn, /*orderly=*/true);
    }
    conn->reader_done.store(true);
}

void WormholeAgent::log_only_reader(std::shared_ptr<AgentConn> conn) {
    std::vector<std::uint8_t> buf(kMaxFramePayload);
    while (true) {
        const long n = conn->sock.recv_some(buf.data(), buf.size());
        if (n <= 0) {
            break;
        }
        conn->capture.on_data(clock_->now(), Direction::Inbound,
                              std::span<const std::uint8_t>(buf.data(),
                                                            static_cast<std::size_t>(n)));
        conn->bytes_in.fetch_add(static_cast<std::uint64_t>(n));
        bytes_in_.fetch_add(static_cast<std::uint64_t>(n));
    }
    finalize_conn(conn, /*orderly=*/true);
    conn->reader_done.store(true);
}

void WormholeAgent::tunnel_read_loop() {
    FrameReader reader(&tunnel_sock_);
    std::int64_t last_rx_ms = steady_ms();
    std::int64_t last_ping_ms = 0;
    int unanswered_pings = 0;

    while (running_.load()) {
        reap_retired();
        Frame frame;
        std::string detail;
        const auto status = reader.next(frame, &detail);
        if (status == FrameReader::Status::FrameReady) {
            last_rx_ms = steady_ms();
            unanswered_pings = 0;
            MuxResult r = step_locked(MuxEvent::frame_received(frame));
            for (const auto& d : r.deliver) {
                if (const auto* dd = std::get_if<DeliverData>(&d)) {
                    std::shared_ptr<AgentConn> conn;
                    {
                        std::lock_guard lock(conns_mu_);
                        const auto it = conns_.find(dd->conn_id);
                        if (it != conns_.end()) {
                            conn = it->second;
                        }
                    }
                    if (!conn) {
                        continue; // data for a connection already gone
                    }
                    conn->capture.on_data(clock_->now(), Direction::Outbound, dd->bytes);
                    if (conn->sock.send_all(dd->bytes)) {
                        conn->bytes_out.fetch_add(dd->bytes.size());
                        bytes_out_.fetch_add(dd->bytes.size());
                    } else {
                        conn->sock.shutdown_both(); // reader will close the books
                    }
                } else if (const auto* dc = std::get_if<DeliverClose>(&d)) {
                    std::shared_ptr<AgentConn> conn;
                    bool should_finalize = false;
                    {
                        std::lock_guard lock(conns_mu_);
                        const auto it = conns_.find(dc->conn_id);
                        if (it != conns_.end()) {
                            conn = it->second;
                            conn->close_remote = true;
                            should_finalize = conn->close_local;
                        }
                    }
                    if (!conn) {
                        continue;
                    }
                    if (!should_finalize) {
                        // Device side is done sending; wake the attacker-side
                        // reader once the attacker also finishes.
                        conn->sock.shutdown_both();
                    } else {
                        finalize_conn(conn, /*orderly=*/true);
                    }
                }
            }
            continue;
        }
        if (status == FrameReader::Status::Timeout) {
            const std::int64_t now = steady_ms();
            if (now - last_rx_ms >= opt_.ping_after_ms &&
                now - last_ping_ms >= opt_.ping_after_ms) {
                if (unanswered_pings >= opt_.max_missed_pongs) {
                    log_warn("wormhole", opt_.spec.wormhole_id + ": tunnel unresponsive (" +
                                             std::to_string(unanswered_pings) +
                                             " unanswered pings)");
                    return;
                }
                std::lock_guard lock(mux_mu_);
                if (writer_) {
                    writer_->send(Frame::ping());
                }
                ++unanswered_pings;
                last_ping_ms = now;
            }
            continue;
        }
        if (status == FrameReader::Status::Malformed) {
            log_warn("wormhole",
                     opt_.spec.wormhole_id + ": malformed frame from forwarder: " + detail);
        }
        return; // Eof, Error, Malformed: tunnel is gone
    }
}

void WormholeAgent::reap_retired() {
    // Joins finished reader threads and drops our references so socket fds
    // close as the campaign runs instead of piling up until stop(). Another
    // thread may still hold a shared_ptr mid-send; the fd closes when the
    // last reference drops.
    std::vector<std::shared_ptr<AgentConn>> done;
    {
        std::lock_guard lock(conns_mu_);
        auto it = retired_.begin();
        while (it != retired_.end()) {
            if ((*it)->reader_done.load()) {
                done.push_back(std::move(*it));
                it = retired_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : done) {
        if (c->reader.joinable()) {
            c->reader.join();
        }
    }
}

void WormholeAgent::finalize_conn(const std::shared_ptr<AgentConn>& conn, bool orderly) {
    if (conn->finished.exchange(true)) {
        return;
    }
    if (orderly) {
        conn->capture.on_close(clock_->now());
    }
    // On a severed tunnel the capture simply ends with the last relayed bytes.
    sink_.flush();
    conn->sock.shutdown_both();
    std::lock_guard lock(conns_mu_);
    conns_.erase(conn->conn_id);
    retired_.push_back(conn);
}

void WormholeAgent::teardown_all_conns() {
    std::vector<std::shared_ptr<AgentConn>> all;
    {
        std::lock_guard lock(conns_mu_);
        for (auto& [id, c] : conns_) {
            all.push_back(c);
        }
        for (auto& c : retired_) {
            all.push_back(c);
        }
    }
    for (auto& c : all) {
        c->sock.shutdown_both();
    }
    for (auto& c : all) {
        if (c->reader.joinable()) {
            c->reader.join();
        }
    }
    for (auto& c : all) {
        if (!c->finished.exchange(true)) {
            // Severed underneath the attacker: no orderly teardown packets.
            c->sock.close();
        }
    }
    std::lock_guard lock(conns_mu_);
    conns_.clear();
    retired_.clear();
    sink_.flush();
}

} // namespace hmx
