#include "hmx/capture.hpp"

#include "hmx/log.hpp"
#include "hmx/util.hpp"

#include <regex>

namespace hmx {

void ConnCapture::on_open(Micros ts) {
    sink_->write_batch(ts, synth_.open());
}

void ConnCapture::on_syn_only(Micros ts) {
    sink_->write_batch(ts, synth_.syn_only());
}

void ConnCapture::on_data(Micros ts, Direction dir, std::span<const std::uint8_t> bytes) {
    sink_->write_batch(ts, synth_.data(dir, bytes));
}

void ConnCapture::on_close(Micros ts) {
    sink_->write_batch(ts, synth_.close());
}

void ConnCapture::on_reset(Micros ts) {
    sink_->write_batch(ts, synth_.reset());
}

CaptureSink::CaptureSink(std::filesystem::path dir, std::string id)
    : dir_(std::move(dir)), id_(std::move(id)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
}

ConnCapture CaptureSink::start_conn(TcpEndpoints ep) {
    std::uint64_t nonce = 0;
    {
        std::lock_guard lock(mu_);
        nonce = conn_counter_++;
    }
    std::vector<std::uint8_t> k;
    k.reserve(16);
    put_u32be(k, ep.client_ip);
    put_u16be(k, ep.client_port);
    put_u32be(k, ep.server_ip);
    put_u16be(k, ep.server_port);
    put_u32be(k, static_cast<std::uint32_t>(nonce));
    // Keep ISNs below 2^31 so reassembly offsets never wrap at this scale.
    const std::uint64_t h = fnv1a64(std::span<const std::uint8_t>(k.data(), k.size()));
    const auto client_isn = static_cast<std::uint32_t>(h & 0x7fffffffu);
    const auto server_isn = static_cast<std::uint32_t>((h >> 32) & 0x7fffffffu);
    return ConnCapture(this, ep, client_isn, server_isn);
}

std::filesystem::path CaptureSink::path_for_date(const std::string& date_token) const {
    return dir_ / (id_ + "-" + date_token + ".pcap");
}

void CaptureSink::ensure_open_locked(Micros ts) {
    const std::string token = utc_date_token(ts);
    if (token == current_token_ && writer_.is_open()) {
        return;
    }
    writer_.close();
    current_token_ = token;
    writer_.open(path_for_date(token));
}

void CaptureSink::write_batch(Micros ts, const std::vector<std::vector<std::uint8_t>>& pkts) {
    std::lock_guard lock(mu_);
    if (forward_only_) {
        return;
    }
    try {
        ensure_open_locked(ts);
    } catch (const std::exception& ex) {
        forward_only_ = true;
        log_warn("capture", std::string("capture disabled, relaying without it: ") + ex.what());
        return;
    }
    Micros t = ts;
    for (const auto& pkt : pkts) {
        writer_.write(t++, pkt);
    }
    if (writer_.failed()) {
        forward_only_ = true;
        log_warn("capture", "capture write failed (disk full?), relaying without capture");
    }
}

void CaptureSink::flush() {
    std::lock_guard lock(mu_);
    writer_.flush();
}

void CaptureSink::close() {
    std::lock_guard lock(mu_);
    writer_.close();
    current_token_.clear();
}

bool CaptureSink::forward_only() const {
    std::lock_guard lock(mu_);
    return forward_only_;
}

std::string capture_id_from_filename(const std::filesystem::path& path) {
    const std::string stem = path.stem().string();
    static const std::regex suffix("^(.*)-([0-9]{8})$");
    std::smatch m;
    if (std::regex_match(stem, m, suffix)) {
        return m[1].str();
    }
    return stem;
}

} // namespace hmx
