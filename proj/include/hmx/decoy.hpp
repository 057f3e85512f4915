#pragma once

#include "hmx/registry.hpp"
#include "hmx/time.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hmx {

// Static personality of an emulated device.
struct DecoyProfile {
    std::string profile_name; // trendnet-cam | dlink-cam | aztech-cam | hp-printer | echo
    std::string model;        // display/model string, matches the credential tier table
    std::string realm;        // Basic-auth realm ("" for echo: no auth)
    Credential credential;
    Difficulty difficulty{Difficulty::Default};
    std::string banner; // Server response header
};

// Throws std::invalid_argument for unknown names.
const DecoyProfile& decoy_profile(const std::string& name);
std::vector<std::string> decoy_profile_names();

// A running emulated device: password-protected admin web interface with
// interaction stubs (camera image/stream, PTZ, WiFi scan, firmware upload),
// or a raw TCP echo service for transparency testing.
class DecoyDevice {
public:
    struct Options {
        std::string profile_name;
        std::string host{"127.0.0.1"};
        std::uint16_t port{0};
        std::filesystem::path log_path;    // device event log file
        std::filesystem::path upload_dir;  // where firmware blobs land ("" = alongside log)
        bool frame_cycling{false};         // cycle frames instead of repeating one
        Clock* clock{nullptr};             // defaults to the system clock
    };

    explicit DecoyDevice(Options opt);
    ~DecoyDevice();
    DecoyDevice(const DecoyDevice&) = delete;
    DecoyDevice& operator=(const DecoyDevice&) = delete;

    // Binds and serves on a background thread. Throws NetError/std::runtime_error
    // when the port cannot be bound.
    void start();
    void stop();
    bool running() const { return running_.load(); }

    // Rotates the event log (a rotation marker opens the new log), deletes
    // uploaded firmware blobs, restores factory state. Profile unchanged.
    void reset();

    std::uint16_t port() const { return port_; }
    const DecoyProfile& profile() const { return profile_; }
    int reset_count() const { return reset_count_.load(); }
    bool firmware_pending() const { return firmware_pending_.load(); }

private:
    struct HttpImpl;
    void log_line(const std::string& remote, const std::string& method, const std::string& path,
                  int status, const std::string& user_agent, const std::string& auth_outcome);
    void run_echo_loop();

    Options opt_;
    DecoyProfile profile_;
    Clock* clock_;
    std::uint16_t port_{0};
    std::atomic<bool> running_{false};
    std::atomic<int> reset_count_{0};
    std::atomic<bool> firmware_pending_{false};
    std::mutex log_mu_;
    std::unique_ptr<HttpImpl> http_;
    // echo mode
    std::unique_ptr<class Listener> echo_listener_;
    std::vector<std::thread> echo_threads_;
    std::thread echo_accept_;
    std::mutex echo_mu_;
};

// Deterministic tiny JPEG used as the camera frame; index selects a variant
// for frame-cycling mode.
std::vector<std::uint8_t> decoy_frame_bytes(int index);

} // namespace hmx
