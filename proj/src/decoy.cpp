#include "hmx/decoy.hpp"

#include "hmx/log.hpp"
#include "hmx/net.hpp"
#include "hmx/util.hpp"

#include "httplib.h"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace hmx {

namespace {

const std::vector<DecoyProfile>& profile_table() {
    static const std::vector<DecoyProfile> table = {
        {"trendnet-cam", "Trendnet Emulator", "netcam", {"admin", "admin"}, Difficulty::Easy,
         "Camera Web Server/1.0"},
        {"dlink-cam", "D-Link DCS-930L", "DCS-930L", {"admin", "YAQvwrjy"}, Difficulty::Hard,
         "dcs-lig-httpd/1.0"},
        {"aztech-cam", "Aztech WIPC409HD", "WIPC409HD", {"admin", "admin"}, Difficulty::Default,
         "Boa/0.94.14rc21"},
        {"hp-printer", "HP Pro Printer 6830", "HP Officejet Pro 6830", {"admin", "1234567890"},
         Difficulty::Easy, "HP HTTP Server; HP Officejet Pro 6830"},
        {"echo", "Echo Service", "", {"", ""}, Difficulty::Default, ""},
    };
    return table;
}

std::string camera_root_page(const DecoyProfile& p) {
    std::ostringstream os;
    os << "<html><head><title>" << p.model << "</title></head><body>\n"
       << "<h1>" << p.model << "</h1>\n"
       << "<p>Network Camera — Live View</p>\n"
       << "<img src=\"/image.jpg\" alt=\"live\" width=\"640\" height=\"480\">\n"
       << "<ul>\n"
       << "<li><a href=\"/video.mjpg\">Video stream</a></li>\n"
       << "<li><a href=\"/wifi/scan\">Wireless site survey</a></li>\n"
       << "<li>Pan/Tilt control: POST /ptz</li>\n"
       << "<li>Firmware upgrade: POST /firmware</li>\n"
       << "</ul>\n"
       << "</body></html>\n";
    return os.str();
}

std::string printer_root_page(const DecoyProfile& p) {
    std::ostringstream os;
    os << "<html><head><title>" << p.model << "</title></head><body>\n"
       << "<h1>" << p.model << "</h1>\n"
       << "<table border=\"1\">\n"
       << "<tr><td>Status</td><td>Ready</td></tr>\n"
       << "<tr><td>Black cartridge</td><td>74%</td></tr>\n"
       << "<tr><td>Tri-color cartridge</td><td>61%</td></tr>\n"
       << "<tr><td>Pages printed</td><td>2417</td></tr>\n"
       << "</table>\n"
       << "<p><a href=\"/firmware/status\">Firmware status</a></p>\n"
       << "</body></html>\n";
    return os.str();
}

const char* kWifiScanBody =
    "{\"networks\":["
    "{\"ssid\":\"HomeNet-2G\",\"channel\":6,\"rssi\":-48,\"security\":\"WPA2\"},"
    "{\"ssid\":\"TP-LINK_7A31\",\"channel\":1,\"rssi\":-67,\"security\":\"WPA2\"},"
    "{\"ssid\":\"linksys\",\"channel\":11,\"rssi\":-74,\"security\":\"OPEN\"},"
    "{\"ssid\":\"DIRECT-roku-867\",\"channel\":6,\"rssi\":-80,\"security\":\"WPA2\"}"
    "]}";

} // namespace

const DecoyProfile& decoy_profile(const std::string& name) {
    for (const auto& p : profile_table()) {
        if (p.profile_name == name) {
            return p;
        }
    }
    throw std::invalid_argument("unknown decoy profile: " + name);
}

std::vector<std::string> decoy_profile_names() {
    std::vector<std::string> names;
    for (const auto& p : profile_table()) {
        names.push_back(p.profile_name);
    }
    return names;
}

std::vector<std::uint8_t> decoy_frame_bytes(int index) {
    // Structurally plausible tiny JPEG: SOI, JFIF APP0, a comment segment
    // carrying the frame index, EOI. Enough for tooling that checks headers.
    std::vector<std::uint8_t> j = {0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J',  'F',
                                   'I',  'F',  0x00, 0x01, 0x01, 0x00, 0x00, 0x01,
                                   0x00, 0x01, 0x00, 0x00};
    const std::string com = "frame-" + std::to_string(index);
    j.push_back(0xFF);
    j.push_back(0xFE);
    const auto len = static_cast<std::uint16_t>(com.size() + 2);
    j.push_back(static_cast<std::uint8_t>(len >> 8));
    j.push_back(static_cast<std::uint8_t>(len & 0xff));
    j.insert(j.end(), com.begin(), com.end());
    j.push_back(0xFF);
    j.push_back(0xD9);
    return j;
}

// ---------------------------------------------------------------------------

struct DecoyDevice::HttpImpl {
    httplib::Server server;
    std::thread thread;
};

DecoyDevice::DecoyDevice(Options opt)
    : opt_(std::move(opt)), profile_(decoy_profile(opt_.profile_name)),
      clock_(opt_.clock ? opt_.clock : &SystemClock::instance()) {
    if (opt_.upload_dir.empty() && !opt_.log_path.empty()) {
        opt_.upload_dir = opt_.log_path.parent_path() / (opt_.log_path.stem().string() + ".uploads");
    }
}

DecoyDevice::~DecoyDevice() {
    stop();
}

void DecoyDevice::log_line(const std::string& remote, const std::string& method,
                           const std::string& path, int status, const std::string& user_agent,
                           const std::string& auth_outcome) {
    if (opt_.log_path.empty()) {
        return;
    }
    std::lock_guard lock(log_mu_);
    std::ofstream out(opt_.log_path, std::ios::app);
    out << format_iso8601(clock_->now()) << " | " << remote << " | " << method << " | " << path
        << " | " << status << " | " << (user_agent.empty() ? "-" : user_agent) << " | "
        << auth_outcome << "\n";
}

namespace {

// Outcome of inspecting one request's Authorization header.
struct AuthCheck {
    bool authorized{false};
    std::string outcome{"none"}; // none | success | failure
};

AuthCheck check_basic_auth(const httplib::Request& req, const Credential& want) {
    AuthCheck result;
    if (!req.has_header("Authorization")) {
        return result;
    }
    const std::string header = req.get_header_value("Authorization");
    const std::string prefix = "Basic ";
    if (header.rfind(prefix, 0) != 0) {
        result.outcome = "failure";
        return result;
    }
    const auto decoded = base64_decode(header.substr(prefix.size()));
    if (!decoded) {
        result.outcome = "failure";
        return result;
    }
    const std::string pair(decoded->begin(), decoded->end());
    const auto colon = pair.find(':');
    if (colon == std::string::npos) {
        result.outcome = "failure";
        return result;
    }
    const std::string user = pair.substr(0, colon);
    const std::string pass = pair.substr(colon + 1);
    if (user == want.username && pass == want.password) {
        result.authorized = true;
        result.outcome = "success";
    } else {
        result.outcome = "failure";
    }
    return result;
}

} // namespace

void DecoyDevice::start() {
    if (running_.load()) {
        return;
    }
    if (!opt_.log_path.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(opt_.log_path.parent_path(), ec);
    }
    if (profile_.profile_name == "echo") {
        echo_listener_ = std::make_unique<Listener>(Listener::bind_listen(opt_.host, opt_.port));
        port_ = echo_listener_->port();
        running_.store(true);
        echo_accept_ = std::thread([this] { run_echo_loop(); });
        return;
    }

    http_ = std::make_unique<HttpImpl>();
    auto& svr = http_->server;
    const DecoyProfile& prof = profile_;

    // Dictionary attacks reuse one connection for many attempts; don't let the
    // default keep-alive request cap cut them short.
    svr.set_keep_alive_max_count(256);
    svr.set_tcp_nodelay(true);

    svr.set_post_routing_handler([prof](const httplib::Request&, httplib::Response& res) {
        res.set_header("Server", prof.banner);
    });

    svr.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
        const AuthCheck auth = check_basic_auth(req, profile_.credential);
        log_line(req.remote_addr + ":" + std::to_string(req.remote_port), req.method, req.path,
                 res.status, req.get_header_value("User-Agent"), auth.outcome);
    });

    // Shared guard: all admin endpoints sit behind Basic auth.
    auto require_auth = [prof](const httplib::Request& req, httplib::Response& res) -> bool {
        const AuthCheck auth = check_basic_auth(req, prof.credential);
        if (!auth.authorized) {
            res.status = 401;
            res.set_header("WWW-Authenticate", "Basic realm=\"" + prof.realm + "\"");
            res.set_content("<html><body><h1>401 Unauthorized</h1></body></html>", "text/html");
            return false;
        }
        return true;
    };

    const std::string root_page = profile_.profile_name == "hp-printer" ? printer_root_page(prof)
                                                                        : camera_root_page(prof);

    svr.Get("/", [require_auth, root_page](const httplib::Request& req, httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        res.set_content(root_page, "text/html");
    });

    svr.Get("/image.jpg", [require_auth](const httplib::Request& req, httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        const auto frame = decoy_frame_bytes(0);
        res.set_content(std::string(frame.begin(), frame.end()), "image/jpeg");
    });

    const bool cycling = opt_.frame_cycling;
    svr.Get("/video.mjpg", [this, require_auth, cycling](const httplib::Request& req,
                                                         httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        auto counter = std::make_shared<int>(0);
        res.set_chunked_content_provider(
            "multipart/x-mixed-replace; boundary=frame",
            [this, cycling, counter](std::size_t, httplib::DataSink& sink) {
                // One frame per second; low interaction repeats frame 0, the
                // high-interaction stand-in cycles a short frame sequence.
                const int index = cycling ? (*counter)++ % 8 : 0;
                const auto frame = decoy_frame_bytes(index);
                std::ostringstream part;
                part << "--frame\r\nContent-Type: image/jpeg\r\nContent-Length: " << frame.size()
                     << "\r\n\r\n";
                part.write(reinterpret_cast<const char*>(frame.data()),
                           static_cast<std::streamsize>(frame.size()));
                part << "\r\n";
                const std::string bytes = part.str();
                if (!sink.write(bytes.data(), bytes.size())) {
                    return false;
                }
                for (int i = 0; i < 10 && running_.load(); ++i) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(100));
                }
                return running_.load();
            });
    });

    svr.Post("/ptz", [require_auth](const httplib::Request& req, httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        // Accepts pan/tilt parameters, acknowledges, moves nothing.
        const std::string pan = req.get_param_value("pan");
        const std::string tilt = req.get_param_value("tilt");
        res.set_content("{\"result\":\"ok\",\"pan\":\"" + pan + "\",\"tilt\":\"" + tilt + "\"}",
                        "application/json");
    });

    svr.Get("/wifi/scan", [require_auth](const httplib::Request& req, httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        res.set_content(kWifiScanBody, "application/json");
    });

    svr.Post("/firmware", [this, require_auth](const httplib::Request& req,
                                               httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        const auto* body = reinterpret_cast<const std::uint8_t*>(req.body.data());
        const std::uint64_t digest = fnv1a64({body, req.body.size()});
        char digest_hex[17];
        std::snprintf(digest_hex, sizeof(digest_hex), "%016llx",
                      static_cast<unsigned long long>(digest));
        if (!opt_.upload_dir.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(opt_.upload_dir, ec);
            std::ofstream blob(opt_.upload_dir / ("fw-" + std::string(digest_hex) + ".bin"),
                               std::ios::binary);
            blob.write(req.body.data(), static_cast<std::streamsize>(req.body.size()));
        }
        firmware_pending_.store(true);
        log_info("decoy", profile_.profile_name + " accepted firmware upload, size=" +
                              std::to_string(req.body.size()) + " digest=" + digest_hex +
                              " (never applied)");
        res.set_content("{\"status\":\"accepted\",\"size\":" + std::to_string(req.body.size()) +
                            ",\"digest\":\"" + digest_hex + "\"}",
                        "application/json");
    });

    svr.Get("/firmware/status", [this, require_auth](const httplib::Request& req,
                                                     httplib::Response& res) {
        if (!require_auth(req, res)) {
            return;
        }
        if (firmware_pending_.load()) {
            res.set_content("{\"state\":\"upload-pending\"}", "application/json");
        } else {
            res.set_content("{\"state\":\"factory\"}", "application/json");
        }
    });

    int bound_port = opt_.port;
    if (opt_.port == 0) {
        bound_port = svr.bind_to_any_port(opt_.host);
        if (bound_port < 0) {
            throw NetError("decoy: cannot bind " + opt_.host);
        }
    } else if (!svr.bind_to_port(opt_.host, opt_.port)) {
        throw NetError("decoy: cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
    }
    port_ = static_cast<std::uint16_t>(bound_port);
    running_.store(true);
    http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
}

void DecoyDevice::run_echo_loop() {
    while (running_.load()) {
        Socket conn = echo_listener_->accept_conn();
        if (!conn.valid()) {
            break;
        }
        std::lock_guard lock(echo_mu_);
        echo_threads_.emplace_back([c = std::move(conn)]() mutable {
            std::vector<std::uint8_t> buf(64 * 1024);
            while (true) {
                const long n = c.recv_some(buf.data(), buf.size());
                if (n <= 0) {
                    break;
                }
                if (!c.send_all(std::span<const std::uint8_t>(buf.data(),
                                                              static_cast<std::size_t>(n)))) {
                    break;
                }
            }
            c.shutdown_both();
        });
    }
}

void DecoyDevice::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    if (http_) {
        http_->server.stop();
        if (http_->thread.joinable()) {
            http_->thread.join();
        }
        http_.reset();
    }
    if (echo_listener_) {
        echo_listener_->shutdown();
        if (echo_accept_.joinable()) {
            echo_accept_.join();
        }
        std::lock_guard lock(echo_mu_);
        for (auto& t : echo_threads_) {
            if (t.joinable()) {
                t.join();
            }
        }
        echo_threads_.clear();
        echo_listener_.reset();
    }
}

void DecoyDevice::reset() {
    {
        std::lock_guard lock(log_mu_);
        const int n = reset_count_.load() + 1;
        if (!opt_.log_path.empty()) {
            std::error_code ec;
            if (std::filesystem::exists(opt_.log_path, ec)) {
                std::filesystem::rename(
                    opt_.log_path,
                    opt_.log_path.parent_path() /
                        (opt_.log_path.filename().string() + "." + std::to_string(n)),
                    ec);
            }
            std::ofstream out(opt_.log_path, std::ios::app);
            out << "# rotation " << n << " at " << format_iso8601(clock_->now()) << "\n";
        }
        if (!opt_.upload_dir.empty()) {
            std::error_code ec;
            std::filesystem::remove_all(opt_.upload_dir, ec);
        }
    }
    firmware_pending_.store(false);
    reset_count_.fetch_add(1);
    log_info("decoy", profile_.profile_name + " reset to factory state");
}

} // namespace hmx
