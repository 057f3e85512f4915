#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hmx {

std::vector<std::string> split(const std::string& s, char delim);
std::string trim(const std::string& s);
std::string to_lower(const std::string& s);
bool icontains(const std::string& haystack, const std::string& needle);

std::string base64_encode(std::span<const std::uint8_t> data);
std::optional<std::vector<std::uint8_t>> base64_decode(const std::string& text);

std::string hex_encode(std::span<const std::uint8_t> data);

inline void put_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline std::uint16_t get_u16be(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
inline std::uint32_t get_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data);

// Minimal CSV quoting: a field is wrapped in double quotes when it contains a
// comma, quote, or newline; embedded quotes are doubled.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split_line(const std::string& line);

// Dotted-quad IPv4 <-> host-order u32.
std::optional<std::uint32_t> parse_ipv4(const std::string& text);
std::string format_ipv4(std::uint32_t ip);

struct HostPort {
    std::string host;
    std::uint16_t port{0};

    std::string str() const { return host + ":" + std::to_string(port); }
    bool operator==(const HostPort&) const = default;
};

// "host:port"; throws std::invalid_argument on malformed input.
HostPort parse_host_port(const std::string& text);

} // namespace hmx
