#pragma once

#include <atomic>
#include <cstdint>
#include <string>

namespace hmx {

// Microseconds since the Unix epoch. All timestamps in the codebase use this.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;
constexpr Micros kMicrosPerDay = 86'400 * kMicrosPerSecond;

class Clock {
public:
    virtual ~Clock() = default;
    virtual Micros now() const = 0;
};

class SystemClock final : public Clock {
public:
    Micros now() const override;
    static SystemClock& instance();
};

// Manually advanced clock for deterministic tests.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(Micros start = 0) : now_(start) {}
    Micros now() const override { return now_.load(); }
    void set(Micros t) { now_.store(t); }
    void advance(Micros delta) { now_.fetch_add(delta); }

private:
    std::atomic<Micros> now_;
};

// Accepts "YYYY-MM-DDTHH:MM:SSZ" (optional fractional seconds) or a bare
// integer interpreted as epoch seconds. Throws std::invalid_argument.
Micros parse_timestamp(const std::string& text);

// "YYYY-MM-DDTHH:MM:SS.ssssssZ", UTC.
std::string format_iso8601(Micros t);

// "YYYYMMDD" of the UTC day containing t. Used for capture file rotation.
std::string utc_date_token(Micros t);

} // namespace hmx
