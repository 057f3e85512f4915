#include "hmx/time.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <stdexcept>

namespace hmx {

Micros SystemClock::now() const {
    using namespace std::chrono;
    return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

SystemClock& SystemClock::instance() {
    static SystemClock clock;
    return clock;
}

Micros parse_timestamp(const std::string& text) {
    if (text.empty())
        throw std::invalid_argument("empty timestamp");
    if (text.find('T') == std::string::npos) {
        // Bare integer: epoch seconds.
        std::size_t pos = 0;
        long long secs = std::stoll(text, &pos);
        if (pos != text.size())
            throw std::invalid_argument("bad timestamp: " + text);
        return static_cast<Micros>(secs) * kMicrosPerSecond;
    }
    std::tm tm{};
    int year, mon, day, hour, min, sec;
    int n = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%n", &year, &mon, &day, &hour, &min, &sec, &n) != 6)
        throw std::invalid_argument("bad timestamp: " + text);
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    Micros frac = 0;
    std::string rest = text.substr(static_cast<std::size_t>(n));
    if (!rest.empty() && rest[0] == '.') {
        std::size_t i = 1;
        Micros scale = kMicrosPerSecond / 10;
        while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) {
            frac += (rest[i] - '0') * scale;
            scale /= 10;
            ++i;
        }
        rest = rest.substr(i);
    }
    if (rest != "Z" && !rest.empty())
        throw std::invalid_argument("timestamp must be UTC ('Z'): " + text);
    time_t secs = timegm(&tm);
    return static_cast<Micros>(secs) * kMicrosPerSecond + frac;
}

std::string format_iso8601(Micros t) {
    time_t secs = static_cast<time_t>(t / kMicrosPerSecond);
    Micros frac = t % kMicrosPerSecond;
    if (frac < 0) {
        frac += kMicrosPerSecond;
        secs -= 1;
    }
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<long long>(frac));
    return buf;
}

std::string utc_date_token(Micros t) {
    time_t secs = static_cast<time_t>(t / kMicrosPerSecond);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d%02d%02d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
    return buf;
}

} // namespace hmx
