#include "hmx/sau.hpp"

#include "hmx/util.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace hmx {

std::vector<Session> sessionize(const std::vector<ConnectionRecord>& records,
                                std::int64_t gap_timeout_seconds) {
    using Key = std::tuple<std::string, std::string, std::uint16_t>;
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        groups[{records[i].remote_ip, records[i].wormhole_id, records[i].wormhole_port}]
            .push_back(i);
    }
    const Micros gap_us = gap_timeout_seconds * kMicrosPerSecond;
    std::vector<Session> out;
    for (auto& [key, idxs] : groups) {
        std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            return records[a].first_ts < records[b].first_ts;
        });
        Session* cur = nullptr;
        Micros watermark = 0; // latest last_ts in the current session
        for (const std::size_t idx : idxs) {
            const ConnectionRecord& rec = records[idx];
            const bool fresh = cur == nullptr || rec.first_ts - watermark > gap_us;
            if (fresh) {
                out.emplace_back();
                cur = &out.back();
                cur->remote_ip = std::get<0>(key);
                cur->wormhole_id = std::get<1>(key);
                cur->wormhole_port = std::get<2>(key);
                cur->first_ts = rec.first_ts;
                cur->last_ts = rec.last_ts;
                watermark = rec.last_ts;
            }
            cur->members.push_back(idx);
            cur->last_ts = std::max(cur->last_ts, rec.last_ts);
            watermark = std::max(watermark, rec.last_ts);
            if (!cur->device_id && rec.device_id) {
                cur->device_id = rec.device_id;
            }
            for (const auto& txn : rec.http_transactions) {
                if (txn.auth) {
                    ++cur->login_attempts;
                    if (txn.auth->success) {
                        ++cur->login_successes;
                    }
                }
            }
        }
    }
    return out;
}

BruteforceReport detect_bruteforce(const std::vector<Session>& sessions) {
    BruteforceReport report;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (sessions[i].login_attempts > 3) {
            report.flagged.push_back(i);
        }
        if (sessions[i].login_successes >= 1) {
            report.successful.push_back(i);
        }
    }
    return report;
}

std::string classify_agent(const std::optional<std::string>& user_agent) {
    if (!user_agent || user_agent->empty()) {
        return "Other";
    }
    static const std::pair<const char*, const char*> kRules[] = {
        {"masscan", "masscan"}, {"scanbot", "scanbot"}, {"wget", "wget"},
        {"curl", "curl"},       {"python", "python"},   {"chrome", "Chrome"},
        {"mozilla", "Mozilla"},
    };
    for (const auto& [needle, category] : kRules) {
        if (icontains(*user_agent, needle)) {
            return category;
        }
    }
    return "Other";
}

bool is_shellshock_probe(const std::string& header_value) {
    return header_value.find("() {") != std::string::npos;
}

// ---------------------------------------------------------------------------

GeoTable GeoTable::from_csv_text(const std::string& text, const std::string& origin) {
    GeoTable table;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto fields = split(t, ',');
        if (fields.size() != 4) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected lo,hi,country,city");
        }
        GeoRange r;
        const auto lo = parse_ipv4(trim(fields[0]));
        const auto hi = parse_ipv4(trim(fields[1]));
        if (!lo || !hi || *lo > *hi) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": bad address range");
        }
        r.lo = *lo;
        r.hi = *hi;
        r.country = trim(fields[2]);
        r.city = trim(fields[3]);
        table.ranges_.push_back(std::move(r));
    }
    std::sort(table.ranges_.begin(), table.ranges_.end(),
              [](const GeoRange& a, const GeoRange& b) { return a.lo < b.lo; });
    for (std::size_t i = 1; i < table.ranges_.size(); ++i) {
        if (table.ranges_[i].lo <= table.ranges_[i - 1].hi) {
            throw std::runtime_error(origin + ": overlapping ranges " +
                                     format_ipv4(table.ranges_[i - 1].lo) + "-" +
                                     format_ipv4(table.ranges_[i - 1].hi) + " and " +
                                     format_ipv4(table.ranges_[i].lo) + "-" +
                                     format_ipv4(table.ranges_[i].hi));
        }
    }
    return table;
}

GeoTable GeoTable::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open geo table: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return from_csv_text(buf.str(), path.string());
}

const GeoRange* GeoTable::lookup(std::uint32_t ip) const {
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ip,
                               [](std::uint32_t v, const GeoRange& r) { return v < r.lo; });
    if (it == ranges_.begin()) {
        return nullptr;
    }
    --it;
    return ip >= it->lo && ip <= it->hi ? &*it : nullptr;
}

const GeoRange* GeoTable::lookup(const std::string& dotted) const {
    const auto ip = parse_ipv4(dotted);
    return ip ? lookup(*ip) : nullptr;
}

// ---------------------------------------------------------------------------

std::string to_string(Dimension d) {
    switch (d) {
    case Dimension::City: return "city";
    case Dimension::Port: return "port";
    case Dimension::Country: return "country";
    case Dimension::Device: return "device";
    case Dimension::Agent: return "agent";
    }
    return "unknown";
}

namespace {

std::string record_category(const ConnectionRecord& rec, const Topology* topology,
                            const GeoTable* geo, Dimension dim) {
    switch (dim) {
    case Dimension::Port:
        return std::to_string(rec.wormhole_port);
    case Dimension::City: {
        if (topology) {
            if (const auto* w = topology->find_wormhole(rec.wormhole_id);
                w && !w->city.empty()) {
                return w->city;
            }
        }
        return "Unknown";
    }
    case Dimension::Country: {
        if (geo) {
            if (const auto* r = geo->lookup(rec.remote_ip)) {
                return r->country;
            }
        }
        return "Unknown";
    }
    case Dimension::Device:
        return rec.device_id.value_or("Unmapped");
    case Dimension::Agent: {
        for (const auto& txn : rec.http_transactions) {
            if (txn.user_agent) {
                return classify_agent(txn.user_agent);
            }
        }
        return classify_agent(std::nullopt);
    }
    }
    return "Unknown";
}

} // namespace

std::vector<DistributionRow> aggregate(const std::vector<ConnectionRecord>& records,
                                       const Topology* topology, const GeoTable* geo,
                                       Dimension dimension) {
    std::map<std::string, std::size_t> counts;
    for (const auto& rec : records) {
        ++counts[record_category(rec, topology, geo, dimension)];
    }
    std::vector<DistributionRow> rows;
    rows.reserve(counts.size());
    const double total = records.empty() ? 1.0 : static_cast<double>(records.size());
    for (const auto& [category, count] : counts) {
        rows.push_back({category, count, static_cast<double>(count) / total});
    }
    std::sort(rows.begin(), rows.end(), [](const DistributionRow& a, const DistributionRow& b) {
        if (a.count != b.count) {
            return a.count > b.count;
        }
        return a.category < b.category;
    });
    return rows;
}

// ---------------------------------------------------------------------------

std::vector<ListingEvent> load_listing_events(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open listing events: " + path.string());
    }
    std::vector<ListingEvent> events;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto fields = split(t, ',');
        if (fields.size() != 2) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected wormhole_id,listed_at");
        }
        events.push_back({trim(fields[0]), parse_timestamp(trim(fields[1]))});
    }
    return events;
}

ListingImpact listing_impact(const std::vector<ConnectionRecord>& records,
                             const std::vector<ListingEvent>& events) {
    ListingImpact impact;
    const Micros week = 7 * kMicrosPerDay;
    double sum_before = 0, sum_first = 0, sum_two = 0;
    for (const auto& ev : events) {
        ListingImpactRow row;
        row.wormhole_id = ev.wormhole_id;
        bool any_records = false;
        bool any_before_pivot = false;
        bool any_after_pivot = false;
        for (const auto& rec : records) {
            if (rec.wormhole_id != ev.wormhole_id) {
                continue;
            }
            any_records = true;
            const Micros t = rec.first_ts;
            if (t < ev.listed_at) {
                any_before_pivot = true;
            } else {
                any_after_pivot = true; // exactly listed_at counts after
            }
            if (t >= ev.listed_at - week && t < ev.listed_at) {
                ++row.before_week;
            }
            if (t >= ev.listed_at && t < ev.listed_at + week) {
                ++row.first_week;
            }
            if (t >= ev.listed_at && t < ev.listed_at + 2 * week) {
                ++row.two_weeks;
            }
        }
        // A wormhole whose records all sit on one side of its listing moment
        // cannot support a before/after comparison. No records at all is a
        // legitimate all-zero row.
        row.insufficient_span = any_records && !(any_before_pivot && any_after_pivot);
        if (!row.insufficient_span) {
            sum_before += static_cast<double>(row.before_week);
            sum_first += static_cast<double>(row.first_week);
            sum_two += static_cast<double>(row.two_weeks);
            ++impact.wormholes_averaged;
        }
        impact.rows.push_back(std::move(row));
    }
    if (impact.wormholes_averaged > 0) {
        const auto n = static_cast<double>(impact.wormholes_averaged);
        impact.avg_before = sum_before / n;
        impact.avg_first_week = sum_first / n;
        impact.avg_two_weeks = sum_two / n;
    }
    return impact;
}

// ---------------------------------------------------------------------------

std::vector<DurationRow> duration_stats(const std::vector<Session>& sessions,
                                        const Topology* topology, GroupBy group_by) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& s : sessions) {
        std::string label = s.device_id.value_or("Unmapped");
        if (group_by == GroupBy::Model && topology && s.device_id) {
            if (const auto* dev = topology->find_device(*s.device_id)) {
                label = dev->model_name;
            }
        }
        groups[label].push_back(s.duration_seconds());
    }
    std::vector<DurationRow> rows;
    for (auto& [label, durations] : groups) {
        std::sort(durations.begin(), durations.end());
        double sum = 0;
        for (const double d : durations) {
            sum += d;
        }
        DurationRow row;
        row.group = label;
        row.sessions = durations.size();
        row.mean_seconds = sum / static_cast<double>(durations.size());
        const std::size_t n = durations.size();
        row.median_seconds =
            n % 2 == 1 ? durations[n / 2] : (durations[n / 2 - 1] + durations[n / 2]) / 2.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::size_t distinct_remotes(const std::vector<ConnectionRecord>& records) {
    std::set<std::string> ips;
    for (const auto& rec : records) {
        ips.insert(rec.remote_ip);
    }
    return ips.size();
}

} // namespace hmx
