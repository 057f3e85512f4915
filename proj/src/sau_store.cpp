#include "hmx/sau.hpp"

#include "hmx/log.hpp"
#include "hmx/util.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hmx {

namespace {

std::string fmt_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

} // namespace

void write_record_store(const std::vector<ConnectionRecord>& records,
                        const std::filesystem::path& records_csv,
                        const std::filesystem::path& transactions_csv) {
    auto rec_out = open_out(records_csv);
    rec_out << "remote_ip,remote_port,wormhole_id,wormhole_port,device_id,first_ts,last_ts,"
               "bytes_in,bytes_out,transactions\n";
    auto txn_out = open_out(transactions_csv);
    txn_out << "record_index,seq,method,path,status,user_agent,auth_username,auth_password,"
               "auth_success\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        rec_out << csv_escape(r.remote_ip) << ',' << r.remote_port << ','
                << csv_escape(r.wormhole_id) << ',' << r.wormhole_port << ','
                << csv_escape(r.device_id.value_or("")) << ',' << r.first_ts << ',' << r.last_ts
                << ',' << r.bytes_in << ',' << r.bytes_out << ',' << r.http_transactions.size()
                << '\n';
        for (std::size_t t = 0; t < r.http_transactions.size(); ++t) {
            const auto& txn = r.http_transactions[t];
            txn_out << i << ',' << t << ',' << csv_escape(txn.method) << ','
                    << csv_escape(txn.path) << ','
                    << (txn.response_status ? std::to_string(*txn.response_status) : "") << ','
                    << csv_escape(txn.user_agent.value_or("")) << ',';
            if (txn.auth) {
                txn_out << csv_escape(txn.auth->username) << ',' << csv_escape(txn.auth->password)
                        << ',' << (txn.auth->success ? '1' : '0');
            } else {
                txn_out << ",,";
            }
            txn_out << '\n';
        }
    }
}

std::vector<ConnectionRecord> read_record_store(const std::filesystem::path& records_csv,
                                                const std::filesystem::path& transactions_csv) {
    std::vector<ConnectionRecord> records;
    std::ifstream rec_in(records_csv);
    if (!rec_in) {
        throw std::runtime_error("cannot open " + records_csv.string());
    }
    std::string line;
    std::getline(rec_in, line); // header
    while (std::getline(rec_in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        const auto f = csv_split_line(line);
        if (f.size() != 10) {
            throw std::runtime_error(records_csv.string() + ": bad record line: " + line);
        }
        ConnectionRecord r;
        r.remote_ip = f[0];
        r.remote_port = static_cast<std::uint16_t>(std::stoul(f[1]));
        r.wormhole_id = f[2];
        r.wormhole_port = static_cast<std::uint16_t>(std::stoul(f[3]));
        if (!f[4].empty()) {
            r.device_id = f[4];
        }
        r.first_ts = std::stoll(f[5]);
        r.last_ts = std::stoll(f[6]);
        r.bytes_in = std::stoull(f[7]);
        r.bytes_out = std::stoull(f[8]);
        records.push_back(std::move(r));
    }
    std::ifstream txn_in(transactions_csv);
    if (txn_in) {
        std::getline(txn_in, line); // header
        while (std::getline(txn_in, line)) {
            if (trim(line).empty()) {
                continue;
            }
            const auto f = csv_split_line(line);
            if (f.size() != 9) {
                throw std::runtime_error(transactions_csv.string() + ": bad line: " + line);
            }
            const std::size_t idx = std::stoul(f[0]);
            if (idx >= records.size()) {
                throw std::runtime_error(transactions_csv.string() + ": record index out of range");
            }
            HttpTransaction txn;
            txn.method = f[2];
            txn.path = f[3];
            if (!f[4].empty()) {
                txn.response_status = std::atoi(f[4].c_str());
            }
            if (!f[5].empty()) {
                txn.user_agent = f[5];
            }
            if (!f[8].empty()) {
                AuthView auth;
                auth.username = f[6];
                auth.password = f[7];
                auth.success = f[8] == "1";
                txn.auth = auth;
            }
            records[idx].http_transactions.push_back(std::move(txn));
        }
    }
    return records;
}

std::map<std::string, std::string> load_label_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open label map: " + path.string());
    }
    std::map<std::string, std::string> map;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto f = split(t, ',');
        if (f.size() == 2) {
            map[trim(f[0])] = trim(f[1]);
        }
    }
    return map;
}

namespace {

void write_distribution(const std::filesystem::path& path,
                        const std::vector<DistributionRow>& rows) {
    auto out = open_out(path);
    out << "category,count,share\n";
    for (const auto& row : rows) {
        out << csv_escape(row.category) << ',' << row.count << ',' << fmt_double(row.share, 9)
            << '\n';
    }
}

void write_outputs(const Analysis& a, const AnalyzeConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_record_store(a.ingest.records, cfg.out_dir / "records.csv",
                       cfg.out_dir / "transactions.csv");
    for (const auto& [dim, rows] : a.distributions) {
        write_distribution(cfg.out_dir / ("dist_" + to_string(dim) + ".csv"), rows);
    }
    {
        auto out = open_out(cfg.out_dir / "durations.csv");
        out << "group,sessions,mean_seconds,median_seconds\n";
        for (const auto& row : a.durations) {
            out << csv_escape(row.group) << ',' << row.sessions << ','
                << fmt_double(row.mean_seconds, 6) << ',' << fmt_double(row.median_seconds, 6)
                << '\n';
        }
    }
    if (a.listing) {
        auto out = open_out(cfg.out_dir / "listing_impact.csv");
        out << "wormhole_id,before_week,first_week,two_weeks,insufficient_span\n";
        for (const auto& row : a.listing->rows) {
            out << csv_escape(row.wormhole_id) << ',' << row.before_week << ',' << row.first_week
                << ',' << row.two_weeks << ',' << (row.insufficient_span ? 1 : 0) << '\n';
        }
        out << "AVERAGE," << fmt_double(a.listing->avg_before, 6) << ','
            << fmt_double(a.listing->avg_first_week, 6) << ','
            << fmt_double(a.listing->avg_two_weeks, 6) << ','
            << a.listing->wormholes_averaged << '\n';
    }
    {
        auto out = open_out(cfg.out_dir / "summary.txt");
        out << "records=" << a.ingest.records.size() << '\n'
            << "capture_files_ok=" << a.ingest.files_ok << '\n'
            << "capture_files_rejected=" << a.ingest.rejected_files.size() << '\n'
            << "syn_only_probes=" << a.ingest.syn_only_probes << '\n'
            << "distinct_remote_ips=" << a.distinct_remote_ips << '\n'
            << "sessions=" << a.sessions.size() << '\n'
            << "flagged_bruteforce_sessions=" << a.bruteforce.flagged.size() << '\n'
            << "successful_login_sessions=" << a.bruteforce.successful.size() << '\n'
            << "login_attempts=" << a.total_login_attempts << '\n'
            << "login_successes=" << a.total_login_successes << '\n'
            << "shellshock_probes=" << a.shellshock_probes << '\n'
            << "session_gap_timeout_seconds=" << a.gap_timeout_seconds << '\n';
    }
}

} // namespace

Analysis run_analysis(const AnalyzeConfig& cfg) {
    Analysis a;
    a.gap_timeout_seconds = cfg.gap_timeout_seconds;

    std::optional<Topology> topology;
    if (!cfg.topology_file.empty()) {
        topology = load_topology_file(cfg.topology_file);
    }
    std::optional<GeoTable> geo;
    if (!cfg.geo_csv.empty()) {
        geo = GeoTable::load_csv(cfg.geo_csv);
    }

    IngestOptions iopt;
    iopt.topology = topology ? &*topology : nullptr;
    if (!cfg.labels_csv.empty()) {
        iopt.label_map = load_label_map(cfg.labels_csv);
    }

    std::vector<std::filesystem::path> files;
    if (std::filesystem::exists(cfg.captures_dir)) {
        for (const auto& entry :
             std::filesystem::recursive_directory_iterator(cfg.captures_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".pcap") {
                files.push_back(entry.path());
            }
        }
    }
    std::sort(files.begin(), files.end());

    a.ingest = ingest_captures(files, iopt);
    a.sessions = sessionize(a.ingest.records, cfg.gap_timeout_seconds);
    a.bruteforce = detect_bruteforce(a.sessions);
    const Topology* topo_ptr = topology ? &*topology : nullptr;
    const GeoTable* geo_ptr = geo ? &*geo : nullptr;
    for (const Dimension dim : {Dimension::City, Dimension::Port, Dimension::Country,
                                Dimension::Device, Dimension::Agent}) {
        a.distributions[dim] = aggregate(a.ingest.records, topo_ptr, geo_ptr, dim);
    }
    if (!cfg.listing_csv.empty()) {
        a.listing = listing_impact(a.ingest.records, load_listing_events(cfg.listing_csv));
    }
    a.durations = duration_stats(a.sessions, topo_ptr, GroupBy::Device);
    a.distinct_remote_ips = distinct_remotes(a.ingest.records);
    for (const auto& s : a.sessions) {
        a.total_login_attempts += s.login_attempts;
        a.total_login_successes += s.login_successes;
    }
    for (const auto& rec : a.ingest.records) {
        for (const auto& txn : rec.http_transactions) {
            if (txn.user_agent && is_shellshock_probe(*txn.user_agent)) {
                ++a.shellshock_probes;
            }
        }
    }
    if (!cfg.out_dir.empty()) {
        write_outputs(a, cfg);
    }
    return a;
}

} // namespace hmx
