#include "hmx/harness.hpp"

#include "hmx/util.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace hmx {

namespace {

using CsvRows = std::vector<std::vector<std::string>>;

std::optional<CsvRows> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        return std::nullopt;
    }
    CsvRows rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty() || line[0] == '#') {
            continue;
        }
        rows.push_back(csv_split_line(line));
    }
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

std::string render_table(const std::string& title, const std::vector<std::string>& headers,
                         const CsvRows& rows) {
    std::vector<std::size_t> widths(headers.size());
    for (std::size_t i = 0; i < headers.size(); ++i) {
        widths[i] = headers[i].size();
    }
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size() && i < widths.size(); ++i) {
            widths[i] = std::max(widths[i], row[i].size());
        }
    }
    std::ostringstream out;
    out << title << "\n" << std::string(title.size(), '=') << "\n";
    const auto emit_row = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const std::string& cell = i < cells.size() ? cells[i] : std::string();
            out << cell;
            if (i + 1 < widths.size()) {
                out << std::string(widths[i] - cell.size() + 2, ' ');
            }
        }
        out << "\n";
    };
    emit_row(headers);
    {
        std::vector<std::string> dashes;
        for (const std::size_t w : widths) {
            dashes.push_back(std::string(w, '-'));
        }
        emit_row(dashes);
    }
    for (const auto& row : rows) {
        emit_row(row);
    }
    return out.str();
}

std::string percent(double share) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", share * 100.0);
    return buf;
}

void write_plot_csv(const std::filesystem::path& path, const std::string& header,
                    const CsvRows& rows) {
    std::ostringstream out;
    out << header << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) {
                out << ',';
            }
            out << csv_escape(row[i]);
        }
        out << "\n";
    }
    write_text(path, out.str());
}

// dist_port.csv rows folded into the named ports plus an Other bin.
CsvRows fold_ports(const CsvRows& rows) {
    static const std::vector<std::string> named = {"22", "80", "8080"};
    std::uint64_t total = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        total += std::stoull(rows[i][1]);
    }
    CsvRows out;
    std::uint64_t other = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string& port = rows[i][0];
        const std::uint64_t count = std::stoull(rows[i][1]);
        if (std::find(named.begin(), named.end(), port) != named.end()) {
            out.push_back({port, std::to_string(count),
                           percent(total ? static_cast<double>(count) / total : 0.0)});
        } else {
            other += count;
        }
    }
    if (other > 0) {
        out.push_back({"Other", std::to_string(other),
                       percent(total ? static_cast<double>(other) / total : 0.0)});
    }
    return out;
}

} // namespace

ReportResult write_report(const std::filesystem::path& analysis_dir,
                          const std::filesystem::path& report_dir) {
    std::filesystem::create_directories(report_dir);
    ReportResult result;

    const auto missing = [&](const std::string& name, const std::string& input) {
        write_text(report_dir / ("table_" + name + ".txt"), "MissingInput: " + input + "\n");
        result.missing_input.push_back(name);
    };

    struct DistTable {
        const char* name;
        const char* input;
        const char* title;
        const char* column;
    };
    static const DistTable dist_tables[] = {
        {"ports", "dist_port.csv", "Connections per public port", "port"},
        {"cities", "dist_city.csv", "Connections per listener city", "city"},
        {"countries", "dist_country.csv", "Connections per origin country", "country"},
        {"devices", "dist_device.csv", "Traffic breakup across devices", "device"},
        {"agents", "dist_agent.csv", "Connections per client agent", "agent"},
    };

    for (const DistTable& t : dist_tables) {
        const auto rows = read_csv(analysis_dir / t.input);
        if (!rows || rows->empty()) {
            missing(t.name, t.input);
            continue;
        }
        CsvRows body;
        if (std::string(t.name) == "ports") {
            body = fold_ports(*rows);
        } else {
            for (std::size_t i = 1; i < rows->size(); ++i) {
                const auto& row = (*rows)[i];
                if (row.size() < 3) {
                    continue;
                }
                body.push_back({row[0], row[1], percent(std::stod(row[2]))});
            }
        }
        write_text(report_dir / ("table_" + std::string(t.name) + ".txt"),
                   render_table(t.title, {t.column, "connections", "share"}, body));
        write_plot_csv(report_dir / ("plot_" + std::string(t.name) + ".csv"),
                       std::string(t.column) + ",connections,share", body);
        result.rendered.push_back(t.name);
    }

    if (const auto rows = read_csv(analysis_dir / "durations.csv"); rows && !rows->empty()) {
        CsvRows body(rows->begin() + 1, rows->end());
        write_text(report_dir / "table_durations.txt",
                   render_table("Session duration by device",
                                {"group", "sessions", "mean_s", "median_s"}, body));
        write_plot_csv(report_dir / "plot_durations.csv",
                       "group,sessions,mean_seconds,median_seconds", body);
        result.rendered.push_back("durations");
    } else {
        missing("durations", "durations.csv");
    }

    if (const auto rows = read_csv(analysis_dir / "listing_impact.csv"); rows && !rows->empty()) {
        CsvRows body(rows->begin() + 1, rows->end());
        write_text(report_dir / "table_listing.txt",
                   render_table("Traffic around search-engine listing",
                                {"wormhole", "before_week", "first_week", "two_weeks",
                                 "insufficient_span"},
                                body));
        write_plot_csv(report_dir / "plot_listing.csv",
                       "wormhole,before_week,first_week,two_weeks,insufficient_span", body);
        result.rendered.push_back("listing");
    } else {
        missing("listing", "listing_impact.csv");
    }

    {
        std::ifstream in(analysis_dir / "summary.txt");
        if (in) {
            std::stringstream buf;
            buf << in.rdbuf();
            write_text(report_dir / "overview.txt",
                       "Analysis overview\n=================\n" + buf.str());
            result.rendered.push_back("overview");
        } else {
            missing("overview", "summary.txt");
        }
    }
    return result;
}

} // namespace hmx
