#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hmx {

// One "[name]" block of a sectioned config file. Sections repeat; within a
// section keys keep file order.
struct ConfigSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    std::optional<std::string> find(const std::string& key) const;
    // Throws std::runtime_error naming the section and key when absent.
    std::string require(const std::string& key) const;
};

// Parses "[section]" headers and "key = value" lines. '#' and ';' start
// comments; blank lines are ignored. Keys before any section header are an
// error.
std::vector<ConfigSection> parse_config_text(const std::string& text, const std::string& origin);
std::vector<ConfigSection> parse_config_file(const std::filesystem::path& path);

} // namespace hmx
