#include "hmx/config.hpp"

#include "hmx/util.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hmx {

std::optional<std::string> ConfigSection::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key)
            return v;
    return std::nullopt;
}

std::string ConfigSection::require(const std::string& key) const {
    auto v = find(key);
    if (!v)
        throw std::runtime_error("config section [" + name + "] missing key '" + key + "'");
    return *v;
}

std::vector<ConfigSection> parse_config_text(const std::string& text, const std::string& origin) {
    std::vector<ConfigSection> sections;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos)
            line = line.substr(0, comment);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": unterminated section header");
            sections.push_back(ConfigSection{trim(line.substr(1, line.size() - 2)), {}});
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        if (sections.empty())
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": key outside any [section]");
        sections.back().entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return sections;
}

std::vector<ConfigSection> parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path.string());
}

} // namespace hmx
