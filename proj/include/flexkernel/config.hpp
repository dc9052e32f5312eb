#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flexkernel/errors.hpp"

namespace flexkernel {

// Flat key=value configuration with [section] headers. '#' starts a comment.
// Keys keep file order within their section.
struct ConfigFile {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;

    bool has_section(const std::string& s) const { return sections.count(s) != 0; }

    const std::vector<std::pair<std::string, std::string>>& section(
        const std::string& s) const {
        auto it = sections.find(s);
        require(it != sections.end(), "config: missing section [" + s + "]");
        return it->second;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ConfigFile parse_config(std::istream& in) {
    ConfigFile cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            require(t.back() == ']', "config line " + std::to_string(lineno) +
                                         ": unterminated section header");
            section = detail::trim(t.substr(1, t.size() - 2));
            require(!section.empty(),
                    "config line " + std::to_string(lineno) + ": empty section name");
            cfg.sections[section];
            continue;
        }
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos,
                "config line " + std::to_string(lineno) + ": expected key=value");
        require(!section.empty(),
                "config line " + std::to_string(lineno) + ": key outside any section");
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
        cfg.sections[section].emplace_back(key, value);
    }
    return cfg;
}

inline ConfigFile load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open " + path);
    return parse_config(in);
}

// One command's view of its section: typed access, required keys, and
// rejection of keys outside the allowed set.
class ConfigSection {
public:
    ConfigSection(const ConfigFile& file, const std::string& name) : name_(name) {
        for (const auto& [k, v] : file.section(name)) {
            require(values_.emplace(k, v).second,
                    "config [" + name + "]: duplicate key '" + k + "'");
        }
    }

    void restrict_keys(const std::set<std::string>& allowed) const {
        for (const auto& [k, v] : values_)
            require(allowed.count(k) != 0, "config [" + name_ + "]: unknown key '" + k + "'");
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        require(it != values_.end(), "config [" + name_ + "]: missing key '" + key + "'");
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::int64_t get_int(const std::string& key) const {
        return parse_int(key, get_string(key));
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const std::string s = get_string(key);
        try {
            return std::stoull(s);
        } catch (...) {
            throw ContractViolation("config [" + name_ + "]: key '" + key +
                                    "' is not an unsigned integer: " + s);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string s = get_string(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ContractViolation("config [" + name_ + "]: key '" + key +
                                "' is not a boolean: " + s);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    double parse_double(const std::string& key, const std::string& s) const {
        try {
            std::size_t pos = 0;
            double v = std::stod(s, &pos);
            require(pos == s.size(), "trailing characters");
            return v;
        } catch (...) {
            throw ContractViolation("config [" + name_ + "]: key '" + key +
                                    "' is not a number: " + s);
        }
    }

    std::int64_t parse_int(const std::string& key, const std::string& s) const {
        try {
            std::size_t pos = 0;
            std::int64_t v = std::stoll(s, &pos);
            require(pos == s.size(), "trailing characters");
            return v;
        } catch (...) {
            throw ContractViolation("config [" + name_ + "]: key '" + key +
                                    "' is not an integer: " + s);
        }
    }

    std::string name_;
    std::map<std::string, std::string> values_;
};

}  // namespace flexkernel
