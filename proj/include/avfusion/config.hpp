#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace avf {

// Flat key=value configuration with dotted keys. Values stay strings until a
// typed getter is asked for them; unknown keys are rejected up front so typos
// fail loudly instead of silently using a default.
struct Config {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const;
    std::string str(const std::string& key, const std::string& fallback) const;
    double num(const std::string& key, double fallback) const;
    long integer(const std::string& key, long fallback) const;
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<int> int_list(const std::string& key, const std::vector<int>& fallback) const;
};

// Parses a config file: one key=value per line, '#' starts a comment, blank
// lines ignored. Every key must be in the known-key table.
Config load_config(const std::string& path);

// Applies a command-line "key=value" override on top of file values.
void apply_override(Config& cfg, const std::string& assignment);

// Rejects keys outside the known-key table; both loaders call this.
void validate_keys(const Config& cfg);

}  // namespace avf
