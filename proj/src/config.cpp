#include "avfusion/config.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "avfusion/errors.hpp"

namespace avf {

namespace {

constexpr std::array kKnownKeys = {
    "seed",
    "batch_size",
    "threads",
    "task",
    "fusion.alpha",
    "fusion.beta",
    "schedule.audio.epochs",
    "schedule.audio.lr",
    "schedule.fusion.epochs",
    "schedule.fusion.lr",
    "synth.n_samples",
    "synth.task",
    "synth.audio_shift_hz",
    "synth.video_amplitude",
    "synth.noise",
    "synth.frames",
    "synth.frame_size",
    "synth.fps",
    "audio.widths",
    "audio.attention_hidden",
    "video.stem",
    "video.widths",
    "video.expansion",
    "video.reduction",
    "video.clip_len",
    "augment.flip_prob",
    "augment.delta",
};

bool known(const std::string& key) {
    for (const char* k : kKnownKeys) {
        if (key == k) return true;
    }
    return false;
}

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

void insert(Config& cfg, const std::string& assignment, const std::string& where) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw FormatError(where + ": expected key=value, got '" + assignment + "'");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw FormatError(where + ": empty key in '" + assignment + "'");
    if (!known(key)) throw ValueError(where + ": unknown config key '" + key + "'");
    cfg.values[key] = value;
}

}  // namespace

bool Config::has(const std::string& key) const { return values.count(key) != 0; }

std::string Config::str(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double Config::num(const std::string& key, double fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ValueError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    return x;
}

long Config::integer(const std::string& key, long fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ValueError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return x;
}

std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ValueError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
    }
    return static_cast<std::uint64_t>(x);
}

std::vector<int> Config::int_list(const std::string& key, const std::vector<int>& fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::string t = trim(part);
        char* end = nullptr;
        const long x = std::strtol(t.c_str(), &end, 10);
        if (t.empty() || end != t.c_str() + t.size()) {
            throw ValueError("config key '" + key + "': expected a comma-separated integer list, got '" + it->second + "'");
        }
        out.push_back(static_cast<int>(x));
    }
    if (out.empty()) {
        throw ValueError("config key '" + key + "': expected a comma-separated integer list, got '" + it->second + "'");
    }
    return out;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        insert(cfg, line, "config '" + path + "' line " + std::to_string(lineno));
    }
    return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
    insert(cfg, assignment, "command line");
}

void validate_keys(const Config& cfg) {
    for (const auto& [key, value] : cfg.values) {
        (void)value;
        if (!known(key)) throw ValueError("unknown config key '" + key + "'");
    }
}

}  // namespace avf
