#include "avfusion/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "avfusion/errors.hpp"

namespace avf {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string resolve(const fs::path& base, const std::string& rel) {
    fs::path p(rel);
    if (p.is_absolute()) return p.string();
    return (base / p).string();
}

// Fetches a required field, reporting the line and field name on failure.
template <typename T>
T field(const ojson& j, const std::string& name, std::size_t line) {
    if (!j.contains(name)) {
        throw FormatError("manifest line " + std::to_string(line) + ": missing field '" + name + "'");
    }
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError("manifest line " + std::to_string(line) + ": field '" + name + "' has the wrong type");
    }
}

void check_split(const std::string& split, std::size_t line) {
    if (split != "train" && split != "val" && split != "test") {
        throw FormatError("manifest line " + std::to_string(line) + ": field 'split' must be train, val or test, got '" + split + "'");
    }
}

void check_exists(const std::string& p, const std::string& id, std::size_t line) {
    if (!fs::exists(p)) {
        throw IoError("manifest line " + std::to_string(line) + ": sample '" + id + "' references missing path '" + p + "'");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    return in;
}

bool blank(const std::string& s) {
    for (char c : s) {
        if (c != ' ' && c != '\t' && c != '\r') return false;
    }
    return true;
}

}  // namespace

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    auto out = open_out(path);
    for (const auto& r : manifest.samples) {
        if (r.id.empty()) throw ValueError("manifest record has an empty id");
        check_split(r.split, 0);
        ojson j;
        j["id"] = r.id;
        j["audio"] = r.audio;
        j["frames"] = r.frames;
        j["landmarks"] = r.landmarks;
        j["label"] = r.label;
        j["split"] = r.split;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("failed writing manifest '" + path + "'");
}

DatasetManifest read_manifest(const std::string& path) {
    auto in = open_in(path);
    const fs::path base = fs::path(path).parent_path();
    DatasetManifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        SampleRecord r;
        r.id = field<std::string>(j, "id", lineno);
        r.audio = resolve(base, field<std::string>(j, "audio", lineno));
        r.frames = resolve(base, field<std::string>(j, "frames", lineno));
        r.landmarks = resolve(base, field<std::string>(j, "landmarks", lineno));
        r.label = field<double>(j, "label", lineno);
        r.split = field<std::string>(j, "split", lineno);
        check_split(r.split, lineno);
        if (!seen.insert(r.id).second) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": duplicate id '" + r.id + "'");
        }
        check_exists(r.audio, r.id, lineno);
        check_exists(r.frames, r.id, lineno);
        check_exists(r.landmarks, r.id, lineno);
        m.samples.push_back(std::move(r));
    }
    if (m.samples.empty()) throw FormatError("manifest '" + path + "' contains no records");
    return m;
}

void write_feature_manifest(const std::string& path, const FeatureManifest& manifest) {
    auto out = open_out(path);
    for (const auto& r : manifest.samples) {
        if (r.id.empty()) throw ValueError("feature manifest record has an empty id");
        check_split(r.split, 0);
        ojson j;
        j["id"] = r.id;
        j["path"] = r.path;
        j["label"] = r.label;
        j["split"] = r.split;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("failed writing manifest '" + path + "'");
}

FeatureManifest read_feature_manifest(const std::string& path) {
    auto in = open_in(path);
    const fs::path base = fs::path(path).parent_path();
    FeatureManifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        FeatureRecord r;
        r.id = field<std::string>(j, "id", lineno);
        r.path = resolve(base, field<std::string>(j, "path", lineno));
        r.label = field<double>(j, "label", lineno);
        r.split = field<std::string>(j, "split", lineno);
        check_split(r.split, lineno);
        if (!seen.insert(r.id).second) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": duplicate id '" + r.id + "'");
        }
        check_exists(r.path, r.id, lineno);
        m.samples.push_back(std::move(r));
    }
    if (m.samples.empty()) throw FormatError("manifest '" + path + "' contains no records");
    return m;
}

}  // namespace avf
