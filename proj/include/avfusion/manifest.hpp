#pragma once

#include <string>
#include <vector>

namespace avf {

struct SampleRecord {
    std::string id;
    std::string audio;      // wav path
    std::string frames;     // frame directory
    std::string landmarks;  // landmark sidecar path
    double label = 0.0;
    std::string split;      // train | val | test
};

struct DatasetManifest {
    std::vector<SampleRecord> samples;
};

// One JSON object per line. Paths are stored relative to the manifest's
// directory and resolved on read; read checks the referenced files exist.
void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// The preprocessed counterpart: one feature container per sample.
struct FeatureRecord {
    std::string id;
    std::string path;  // tensor container
    double label = 0.0;
    std::string split;
};

struct FeatureManifest {
    std::vector<FeatureRecord> samples;
};

void write_feature_manifest(const std::string& path, const FeatureManifest& manifest);
FeatureManifest read_feature_manifest(const std::string& path);

}  // namespace avf
