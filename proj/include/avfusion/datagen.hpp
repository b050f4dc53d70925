#pragma once

#include <cstdint>
#include <string>

#include "avfusion/manifest.hpp"

namespace avf {

enum class SynthTask { classification, regression };

struct SynthConfig {
    int n_samples = 188;
    SynthTask task = SynthTask::classification;
    // Class-signal strengths; 0 produces a null corpus with no label
    // dependence anywhere in the signal path.
    double audio_shift_hz = 600.0;   // harmonic shift between classes
    double video_amplitude = 3.0;    // extra motion amplitude in pixels
    double noise = 0.05;             // additive noise level, audio and video
    int frames_per_sample = 24;
    int frame_size = 32;
    double fps = 8.0;
    std::uint64_t seed = 0;
};

// Writes out_dir/<id>/{audio.wav, frames/frame_%06d.png, landmarks.txt} for
// every sample and returns the matching manifest with relative paths and
// empty splits. Pure function of cfg: same config, byte-identical corpus.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::string& out_dir);

// Assigns train/val/test at 6:1:3: val = round(0.1 n), test = round(0.3 n),
// train the rest, by seeded shuffle; stratified over labels when every label
// is 0 or 1 so small corpora keep both classes in every split.
void split_dataset(DatasetManifest& manifest, std::uint64_t seed);

}  // namespace avf
