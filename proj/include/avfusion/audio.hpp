#pragma once

#include <string>
#include <vector>

#include "avfusion/tensor.hpp"

namespace avf {

// Mono audio in [-1,1]. The canonical rate everywhere downstream is 16 kHz;
// load_wav resamples on ingest so later stages never see anything else.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

constexpr int kCanonicalRate = 16000;

// PCM 16-bit mono WAV only. Other encodings are refused, not coerced.
AudioClip load_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

std::vector<double> resample_linear(const std::vector<double>& samples, int from_rate,
                                    int to_rate);

struct StftConfig {
    int n_fft = 512;
    int hop = 256;
};

// Single-sided STFT: bins = n_fft/2 + 1, frames = 1 + (len - n_fft)/hop.
// magnitudes and phase are [bins, frames]; istft(stft(x)) == x within
// 1e-6 wherever the analysis windows cover the signal.
struct Spectrogram {
    Tensor magnitudes;
    Tensor phase;
    StftConfig config;
    int signal_len = 0;

    int bins() const { return magnitudes.size(0); }
    int frames() const { return magnitudes.size(1); }
};

Spectrogram stft(const AudioClip& clip, StftConfig cfg = {});

// Weighted overlap-add resynthesis normalized by the summed squared
// window; samples the windows never touch pass through from `reference`
// (which also fixes the output length).
AudioClip istft(const Spectrogram& spec, const AudioClip& reference);

// Per-bin magnitude statistics across frames; the gate threshold is
// mean + k * stddev.
struct NoiseStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

NoiseStats estimate_noise_stats(const Spectrogram& spec);

struct DenoiseConfig {
    double threshold_k = 1.5;
    // 1.0 fully suppresses sub-threshold bins; 0.0 disables the gate.
    double prop_decrease = 1.0;
};

// Spectral gating: binary keep-mask where magnitude exceeds the per-bin
// threshold, box-smoothed 3x3 over (freq, time), applied as
// gain = 1 - prop_decrease * (1 - mask). Stats default to
// self-estimation on the clip itself; pass measured noise stats to gate
// against a separate noise profile.
AudioClip spectral_gate_denoise(const AudioClip& clip, const NoiseStats* stats = nullptr,
                                DenoiseConfig cfg = {});

// Consecutive non-overlapping windows of exactly `seconds`; a shorter
// trailing remainder is dropped.
std::vector<AudioClip> segment_audio(const AudioClip& clip, double seconds = 2.0);

// Mel filterbank (HTK scale, 0-8 kHz) on the power spectrum, log with a
// 1e-10 floor, then per-clip standardization. Output [1, n_mels, frames].
Tensor log_mel(const Spectrogram& spec, int n_mels = 64);

}  // namespace avf
