#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

#include "avfusion/audio.hpp"
#include "avfusion/errors.hpp"
#include "avfusion/rng.hpp"

using namespace avf;

namespace {

constexpr double kPi = 3.14159265358979323846;

AudioClip sine_clip(double freq_hz, double seconds, double amp = 0.5, int rate = 16000) {
    AudioClip c;
    c.sample_rate = rate;
    const std::size_t n = static_cast<std::size_t>(std::lround(seconds * rate));
    c.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.samples[i] = amp * std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / rate);
    }
    return c;
}

AudioClip noise_clip(double seconds, double amp, std::uint64_t seed, int rate = 16000) {
    AudioClip c;
    c.sample_rate = rate;
    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(std::lround(seconds * rate));
    c.samples.resize(n);
    for (auto& v : c.samples) v = amp * rng.normal();
    return c;
}

double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Minimal hand-rolled WAV for the error paths.
void write_raw_wav(const std::string& path, std::uint16_t format, std::uint16_t channels,
                   std::uint32_t rate, std::uint16_t bits,
                   const std::vector<std::int16_t>& payload) {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(payload.size() * 2);
    os.write("RIFF", 4);
    u32(36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(rate);
    u32(rate * channels * bits / 8);
    u16(static_cast<std::uint16_t>(channels * bits / 8));
    u16(bits);
    os.write("data", 4);
    u32(data_bytes);
    for (std::int16_t v : payload) os.write(reinterpret_cast<char*>(&v), 2);
}

}  // namespace

TEST_CASE("linear resampling") {
    std::vector<double> ramp(100);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    CHECK(resample_linear(ramp, 16000, 16000) == ramp);
    auto up = resample_linear(ramp, 8000, 16000);
    CHECK(up.size() == 200);
    // A ramp stays a ramp under linear interpolation (interior).
    for (std::size_t i = 0; i + 2 < up.size(); ++i) {
        CHECK(up[i] == doctest::Approx(0.5 * static_cast<double>(i)).epsilon(1e-12));
    }
    auto down = resample_linear(ramp, 16000, 8000);
    CHECK(down.size() == 50);
}

TEST_CASE("wav io and scaling") {
    SUBCASE("full-scale sample value") {
        write_raw_wav("tmp_full.wav", 1, 1, 16000, 16, {32767, -32768, 0});
        AudioClip c = load_wav("tmp_full.wav");
        REQUIRE(c.samples.size() == 3);
        CHECK(c.samples[0] == doctest::Approx(0.999969482421875).epsilon(1e-9));
        CHECK(c.samples[1] == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(c.samples[2] == 0.0);
        std::remove("tmp_full.wav");
    }
    SUBCASE("silence stays silent") {
        write_raw_wav("tmp_silent.wav", 1, 1, 16000, 16, std::vector<std::int16_t>(1600, 0));
        AudioClip c = load_wav("tmp_silent.wav");
        for (double v : c.samples) CHECK(v == 0.0);
        std::remove("tmp_silent.wav");
    }
    SUBCASE("low-rate input is resampled to 16 kHz") {
        write_raw_wav("tmp_8k.wav", 1, 1, 8000, 16, std::vector<std::int16_t>(8000, 100));
        AudioClip c = load_wav("tmp_8k.wav");
        CHECK(c.sample_rate == 16000);
        CHECK(c.samples.size() == 16000);
        std::remove("tmp_8k.wav");
    }
    SUBCASE("write then load round-trips within quantization") {
        AudioClip c = sine_clip(440.0, 0.1);
        write_wav("tmp_rt.wav", c);
        AudioClip back = load_wav("tmp_rt.wav");
        REQUIRE(back.samples.size() == c.samples.size());
        CHECK(max_abs_diff(back.samples, c.samples) < 1.0 / 32000.0);
        std::remove("tmp_rt.wav");
    }
    SUBCASE("error taxonomy") {
        CHECK_THROWS_AS(load_wav("missing_audio.wav"), IoError);
        {
            std::ofstream os("tmp_garbage.wav", std::ios::binary);
            os << "this is not a wav file at all";
        }
        CHECK_THROWS_AS(load_wav("tmp_garbage.wav"), FormatError);
        std::remove("tmp_garbage.wav");
        write_raw_wav("tmp_stereo.wav", 1, 2, 16000, 16, {0, 0});
        CHECK_THROWS_AS(load_wav("tmp_stereo.wav"), UnsupportedError);
        std::remove("tmp_stereo.wav");
        write_raw_wav("tmp_float.wav", 3, 1, 16000, 16, {0});
        CHECK_THROWS_AS(load_wav("tmp_float.wav"), UnsupportedError);
        std::remove("tmp_float.wav");
    }
}

TEST_CASE("stft frame arithmetic and peak location") {
    AudioClip c = sine_clip(1000.0, 2.0);
    Spectrogram s = stft(c);
    CHECK(s.bins() == 257);
    CHECK(s.frames() == 124);  // 1 + (32000 - 512) / 256

    // Energy concentrates at bin round(1000 * 512 / 16000) = 32.
    int peak = -1;
    double best = -1.0;
    for (int b = 0; b < s.bins(); ++b) {
        double acc = 0.0;
        for (int f = 0; f < s.frames(); ++f) acc += s.magnitudes.at({b, f});
        if (acc > best) {
            best = acc;
            peak = b;
        }
    }
    CHECK(peak == 32);

    AudioClip z;
    z.samples.assign(4096, 0.0);
    Spectrogram zs = stft(z);
    for (double v : zs.magnitudes.values()) CHECK(v == 0.0);

    AudioClip tiny;
    tiny.samples.assign(100, 0.0);
    CHECK_THROWS_AS(stft(tiny), ValueError);
}

TEST_CASE("istft reconstructs the signal") {
    AudioClip x = noise_clip(2.0, 0.3, 99);
    AudioClip back = istft(stft(x), x);
    REQUIRE(back.samples.size() == x.samples.size());
    CHECK(max_abs_diff(back.samples, x.samples) < 1e-6);

    // Length not an exact frame multiple: covered part reconstructs, the
    // tail passes through.
    AudioClip odd = noise_clip(0.33, 0.3, 100);
    AudioClip back2 = istft(stft(odd), odd);
    REQUIRE(back2.samples.size() == odd.samples.size());
    CHECK(max_abs_diff(back2.samples, odd.samples) < 1e-6);
}

TEST_CASE("spectral gating") {
    SUBCASE("all-pass stats make it the identity") {
        AudioClip x = noise_clip(1.0, 0.2, 7);
        NoiseStats allpass;
        allpass.mean.assign(257, -std::numeric_limits<double>::infinity());
        allpass.stddev.assign(257, 0.0);
        AudioClip y = spectral_gate_denoise(x, &allpass);
        CHECK(max_abs_diff(y.samples, x.samples) < 1e-6);
    }
    SUBCASE("prop_decrease zero disables the gate") {
        AudioClip x = noise_clip(1.0, 0.2, 8);
        AudioClip y = spectral_gate_denoise(x, nullptr, DenoiseConfig{1.5, 0.0});
        CHECK(max_abs_diff(y.samples, x.samples) < 1e-6);
    }
    SUBCASE("white noise loses energy") {
        AudioClip x = noise_clip(2.0, 0.1, 9);
        AudioClip y = spectral_gate_denoise(x);
        CHECK(rms(y.samples) < rms(x.samples));
    }
    SUBCASE("tone-to-background ratio improves") {
        // An intermittent tone, as in speech: the gate learns the per-bin
        // background from the quiet stretches and keeps the bursts.
        AudioClip x = sine_clip(1000.0, 2.0, 0.4);
        Rng rng(10);
        for (std::size_t i = 0; i < x.samples.size(); ++i) {
            const double t = static_cast<double>(i) / 16000.0;
            const bool burst = std::fmod(t, 0.5) < 0.125;
            x.samples[i] = (burst ? x.samples[i] : 0.0) + 0.05 * rng.normal();
        }
        auto band_ratio = [](const AudioClip& c) {
            Spectrogram s = stft(c);
            double in_band = 0.0, out_band = 0.0;
            for (int b = 0; b < s.bins(); ++b) {
                for (int f = 0; f < s.frames(); ++f) {
                    const double p = s.magnitudes.at({b, f}) * s.magnitudes.at({b, f});
                    if (b >= 30 && b <= 34)
                        in_band += p;
                    else
                        out_band += p;
                }
            }
            return in_band / out_band;
        };
        const double before = band_ratio(x);
        AudioClip y = spectral_gate_denoise(x);
        const double after = band_ratio(y);
        CHECK(after > before);
    }
    SUBCASE("energy never increases") {
        for (std::uint64_t seed = 20; seed < 25; ++seed) {
            AudioClip x = noise_clip(1.0, 0.15, seed);
            for (std::size_t i = 0; i < x.samples.size(); ++i) {
                x.samples[i] += 0.3 * std::sin(2.0 * kPi * 700.0 * i / 16000.0);
            }
            AudioClip y = spectral_gate_denoise(x);
            double ein = 0.0, eout = 0.0;
            for (double v : x.samples) ein += v * v;
            for (double v : y.samples) eout += v * v;
            CHECK(eout <= ein * (1.0 + 1e-12));
        }
    }
    SUBCASE("external stats must match the spectrogram") {
        AudioClip x = noise_clip(1.0, 0.2, 11);
        NoiseStats bad;
        bad.mean.assign(10, 0.0);
        bad.stddev.assign(10, 0.0);
        CHECK_THROWS_AS(spectral_gate_denoise(x, &bad), ValueError);
    }
}

TEST_CASE("segmentation arithmetic") {
    auto seg10 = segment_audio(sine_clip(440.0, 10.0));
    REQUIRE(seg10.size() == 5);
    for (const auto& s : seg10) CHECK(s.samples.size() == 32000);

    CHECK(segment_audio(sine_clip(440.0, 9.0)).size() == 4);
    CHECK(segment_audio(sine_clip(440.0, 1.0)).empty());

    // Segments tile the prefix exactly, in order, with no overlap.
    AudioClip x = noise_clip(5.5, 0.2, 12);
    auto segs = segment_audio(x);
    REQUIRE(segs.size() == 2);
    for (std::size_t k = 0; k < segs.size(); ++k) {
        for (std::size_t i = 0; i < segs[k].samples.size(); ++i) {
            CHECK(segs[k].samples[i] == x.samples[k * 32000 + i]);
        }
    }
}

TEST_CASE("log-mel features") {
    AudioClip c = sine_clip(1000.0, 2.0);
    Tensor feat = log_mel(stft(c));
    CHECK(feat.shape() == Shape{1, 64, 124});

    double mean = 0.0;
    for (double v : feat.values()) mean += v;
    mean /= static_cast<double>(feat.numel());
    double var = 0.0;
    for (double v : feat.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(feat.numel());
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);

    // All-zero audio maps to a constant feature map (the log floor), which
    // standardizes to all zeros.
    AudioClip z;
    z.samples.assign(32000, 0.0);
    Tensor zf = log_mel(stft(z));
    for (double v : zf.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(log_mel(stft(c), 300), ValueError);
}

TEST_CASE("audio pipeline is deterministic") {
    AudioClip x = noise_clip(2.0, 0.2, 13);
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
        x.samples[i] += 0.3 * std::sin(2.0 * kPi * 900.0 * i / 16000.0);
    }
    auto run = [&] {
        AudioClip d = spectral_gate_denoise(x);
        auto segs = segment_audio(d);
        REQUIRE(!segs.empty());
        return log_mel(stft(segs[0]));
    };
    Tensor a = run();
    Tensor b = run();
    CHECK(a.values() == b.values());
}
