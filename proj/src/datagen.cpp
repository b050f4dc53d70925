#include "avfusion/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "avfusion/audio.hpp"
#include "avfusion/csv.hpp"
#include "avfusion/errors.hpp"
#include "avfusion/image.hpp"
#include "avfusion/rng.hpp"

namespace avf {

namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;
constexpr double kMotionHz = 1.5;  // shared expression rate; labels modulate amplitude only

void check_config(const SynthConfig& cfg) {
    if (cfg.n_samples < 10) throw ValueError("synth: n_samples must be at least 10, got " + std::to_string(cfg.n_samples));
    if (cfg.audio_shift_hz < 0.0) throw ValueError("synth: audio_shift_hz must be nonnegative");
    if (cfg.video_amplitude < 0.0) throw ValueError("synth: video_amplitude must be nonnegative");
    if (cfg.noise < 0.0) throw ValueError("synth: noise must be nonnegative");
    if (cfg.frames_per_sample < 1) throw ValueError("synth: frames_per_sample must be positive");
    if (cfg.frame_size < 16) throw ValueError("synth: frame_size must be at least 16");
    if (cfg.fps <= 0.0) throw ValueError("synth: fps must be positive");
}

// Face template in units of the frame size. Landmarks sit on the eye centers
// and the mouth center and do not move; only the mouth aperture and the
// eyebrows oscillate.
struct FacePose {
    double size;
    double mouth_half_h;   // px
    double brow_offset;    // px, positive moves the brows up

    double head_cx() const { return 0.50 * size; }
    double head_cy() const { return 0.45 * size; }
    double eye_y() const { return 0.33 * size; }
    double eye_lx() const { return 0.33 * size; }
    double eye_rx() const { return 0.67 * size; }
    double mouth_cx() const { return 0.50 * size; }
    double mouth_cy() const { return 0.67 * size; }

    double shade(double x, double y) const {
        double c = 0.15;
        const double hx = (x - head_cx()) / (0.38 * size);
        const double hy = (y - head_cy()) / (0.43 * size);
        if (hx * hx + hy * hy <= 1.0) c = 0.8;
        const double brow_y = eye_y() - 0.10 * size - brow_offset;
        const double brow_hh = 0.016 * size;
        const double brow_hw = 0.08 * size;
        if (std::abs(y - brow_y) <= brow_hh &&
            (std::abs(x - eye_lx()) <= brow_hw || std::abs(x - eye_rx()) <= brow_hw)) {
            c = 0.25;
        }
        const double er = 0.06 * size;
        const double dl = (x - eye_lx()) * (x - eye_lx()) + (y - eye_y()) * (y - eye_y());
        const double dr = (x - eye_rx()) * (x - eye_rx()) + (y - eye_y()) * (y - eye_y());
        if (dl <= er * er || dr <= er * er) c = 0.1;
        if (std::abs(x - mouth_cx()) <= 0.16 * size && std::abs(y - mouth_cy()) <= mouth_half_h) c = 0.1;
        return c;
    }
};

Image render_face(const FacePose& pose, int size, double noise, Rng& rng) {
    Image img;
    img.width = size;
    img.height = size;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(size) * size * 3, 0.0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < 4; ++sy) {
                for (int sx = 0; sx < 4; ++sx) {
                    acc += pose.shade(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0);
                }
            }
            double v = acc / 16.0 + rng.normal(0.0, noise * 0.2);
            v = std::clamp(v, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    }
    return img;
}

std::string sample_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rec%04d", i);
    return buf;
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) {
        throw IoError("cannot create directory '" + p.string() + "'");
    }
}

// Largest-remainder allocation of `total` over groups with sizes `weights`,
// respecting per-group caps. Deterministic: remainder ties go to the lower
// group index.
std::vector<std::size_t> allocate(std::size_t total, const std::vector<std::size_t>& weights,
                                  const std::vector<std::size_t>& caps) {
    const std::size_t groups = weights.size();
    std::size_t wsum = 0;
    for (std::size_t w : weights) wsum += w;
    std::vector<std::size_t> out(groups, 0);
    std::vector<double> frac(groups, 0.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < groups; ++c) {
        const double quota = wsum == 0 ? 0.0 : static_cast<double>(total) * static_cast<double>(weights[c]) / static_cast<double>(wsum);
        out[c] = std::min(static_cast<std::size_t>(std::floor(quota)), caps[c]);
        frac[c] = quota - std::floor(quota);
        assigned += out[c];
    }
    while (assigned < total) {
        std::size_t best = groups;
        for (std::size_t c = 0; c < groups; ++c) {
            if (out[c] >= caps[c]) continue;
            if (best == groups || frac[c] > frac[best]) best = c;
        }
        if (best == groups) throw StateError("split allocation ran out of capacity");
        out[best] += 1;
        frac[best] -= 1.0;
        ++assigned;
    }
    return out;
}

}  // namespace

DatasetManifest generate_dataset(const SynthConfig& cfg, const std::string& out_dir) {
    check_config(cfg);
    make_dirs(out_dir);

    const int sr = 16000;
    const double duration = cfg.frames_per_sample / cfg.fps;
    const auto n_audio = static_cast<std::size_t>(std::lround(duration * sr));

    DatasetManifest manifest;
    for (int i = 0; i < cfg.n_samples; ++i) {
        const std::string id = sample_id(i);
        const fs::path dir = fs::path(out_dir) / id;
        make_dirs(dir / "frames");

        Rng rng = derive_rng(cfg.seed, "synth.sample", static_cast<std::uint64_t>(i));
        double label;
        if (cfg.task == SynthTask::classification) {
            label = static_cast<double>(i % 2);
        } else {
            label = rng.uniform(0.0, 63.0);
        }
        const double u = cfg.task == SynthTask::classification ? label : label / 63.0;

        const double audio_phase_base = rng.uniform(0.0, 2.0 * kPi);
        const double audio_phase_harm = rng.uniform(0.0, 2.0 * kPi);
        const double mouth_phase = rng.uniform(0.0, 2.0 * kPi);
        const double brow_phase = rng.uniform(0.0, 2.0 * kPi);

        // Audio: tone bursts (25% duty) so the planted harmonic rides above
        // the per-bin noise threshold the denoiser estimates, instead of
        // being folded into it.
        AudioClip clip;
        clip.sample_rate = sr;
        clip.samples.resize(n_audio);
        const double harm_hz = 900.0 + cfg.audio_shift_hz * u;
        for (std::size_t s = 0; s < n_audio; ++s) {
            const double t = static_cast<double>(s) / sr;
            const double env = std::fmod(t, 0.5) < 0.125 ? 1.0 : 0.0;
            double v = 0.25 * env * std::sin(2.0 * kPi * 220.0 * t + audio_phase_base) +
                       0.35 * env * std::sin(2.0 * kPi * harm_hz * t + audio_phase_harm) +
                       rng.normal(0.0, cfg.noise);
            clip.samples[s] = std::clamp(v, -1.0, 1.0);
        }
        write_wav((dir / "audio.wav").string(), clip);

        // Video: static landmarks; aperture and brows oscillate with an
        // amplitude that carries the label signal.
        const double amp = 0.5 + cfg.video_amplitude * u;
        std::ofstream lm(dir / "landmarks.txt", std::ios::binary);
        if (!lm) throw IoError("cannot open '" + (dir / "landmarks.txt").string() + "' for writing");
        FacePose pose;
        pose.size = cfg.frame_size;
        for (int f = 0; f < cfg.frames_per_sample; ++f) {
            const double t = f / cfg.fps;
            const double osc = 0.5 + 0.5 * std::sin(2.0 * kPi * kMotionHz * t + mouth_phase);
            pose.mouth_half_h = 0.03 * cfg.frame_size + amp * osc;
            pose.brow_offset = 0.5 * amp * std::sin(2.0 * kPi * kMotionHz * t + brow_phase);
            const Image img = render_face(pose, cfg.frame_size, cfg.noise, rng);
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%06d.png", f);
            write_png((dir / "frames" / name).string(), img);
            lm << fmt_double(pose.eye_lx()) << " " << fmt_double(pose.eye_y()) << " "
               << fmt_double(pose.eye_rx()) << " " << fmt_double(pose.eye_y()) << " "
               << fmt_double(pose.mouth_cx()) << " " << fmt_double(pose.mouth_cy()) << "\n";
        }
        lm.flush();
        if (!lm) throw IoError("failed writing '" + (dir / "landmarks.txt").string() + "'");

        SampleRecord rec;
        rec.id = id;
        rec.audio = id + "/audio.wav";
        rec.frames = id + "/frames";
        rec.landmarks = id + "/landmarks.txt";
        rec.label = label;
        manifest.samples.push_back(std::move(rec));
    }
    return manifest;
}

void split_dataset(DatasetManifest& manifest, std::uint64_t seed) {
    const std::size_t n = manifest.samples.size();
    if (n < 10) throw ValueError("split requires at least 10 samples, got " + std::to_string(n));
    const auto n_val = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(n)));

    bool binary = true;
    for (const auto& r : manifest.samples) {
        if (r.label != 0.0 && r.label != 1.0) {
            binary = false;
            break;
        }
    }

    std::vector<std::vector<std::size_t>> classes;
    if (binary) {
        std::vector<std::size_t> zeros, ones;
        for (std::size_t i = 0; i < n; ++i) {
            (manifest.samples[i].label == 0.0 ? zeros : ones).push_back(i);
        }
        if (!zeros.empty()) classes.push_back(std::move(zeros));
        if (!ones.empty()) classes.push_back(std::move(ones));
    } else {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        classes.push_back(std::move(all));
    }

    for (std::size_t c = 0; c < classes.size(); ++c) {
        Rng rng = derive_rng(seed, "split.class", c);
        auto& list = classes[c];
        for (std::size_t i = list.size(); i > 1; --i) {
            const std::size_t j = rng.uniform_int(i);
            std::swap(list[i - 1], list[j]);
        }
    }

    std::vector<std::size_t> sizes(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) sizes[c] = classes[c].size();
    const std::vector<std::size_t> val_c = allocate(n_val, sizes, sizes);
    std::vector<std::size_t> caps(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) caps[c] = sizes[c] - val_c[c];
    const std::vector<std::size_t> test_c = allocate(n_test, sizes, caps);

    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& list = classes[c];
        for (std::size_t i = 0; i < list.size(); ++i) {
            auto& rec = manifest.samples[list[i]];
            if (i < val_c[c]) rec.split = "val";
            else if (i < val_c[c] + test_c[c]) rec.split = "test";
            else rec.split = "train";
        }
    }
}

}  // namespace avf
