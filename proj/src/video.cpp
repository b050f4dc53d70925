#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "avfusion/errors.hpp"
#include "avfusion/image.hpp"
#include "avfusion/ops.hpp"
#include "avfusion/video.hpp"

namespace avf {

namespace {

constexpr double kPi = 3.14159265358979323846;

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double c = mx - mn;
    v = mx;
    s = mx > 0.0 ? c / mx : 0.0;
    if (c <= 0.0) {
        h = 0.0;
        return;
    }
    double hp;
    if (mx == r) {
        hp = (g - b) / c;
    } else if (mx == g) {
        hp = (b - r) / c + 2.0;
    } else {
        hp = (r - g) / c + 4.0;
    }
    h = hp * (kPi / 3.0);
    if (h < 0.0) h += 2.0 * kPi;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double hp = h / (kPi / 3.0);
    const double c = v * s;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    const double m = v - c;
    double rr = 0.0, gg = 0.0, bb = 0.0;
    if (hp < 1.0) {
        rr = c, gg = x;
    } else if (hp < 2.0) {
        rr = x, gg = c;
    } else if (hp < 3.0) {
        gg = c, bb = x;
    } else if (hp < 4.0) {
        gg = x, bb = c;
    } else if (hp < 5.0) {
        rr = x, bb = c;
    } else {
        rr = c, bb = x;
    }
    r = rr + m;
    g = gg + m;
    b = bb + m;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void require_frames_shape(const Tensor& frames, const char* who) {
    if (!frames.defined() || frames.ndim() != 4 || frames.shape()[1] != 3) {
        throw ValueError(std::string(who) + ": expected frames shaped [T,3,H,W], got " +
                         (frames.defined() ? shape_str(frames.shape()) : "undefined"));
    }
    if (frames.shape()[0] < 1) {
        throw ValueError(std::string(who) + ": empty frame sequence");
    }
}

}  // namespace

std::array<double, 6> AlignmentTransform::matrix() const {
    const double a = scale * std::cos(theta);
    const double b = -scale * std::sin(theta);
    const double c = scale * std::sin(theta);
    const double d = scale * std::cos(theta);
    return {a, b, tx, c, d, ty};
}

void AlignmentTransform::map(double x, double y, double& ox, double& oy) const {
    const auto m = matrix();
    ox = m[0] * x + m[1] * y + m[2];
    oy = m[3] * x + m[4] * y + m[5];
}

AlignmentTransform compute_alignment(const FrameLandmarks& lm, int out_size) {
    if (out_size <= 0) throw ValueError("compute_alignment: out_size must be positive");
    const double ex = lm.rx - lm.lx;
    const double ey = lm.ry - lm.ly;
    const double eye_dist = std::hypot(ex, ey);
    if (eye_dist < 1e-12) {
        throw ValueError("compute_alignment: eye landmarks coincide");
    }
    const double theta = -std::atan2(ey, ex);
    const double midx = 0.5 * (lm.lx + lm.rx);
    const double midy = 0.5 * (lm.ly + lm.ry);
    // Perpendicular offset of the mouth from the eye line, in the rotated
    // frame; this is the quantity the output fixes to S/3.
    const double ct = std::cos(theta), st = std::sin(theta);
    const double relx = lm.mx - midx;
    const double rely = lm.my - midy;
    const double drop = st * relx + ct * rely;
    if (drop < 1e-9) {
        throw ValueError("compute_alignment: mouth lies on or above the eye line");
    }
    const double target = static_cast<double>(out_size) / 3.0;
    const double s = target / drop;

    AlignmentTransform tf;
    tf.theta = theta;
    tf.scale = s;
    tf.tx = static_cast<double>(out_size) / 2.0 - s * (ct * midx - st * midy);
    tf.ty = target - s * (st * midx + ct * midy);
    return tf;
}

Tensor apply_alignment(const Tensor& frames, const AlignmentTransform& tf, int out_size) {
    require_frames_shape(frames, "apply_alignment");
    if (out_size <= 0) throw ValueError("apply_alignment: out_size must be positive");
    if (tf.scale <= 0.0) throw ValueError("apply_alignment: transform scale must be positive");
    const int t_count = frames.shape()[0];
    const int h = frames.shape()[2];
    const int w = frames.shape()[3];

    // Inverse map: p_src = R(-theta)/s * (p_out - t).
    const double inv_s = 1.0 / tf.scale;
    const double ct = std::cos(tf.theta), st = std::sin(tf.theta);

    Tensor out = Tensor::zeros({t_count, 3, out_size, out_size});
    auto& ov = out.values();
    const auto& fv = frames.values();
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(out_size) * out_size;

    for (int yo = 0; yo < out_size; ++yo) {
        for (int xo = 0; xo < out_size; ++xo) {
            const double dx = static_cast<double>(xo) - tf.tx;
            const double dy = static_cast<double>(yo) - tf.ty;
            const double xs = inv_s * (ct * dx + st * dy);
            const double ys = inv_s * (-st * dx + ct * dy);
            const int x0 = static_cast<int>(std::floor(xs));
            const int y0 = static_cast<int>(std::floor(ys));
            const double fx = xs - x0;
            const double fy = ys - y0;
            const double w00 = (1.0 - fx) * (1.0 - fy);
            const double w01 = fx * (1.0 - fy);
            const double w10 = (1.0 - fx) * fy;
            const double w11 = fx * fy;
            const bool in00 = x0 >= 0 && x0 < w && y0 >= 0 && y0 < h;
            const bool in01 = x0 + 1 >= 0 && x0 + 1 < w && y0 >= 0 && y0 < h;
            const bool in10 = x0 >= 0 && x0 < w && y0 + 1 >= 0 && y0 + 1 < h;
            const bool in11 = x0 + 1 >= 0 && x0 + 1 < w && y0 + 1 >= 0 && y0 + 1 < h;
            if (!(in00 || in01 || in10 || in11)) continue;
            for (int t = 0; t < t_count; ++t) {
                for (int c = 0; c < 3; ++c) {
                    const double* src =
                        fv.data() + (static_cast<std::size_t>(t) * 3 + c) * in_plane;
                    double acc = 0.0;
                    if (in00) acc += w00 * src[static_cast<std::size_t>(y0) * w + x0];
                    if (in01) acc += w01 * src[static_cast<std::size_t>(y0) * w + x0 + 1];
                    if (in10) acc += w10 * src[static_cast<std::size_t>(y0 + 1) * w + x0];
                    if (in11) acc += w11 * src[static_cast<std::size_t>(y0 + 1) * w + x0 + 1];
                    ov[(static_cast<std::size_t>(t) * 3 + c) * out_plane +
                       static_cast<std::size_t>(yo) * out_size + xo] = acc;
                }
            }
        }
    }
    return out;
}

Tensor align_sequence(const FrameSequence& seq, int out_size) {
    require_frames_shape(seq.frames, "align_sequence");
    const int t_count = seq.frames.shape()[0];
    if (static_cast<int>(seq.landmarks.size()) != t_count) {
        throw ValueError("align_sequence: " + std::to_string(seq.landmarks.size()) +
                         " landmark records for " + std::to_string(t_count) + " frames");
    }
    Tensor out = Tensor::zeros({t_count, 3, out_size, out_size});
    const std::size_t frame_sz = static_cast<std::size_t>(3) * out_size * out_size;
    for (int t = 0; t < t_count; ++t) {
        const AlignmentTransform tf = compute_alignment(seq.landmarks[static_cast<std::size_t>(t)], out_size);
        Tensor one = index_axis(seq.frames, 0, t);  // [3,H,W]
        Tensor warped = apply_alignment(
            reshape(one, {1, 3, seq.frames.shape()[2], seq.frames.shape()[3]}), tf, out_size);
        std::copy(warped.values().begin(), warped.values().end(),
                  out.values().begin() + static_cast<std::ptrdiff_t>(frame_sz * t));
    }
    return out;
}

Tensor sample_clip(const Tensor& frames, int clip_len, Rng& rng) {
    require_frames_shape(frames, "sample_clip");
    if (clip_len <= 0) throw ValueError("sample_clip: clip_len must be positive");
    const int t_count = frames.shape()[0];
    const std::size_t frame_sz = frames.values().size() / static_cast<std::size_t>(t_count);

    int start;
    if (t_count >= clip_len) {
        start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t_count - clip_len + 1)));
    } else {
        start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t_count)));
    }
    Tensor out = Tensor::zeros({clip_len, frames.shape()[1], frames.shape()[2], frames.shape()[3]});
    for (int i = 0; i < clip_len; ++i) {
        const int src = (start + i) % t_count;
        std::copy(frames.values().begin() + static_cast<std::ptrdiff_t>(frame_sz * src),
                  frames.values().begin() + static_cast<std::ptrdiff_t>(frame_sz * (src + 1)),
                  out.values().begin() + static_cast<std::ptrdiff_t>(frame_sz * i));
    }
    return out;
}

Tensor augment(const Tensor& clip, const AugmentConfig& cfg, Rng& rng) {
    require_frames_shape(clip, "augment");
    if (cfg.flip_prob < 0.0 || cfg.flip_prob > 1.0) {
        throw ValueError("augment: flip_prob must lie in [0,1]");
    }
    for (double d : {cfg.brightness, cfg.contrast, cfg.saturation, cfg.hue}) {
        if (d < 0.0 || d > 0.1) {
            throw ValueError("augment: color deltas must lie in [0, 0.1]");
        }
    }
    // Fixed draw order keeps the stream position independent of which
    // stages end up active.
    const bool flip = rng.bernoulli(cfg.flip_prob);
    const double db = rng.uniform(-cfg.brightness, cfg.brightness);
    const double dc = rng.uniform(-cfg.contrast, cfg.contrast);
    const double ds = rng.uniform(-cfg.saturation, cfg.saturation);
    const double dh = rng.uniform(-cfg.hue, cfg.hue);

    Tensor out = clip.clone();
    auto& v = out.values();
    const int t_count = clip.shape()[0];
    const int h = clip.shape()[2];
    const int w = clip.shape()[3];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t frame_sz = 3 * plane;

    if (flip) {
        for (std::size_t base = 0; base < v.size(); base += static_cast<std::size_t>(w)) {
            std::reverse(v.begin() + static_cast<std::ptrdiff_t>(base),
                         v.begin() + static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(w)));
        }
    }
    if (db != 0.0) {
        for (auto& x : v) x = clamp01(x + db);
    }
    if (dc != 0.0) {
        for (int t = 0; t < t_count; ++t) {
            double* f = v.data() + frame_sz * static_cast<std::size_t>(t);
            double m = 0.0;
            for (std::size_t i = 0; i < frame_sz; ++i) m += f[i];
            m /= static_cast<double>(frame_sz);
            for (std::size_t i = 0; i < frame_sz; ++i) {
                f[i] = clamp01(m + (1.0 + dc) * (f[i] - m));
            }
        }
    }
    if (ds != 0.0 || dh != 0.0) {
        for (int t = 0; t < t_count; ++t) {
            double* f = v.data() + frame_sz * static_cast<std::size_t>(t);
            for (std::size_t i = 0; i < plane; ++i) {
                double hh, ss, vv;
                rgb_to_hsv(f[i], f[plane + i], f[2 * plane + i], hh, ss, vv);
                if (ds != 0.0) ss = clamp01(ss * (1.0 + ds));
                if (dh != 0.0) {
                    hh = std::fmod(hh + dh * kPi, 2.0 * kPi);
                    if (hh < 0.0) hh += 2.0 * kPi;
                }
                double r, g, b;
                hsv_to_rgb(hh, ss, vv, r, g, b);
                f[i] = clamp01(r);
                f[plane + i] = clamp01(g);
                f[2 * plane + i] = clamp01(b);
            }
        }
    }
    return out;
}

FrameSequence load_frames(const std::string& dir, const std::string& landmarks_file,
                          double frame_rate) {
    std::ifstream lf(landmarks_file);
    if (!lf) throw IoError("cannot open landmarks file: " + landmarks_file);
    std::vector<double> nums;
    double x;
    while (lf >> x) nums.push_back(x);
    if (!lf.eof()) throw FormatError(landmarks_file + ": non-numeric landmark data");
    if (nums.empty() || nums.size() % 6 != 0) {
        throw FormatError(landmarks_file + ": expected six numbers per frame, got " +
                          std::to_string(nums.size()) + " values");
    }
    const int t_count = static_cast<int>(nums.size() / 6);

    char name[32];
    std::vector<Image> images;
    images.reserve(static_cast<std::size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
        std::snprintf(name, sizeof(name), "frame_%06d.png", t);
        std::filesystem::path p = std::filesystem::path(dir) / name;
        if (!std::filesystem::exists(p)) {
            std::snprintf(name, sizeof(name), "frame_%06d.pgm", t);
            p = std::filesystem::path(dir) / name;
        }
        if (!std::filesystem::exists(p)) {
            throw IoError("missing frame " + std::to_string(t) + " of " +
                          std::to_string(t_count) + " in " + dir);
        }
        images.push_back(read_image(p.string()));
        if (images.back().width != images[0].width || images.back().height != images[0].height) {
            throw FormatError("frame " + std::to_string(t) + " size differs from frame 0");
        }
    }
    for (const char* ext : {"png", "pgm"}) {
        std::snprintf(name, sizeof(name), "frame_%06d.%s", t_count, ext);
        if (std::filesystem::exists(std::filesystem::path(dir) / name)) {
            throw FormatError(dir + ": more frames on disk than landmark records (" +
                              std::to_string(t_count) + ")");
        }
    }

    FrameSequence seq;
    seq.frame_rate = frame_rate;
    const int h = images[0].height, w = images[0].width;
    seq.frames = Tensor::zeros({t_count, 3, h, w});
    auto& fv = seq.frames.values();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int t = 0; t < t_count; ++t) {
        const Image& img = images[static_cast<std::size_t>(t)];
        for (int y = 0; y < h; ++y) {
            for (int xpos = 0; xpos < w; ++xpos) {
                for (int c = 0; c < 3; ++c) {
                    fv[(static_cast<std::size_t>(t) * 3 + c) * plane +
                       static_cast<std::size_t>(y) * w + xpos] = img.at(y, xpos, c);
                }
            }
        }
    }
    seq.landmarks.resize(static_cast<std::size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
        FrameLandmarks& lm = seq.landmarks[static_cast<std::size_t>(t)];
        const double* rec = nums.data() + static_cast<std::size_t>(t) * 6;
        lm.lx = rec[0];
        lm.ly = rec[1];
        lm.rx = rec[2];
        lm.ry = rec[3];
        lm.mx = rec[4];
        lm.my = rec[5];
        if (lm.lx == lm.rx && lm.ly == lm.ry) {
            throw ValueError(landmarks_file + ": frame " + std::to_string(t) +
                             " eye landmarks coincide");
        }
        for (double c : {lm.lx, lm.rx, lm.mx}) {
            if (c < 0.0 || c >= static_cast<double>(w)) {
                throw ValueError(landmarks_file + ": frame " + std::to_string(t) +
                                 " landmark x out of bounds");
            }
        }
        for (double c : {lm.ly, lm.ry, lm.my}) {
            if (c < 0.0 || c >= static_cast<double>(h)) {
                throw ValueError(landmarks_file + ": frame " + std::to_string(t) +
                                 " landmark y out of bounds");
            }
        }
    }
    return seq;
}

}  // namespace avf
