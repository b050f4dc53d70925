#pragma once

#include <array>
#include <string>
#include <vector>

#include "avfusion/rng.hpp"
#include "avfusion/tensor.hpp"

namespace avf {

struct FrameLandmarks {
    double lx = 0.0, ly = 0.0;  // left eye center
    double rx = 0.0, ry = 0.0;  // right eye center
    double mx = 0.0, my = 0.0;  // mouth center
};

struct FrameSequence {
    Tensor frames;  // [T, 3, H, W], values in [0,1]
    double frame_rate = 30.0;
    std::vector<FrameLandmarks> landmarks;  // one per frame

    int count() const { return frames.defined() ? frames.shape()[0] : 0; }
};

// Similarity transform mapping source pixel coordinates to output
// coordinates: p_out = s * R(theta) * p_src + (tx, ty).
struct AlignmentTransform {
    double theta = 0.0;
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;

    // Row-major 2x3 matrix [a b tx; c d ty].
    std::array<double, 6> matrix() const;
    // Forward-maps a source point.
    void map(double x, double y, double& ox, double& oy) const;
};

// Solves the similarity that makes the eye line horizontal, puts the eye
// midpoint at (S/2, S/3) and the mouth S/3 below it, for S = out_size.
AlignmentTransform compute_alignment(const FrameLandmarks& lm, int out_size = 224);

// Warps every frame with the same transform into an out_size square,
// bilinear sampling, zero fill outside the source.
Tensor apply_alignment(const Tensor& frames, const AlignmentTransform& tf, int out_size = 224);

// Per-frame alignment of a whole sequence using its own landmarks.
Tensor align_sequence(const FrameSequence& seq, int out_size = 224);

// Contiguous random window of clip_len frames; sequences shorter than
// clip_len wrap around cyclically.
Tensor sample_clip(const Tensor& frames, int clip_len, Rng& rng);

struct AugmentConfig {
    double flip_prob = 0.5;
    double brightness = 0.1;
    double contrast = 0.1;
    double saturation = 0.1;
    double hue = 0.1;
};

// One flip decision and one delta per property, drawn per clip and applied
// to every frame. Deltas are uniform in [-max, max]; brightness adds,
// contrast scales about the per-frame mean, saturation scales chroma, hue
// rotates by delta*pi. Output clamped to [0,1].
Tensor augment(const Tensor& clip, const AugmentConfig& cfg, Rng& rng);

// Loads frame_%06d.png (or .pgm) plus a whitespace-separated landmark
// sidecar, one "lx ly rx ry mx my" record per frame.
FrameSequence load_frames(const std::string& dir, const std::string& landmarks_file,
                          double frame_rate = 30.0);

}  // namespace avf
