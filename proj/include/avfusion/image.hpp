#pragma once

#include <string>
#include <vector>

namespace avf {

// Interleaved row-major raster, values in [0,1]. channels is 1 (gray) or 3
// (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> pixels;

    double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Reads a PNG (any 8/16-bit color type) or binary PGM. Always returns a
// 3-channel image; gray sources are replicated.
Image read_image(const std::string& path);

// Writes 8-bit PNG, gray or RGB by the image's channel count.
void write_png(const std::string& path, const Image& img);

// Writes binary PGM (P5); the image must be single-channel.
void write_pgm(const std::string& path, const Image& img);

}  // namespace avf
