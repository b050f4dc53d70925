#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "avfusion/errors.hpp"
#include "avfusion/image.hpp"

namespace avf {

namespace {

std::uint8_t to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png_file(const std::string& path, std::FILE* fp) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("libpng: failed to allocate read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng: failed to allocate info struct");
    }
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": not a valid PNG file");
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    data.resize(stride * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = data.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = data.data() + stride * y;
        double* dst = img.pixels.data() + static_cast<std::size_t>(y) * w * 3;
        for (int i = 0; i < w * 3; ++i) dst[i] = src[i] / 255.0;
    }
    return img;
}

Image read_pgm_file(const std::string& path, std::istream& is) {
    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = is.get()) != EOF) {
            if (ch == '#') {
                while ((ch = is.get()) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P5") throw FormatError(path + ": not a binary PGM file");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw FormatError(path + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0) throw FormatError(path + ": bad PGM dimensions");
    if (maxval <= 0 || maxval > 255) {
        throw UnsupportedError(path + ": only 8-bit PGM is supported");
    }
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(is.gcount()) != data.size()) {
        throw FormatError(path + ": truncated PGM payload");
    }
    Image img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = data[i] / static_cast<double>(maxval);
        img.pixels[i * 3] = v;
        img.pixels[i * 3 + 1] = v;
        img.pixels[i * 3 + 2] = v;
    }
    return img;
}

}  // namespace

Image read_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open image file: " + path);
    unsigned char sig[8] = {0};
    probe.read(reinterpret_cast<char*>(sig), 8);
    const std::size_t got = static_cast<std::size_t>(probe.gcount());
    if (got >= 2 && sig[0] == 'P' && sig[1] == '5') {
        probe.seekg(0);
        return read_pgm_file(path, probe);
    }
    if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) {
        probe.close();
        FilePtr fp(std::fopen(path.c_str(), "rb"));
        if (!fp) throw IoError("cannot open image file: " + path);
        return read_png_file(path, fp.get());
    }
    throw FormatError(path + ": not a PNG or PGM file");
}

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValueError("write_png: image must have 1 or 3 channels");
    }
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() !=
            static_cast<std::size_t>(img.width) * img.height * img.channels) {
        throw ValueError("write_png: image dimensions do not match pixel count");
    }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot create image file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("libpng: failed to allocate write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng: failed to allocate info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG: " + path);
    }
    png_init_io(png, fp.get());
    const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        const double* src =
            img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(src[i]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::string& path, const Image& img) {
    if (img.channels != 1) throw ValueError("write_pgm: image must be single-channel");
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
        throw ValueError("write_pgm: image dimensions do not match pixel count");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot create image file: " + path);
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width));
    for (int y = 0; y < img.height; ++y) {
        const double* src = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(src[i]);
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("failed writing PGM: " + path);
}

}  // namespace avf
