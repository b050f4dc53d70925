#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "avfusion/audio.hpp"
#include "avfusion/errors.hpp"

namespace avf {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 4);
}

void wr_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

std::vector<double> resample_linear(const std::vector<double>& samples, int from_rate,
                                    int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) throw ValueError("resample: rates must be positive");
    if (from_rate == to_rate || samples.empty()) return samples;
    const double ratio = static_cast<double>(to_rate) / static_cast<double>(from_rate);
    const std::size_t out_len =
        static_cast<std::size_t>(std::lround(static_cast<double>(samples.size()) * ratio));
    std::vector<double> out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double pos = static_cast<double>(i) / ratio;
        const std::size_t i0 = static_cast<std::size_t>(pos);
        if (i0 + 1 >= samples.size()) {
            out[i] = samples.back();
        } else {
            const double frac = pos - static_cast<double>(i0);
            out[i] = samples[i0] * (1.0 - frac) + samples[i0 + 1] * frac;
        }
    }
    return out;
}

AudioClip load_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_wav: cannot open: " + path);

    unsigned char header[12];
    if (!is.read(reinterpret_cast<char*>(header), 12) || std::memcmp(header, "RIFF", 4) != 0 ||
        std::memcmp(header + 8, "WAVE", 4) != 0) {
        throw FormatError("load_wav: not a RIFF/WAVE file: " + path);
    }

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<unsigned char> data;
    bool have_data = false;

    unsigned char chunk[8];
    while (is.read(reinterpret_cast<char*>(chunk), 8)) {
        const std::uint32_t size = rd_u32(chunk + 4);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) throw FormatError("load_wav: fmt chunk too small: " + path);
            std::vector<unsigned char> fmt(size);
            if (!is.read(reinterpret_cast<char*>(fmt.data()), size)) {
                throw FormatError("load_wav: truncated fmt chunk: " + path);
            }
            format = rd_u16(fmt.data());
            channels = rd_u16(fmt.data() + 2);
            rate = rd_u32(fmt.data() + 4);
            bits = rd_u16(fmt.data() + 14);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data.resize(size);
            if (!is.read(reinterpret_cast<char*>(data.data()), size)) {
                throw FormatError("load_wav: truncated data chunk: " + path);
            }
            have_data = true;
        } else {
            // Skip unknown chunks (word-aligned).
            is.seekg(size + (size & 1), std::ios::cur);
        }
        if (size & 1) is.seekg(1, std::ios::cur);
    }
    if (!have_fmt || !have_data) {
        throw FormatError("load_wav: missing fmt or data chunk: " + path);
    }
    if (format != 1 || channels != 1 || bits != 16) {
        throw UnsupportedError("load_wav: only PCM 16-bit mono is supported (got format " +
                               std::to_string(format) + ", " + std::to_string(channels) +
                               " ch, " + std::to_string(bits) + " bit): " + path);
    }
    if (rate == 0) throw FormatError("load_wav: zero sample rate: " + path);

    const std::size_t n = data.size() / 2;
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t s =
            static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
        samples[i] = static_cast<double>(s) / 32768.0;
    }
    AudioClip clip;
    clip.sample_rate = kCanonicalRate;
    clip.samples = resample_linear(samples, static_cast<int>(rate), kCanonicalRate);
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("write_wav: cannot open for writing: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, 1);  // PCM
    wr_u16(os, 1);  // mono
    wr_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
    wr_u32(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    wr_u16(os, 2);   // block align
    wr_u16(os, 16);  // bits
    os.write("data", 4);
    wr_u32(os, data_bytes);
    for (double v : clip.samples) {
        double clamped = v;
        if (clamped > 1.0) clamped = 1.0;
        if (clamped < -1.0) clamped = -1.0;
        const int q = static_cast<int>(std::lround(clamped * 32767.0));
        wr_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    os.flush();
    if (!os) throw IoError("write_wav: write failed: " + path);
}

}  // namespace avf
