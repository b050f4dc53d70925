#include "avfusion/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "avfusion/errors.hpp"

namespace avf {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("checkpoint: truncated file: " + path);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError("checkpoint: truncated file: " + path);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_tensors(const std::string& path, const NamedTensors& entries, bool frozen) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, frozen ? 1u : 0u);
    put_u64(os, static_cast<std::uint64_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& s = t.shape();
        put_u32(os, static_cast<std::uint32_t>(s.size()));
        for (int d : s) put_u64(os, static_cast<std::uint64_t>(d));
        for (double v : t.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(os, bits);
        }
    }
    os.flush();
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

NamedTensors load_tensors(const std::string& path, bool* frozen) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic in " + path);
    }
    const std::uint32_t version = get_u32(is, path);
    if (version != kVersion) {
        throw UnsupportedError("checkpoint: unsupported version " + std::to_string(version) +
                               " in " + path);
    }
    const std::uint32_t flags = get_u32(is, path);
    if (frozen) *frozen = (flags & 1u) != 0;
    const std::uint64_t count = get_u64(is, path);
    NamedTensors out;
    out.reserve(count);
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (name_len > 0 && !is.read(name.data(), name_len)) {
            throw FormatError("checkpoint: truncated file: " + path);
        }
        const std::uint32_t ndim = get_u32(is, path);
        if (ndim == 0 || ndim > 8) {
            throw FormatError("checkpoint: invalid rank " + std::to_string(ndim) + " in " + path);
        }
        Shape shape(ndim);
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const std::uint64_t ext = get_u64(is, path);
            if (ext == 0 || ext > (1ull << 31)) {
                throw FormatError("checkpoint: invalid extent in " + path);
            }
            shape[d] = static_cast<int>(ext);
            numel *= shape[d];
        }
        std::vector<double> vals(static_cast<std::size_t>(numel));
        for (auto& v : vals) {
            const std::uint64_t bits = get_u64(is, path);
            std::memcpy(&v, &bits, 8);
        }
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(vals)));
    }
    return out;
}

void save_params(const std::string& path, const ModelParams& params) {
    save_tensors(path, params.entries(), params.frozen());
}

ModelParams load_params(const std::string& path) {
    bool frozen = false;
    NamedTensors entries = load_tensors(path, &frozen);
    ModelParams out;
    for (auto& [name, t] : entries) out.add(name, std::move(t));
    out.set_frozen(frozen);
    return out;
}

}  // namespace avf
