#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace avf {

// Deterministic, portable pseudo-random stream (splitmix64 core).
// All randomness in the project flows through Rng instances derived from
// a single user seed, so runs are bit-reproducible across platforms;
// std::random distributions are avoided on purpose.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        // Multiply-shift; bias is negligible for the small n used here.
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a string tag, for deriving named substreams.
inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix_u64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return z ^ (z >> 27);
}

// Derive an independent stream from (seed, purpose tag, ids...).
// Streams with distinct tags or ids are uncorrelated regardless of the
// order they are created or consumed in.
inline Rng derive_rng(std::uint64_t seed, std::string_view tag,
                      std::uint64_t id0 = 0, std::uint64_t id1 = 0) {
    std::uint64_t h = mix_u64(seed, hash_tag(tag));
    h = mix_u64(h, id0);
    h = mix_u64(h, id1);
    return Rng(h);
}

}  // namespace avf
