#include <algorithm>
#include <cmath>
#include <cstddef>

#include "avfusion/audio.hpp"
#include "avfusion/errors.hpp"

namespace avf {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    const std::size_t n = re.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            re[i] *= inv;
            im[i] *= inv;
        }
    }
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i)] =
            0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n)));
    }
    return w;
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

Spectrogram stft(const AudioClip& clip, StftConfig cfg) {
    if (!is_pow2(cfg.n_fft)) throw ValueError("stft: n_fft must be a power of two");
    if (cfg.hop <= 0) throw ValueError("stft: hop must be positive");
    const int len = static_cast<int>(clip.samples.size());
    if (len < cfg.n_fft) {
        throw ValueError("stft: clip length " + std::to_string(len) +
                         " is shorter than one window (" + std::to_string(cfg.n_fft) + ")");
    }
    const int frames = 1 + (len - cfg.n_fft) / cfg.hop;
    const int bins = cfg.n_fft / 2 + 1;
    const auto window = hann_window(cfg.n_fft);

    Spectrogram out;
    out.config = cfg;
    out.signal_len = len;
    out.magnitudes = Tensor::zeros({bins, frames});
    out.phase = Tensor::zeros({bins, frames});
    auto& mag = out.magnitudes.values();
    auto& ph = out.phase.values();

    std::vector<double> re(static_cast<std::size_t>(cfg.n_fft));
    std::vector<double> im(static_cast<std::size_t>(cfg.n_fft));
    for (int f = 0; f < frames; ++f) {
        const std::size_t off = static_cast<std::size_t>(f) * cfg.hop;
        for (int i = 0; i < cfg.n_fft; ++i) {
            re[static_cast<std::size_t>(i)] =
                clip.samples[off + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
            im[static_cast<std::size_t>(i)] = 0.0;
        }
        fft(re, im, false);
        for (int b = 0; b < bins; ++b) {
            const double r = re[static_cast<std::size_t>(b)];
            const double i = im[static_cast<std::size_t>(b)];
            mag[static_cast<std::size_t>(b) * frames + f] = std::hypot(r, i);
            ph[static_cast<std::size_t>(b) * frames + f] = std::atan2(i, r);
        }
    }
    return out;
}

AudioClip istft(const Spectrogram& spec, const AudioClip& reference) {
    const int n_fft = spec.config.n_fft;
    const int hop = spec.config.hop;
    const int bins = spec.bins();
    const int frames = spec.frames();
    const auto window = hann_window(n_fft);
    const std::size_t len = reference.samples.size();

    std::vector<double> acc(len, 0.0);
    std::vector<double> norm(len, 0.0);
    const auto& mag = spec.magnitudes.values();
    const auto& ph = spec.phase.values();

    std::vector<double> re(static_cast<std::size_t>(n_fft));
    std::vector<double> im(static_cast<std::size_t>(n_fft));
    for (int f = 0; f < frames; ++f) {
        for (int b = 0; b < bins; ++b) {
            const double m = mag[static_cast<std::size_t>(b) * frames + f];
            const double p = ph[static_cast<std::size_t>(b) * frames + f];
            re[static_cast<std::size_t>(b)] = m * std::cos(p);
            im[static_cast<std::size_t>(b)] = m * std::sin(p);
        }
        // Hermitian completion for a real signal.
        for (int b = bins; b < n_fft; ++b) {
            re[static_cast<std::size_t>(b)] = re[static_cast<std::size_t>(n_fft - b)];
            im[static_cast<std::size_t>(b)] = -im[static_cast<std::size_t>(n_fft - b)];
        }
        fft(re, im, true);
        const std::size_t off = static_cast<std::size_t>(f) * hop;
        for (int i = 0; i < n_fft; ++i) {
            const std::size_t t = off + static_cast<std::size_t>(i);
            if (t >= len) break;
            acc[t] += window[static_cast<std::size_t>(i)] * re[static_cast<std::size_t>(i)];
            norm[t] += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
        }
    }
    AudioClip out;
    out.sample_rate = reference.sample_rate;
    out.samples.resize(len);
    // Where the window energy vanishes (sample 0 of a periodic Hann, and
    // anything past the last frame) the input passes through unchanged.
    for (std::size_t t = 0; t < len; ++t) {
        out.samples[t] = norm[t] > 1e-8 ? acc[t] / norm[t] : reference.samples[t];
    }
    return out;
}

NoiseStats estimate_noise_stats(const Spectrogram& spec) {
    const int bins = spec.bins();
    const int frames = spec.frames();
    const auto& mag = spec.magnitudes.values();
    NoiseStats stats;
    stats.mean.resize(static_cast<std::size_t>(bins));
    stats.stddev.resize(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        const double* row = mag.data() + static_cast<std::size_t>(b) * frames;
        double m = 0.0;
        for (int f = 0; f < frames; ++f) m += row[f];
        m /= frames;
        double var = 0.0;
        for (int f = 0; f < frames; ++f) var += (row[f] - m) * (row[f] - m);
        var /= frames;
        stats.mean[static_cast<std::size_t>(b)] = m;
        stats.stddev[static_cast<std::size_t>(b)] = std::sqrt(var);
    }
    return stats;
}

AudioClip spectral_gate_denoise(const AudioClip& clip, const NoiseStats* stats,
                                DenoiseConfig cfg) {
    if (cfg.prop_decrease < 0.0 || cfg.prop_decrease > 1.0) {
        throw ValueError("denoise: prop_decrease must lie in [0,1]");
    }
    const StftConfig scfg;
    const std::size_t len = clip.samples.size();
    if (len < static_cast<std::size_t>(scfg.n_fft)) {
        throw ValueError("denoise: clip length " + std::to_string(len) +
                         " is shorter than one window (" + std::to_string(scfg.n_fft) + ")");
    }

    // Analyze a reflect-padded copy so every real sample sits under two
    // overlapping windows; without this the overlap-add normalization
    // divides by a vanishing window at the clip edges once the spectrum is
    // modified. The right pad runs to the next full frame boundary.
    const std::size_t hop = static_cast<std::size_t>(scfg.hop);
    const std::size_t pad = static_cast<std::size_t>(scfg.n_fft) / 2;
    const std::size_t rpad = pad + (hop - len % hop) % hop;
    AudioClip padded;
    padded.sample_rate = clip.sample_rate;
    padded.samples.resize(len + pad + rpad);
    for (std::size_t i = 0; i < pad; ++i) {
        padded.samples[i] = clip.samples[pad - i];
    }
    std::copy(clip.samples.begin(), clip.samples.end(), padded.samples.begin() + pad);
    for (std::size_t i = 0; i < rpad; ++i) {
        padded.samples[pad + len + i] = clip.samples[len - 2 - i];
    }

    Spectrogram spec = stft(padded, scfg);
    const int bins = spec.bins();
    const int frames = spec.frames();

    NoiseStats own;
    if (!stats) {
        own = estimate_noise_stats(spec);
        stats = &own;
    }
    if (static_cast<int>(stats->mean.size()) != bins ||
        static_cast<int>(stats->stddev.size()) != bins) {
        throw ValueError("denoise: noise stats cover " + std::to_string(stats->mean.size()) +
                         " bins, spectrogram has " + std::to_string(bins));
    }

    auto& mag = spec.magnitudes.values();
    std::vector<double> mask(static_cast<std::size_t>(bins) * frames);
    for (int b = 0; b < bins; ++b) {
        const double thr =
            stats->mean[static_cast<std::size_t>(b)] +
            cfg.threshold_k * stats->stddev[static_cast<std::size_t>(b)];
        for (int f = 0; f < frames; ++f) {
            const std::size_t i = static_cast<std::size_t>(b) * frames + f;
            mask[i] = mag[i] > thr ? 1.0 : 0.0;
        }
    }
    // 3x3 box smoothing over (freq, time), renormalized at the borders.
    std::vector<double> smooth(mask.size());
    for (int b = 0; b < bins; ++b) {
        for (int f = 0; f < frames; ++f) {
            double s = 0.0;
            int cnt = 0;
            for (int db = -1; db <= 1; ++db) {
                const int bb = b + db;
                if (bb < 0 || bb >= bins) continue;
                for (int df = -1; df <= 1; ++df) {
                    const int ff = f + df;
                    if (ff < 0 || ff >= frames) continue;
                    s += mask[static_cast<std::size_t>(bb) * frames + ff];
                    ++cnt;
                }
            }
            smooth[static_cast<std::size_t>(b) * frames + f] = s / cnt;
        }
    }
    for (std::size_t i = 0; i < mag.size(); ++i) {
        const double gain = 1.0 - cfg.prop_decrease * (1.0 - smooth[i]);
        mag[i] *= gain;
    }
    AudioClip rec = istft(spec, padded);
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(pad),
                       rec.samples.begin() + static_cast<std::ptrdiff_t>(pad + len));
    return out;
}

std::vector<AudioClip> segment_audio(const AudioClip& clip, double seconds) {
    if (seconds <= 0.0) throw ValueError("segment_audio: duration must be positive");
    const std::size_t n_per =
        static_cast<std::size_t>(std::lround(seconds * clip.sample_rate));
    if (n_per == 0) throw ValueError("segment_audio: duration rounds to zero samples");
    std::vector<AudioClip> out;
    const std::size_t count = clip.samples.size() / n_per;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        AudioClip seg;
        seg.sample_rate = clip.sample_rate;
        seg.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(k * n_per),
                           clip.samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * n_per));
        out.push_back(std::move(seg));
    }
    return out;
}

Tensor log_mel(const Spectrogram& spec, int n_mels) {
    const int bins = spec.bins();
    const int frames = spec.frames();
    if (n_mels <= 0) throw ValueError("log_mel: n_mels must be positive");
    if (n_mels > bins) {
        throw ValueError("log_mel: n_mels " + std::to_string(n_mels) + " exceeds " +
                         std::to_string(bins) + " frequency bins");
    }
    const double f_lo = 0.0, f_hi = 8000.0;
    auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(f_hi);
    std::vector<double> centers(static_cast<std::size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i) {
        centers[static_cast<std::size_t>(i)] =
            mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / (n_mels + 1));
    }
    const double bin_hz = static_cast<double>(kCanonicalRate) / spec.config.n_fft;

    const auto& mag = spec.magnitudes.values();
    Tensor out = Tensor::zeros({1, n_mels, frames});
    auto& ov = out.values();
    for (int m = 0; m < n_mels; ++m) {
        const double left = centers[static_cast<std::size_t>(m)];
        const double mid = centers[static_cast<std::size_t>(m) + 1];
        const double right = centers[static_cast<std::size_t>(m) + 2];
        for (int b = 0; b < bins; ++b) {
            const double f = b * bin_hz;
            double w = 0.0;
            if (f > left && f < mid) {
                w = (f - left) / (mid - left);
            } else if (f >= mid && f < right) {
                w = (right - f) / (right - mid);
            }
            if (w <= 0.0) continue;
            const double* row = mag.data() + static_cast<std::size_t>(b) * frames;
            double* orow = ov.data() + static_cast<std::size_t>(m) * frames;
            for (int t = 0; t < frames; ++t) orow[t] += w * row[t] * row[t];
        }
    }
    for (auto& v : ov) v = std::log(v + 1e-10);
    long double acc = 0.0L;
    for (double v : ov) acc += v;
    const double mean = static_cast<double>(acc / static_cast<long double>(ov.size()));
    long double vacc = 0.0L;
    for (double v : ov) {
        const long double d = v - mean;
        vacc += d * d;
    }
    const double sd = std::sqrt(static_cast<double>(vacc / static_cast<long double>(ov.size())));
    // A constant map (silent clip) carries no information; emit zeros rather
    // than normalized rounding noise.
    if (sd <= 1e-12) {
        for (auto& v : ov) v = 0.0;
        return out;
    }
    for (auto& v : ov) v = (v - mean) / sd;
    return out;
}

}  // namespace avf
