#ifndef SFWM_SPECTROGRAM_HPP
#define SFWM_SPECTROGRAM_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"
#include "sfwm/wav.hpp"

namespace sfwm {

struct MelSpectrogram {
    Mat<float> frames;  // T x n_mels, log filterbank energies
    double frame_shift_s = 0.01;
    int n_mels = 128;
};

struct NormalizationStats {
    double lo = 0.0;
    double hi = 0.0;
};

struct NormalizedSpectrogram {
    Mat<float> frames;  // T x n_mels in [-1, 1]
    double frame_shift_s = 0.01;
    int n_mels = 128;
};

struct WindowPair {
    Mat<float> context;  // ctx x M
    Mat<float> future;   // horizon x M
    int64_t origin_frame = 0;
};

struct FrontendConfig {
    double frame_len_s = 0.025;
    double frame_shift_s = 0.010;
    int n_mels = 128;
    double fmin = 20.0;
    double fmax = 0.0;  // 0 -> Nyquist
    int64_t ctx_frames = 128;
    int64_t future_frames = 256;
    int64_t window_stride = 16;
};

inline double mel_of_hz(double f) { return 1127.0 * std::log(1.0 + f / 700.0); }
inline double hz_of_mel(double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); }

namespace specdetail {

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline int64_t next_pow2(int64_t n) {
    int64_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace specdetail

// Frame k covers samples [k*hop, k*hop + win); Hann window, power spectrum
// over an FFT sized to the next power of two above the window length.
inline Mat<float> stft_power(const PcmSignal& sig, double frame_len_s, double frame_shift_s) {
    if (frame_shift_s <= 0.0 || frame_len_s < frame_shift_s)
        throw ConfigError("stft: need frame_len >= frame_shift > 0");
    const int64_t win = static_cast<int64_t>(std::llround(frame_len_s * sig.sample_rate));
    const int64_t hop = static_cast<int64_t>(std::llround(frame_shift_s * sig.sample_rate));
    const int64_t n = static_cast<int64_t>(sig.samples.size());
    if (win < 2 || hop < 1) throw ConfigError("stft: degenerate frame geometry");
    if (n < win) throw ConfigError("stft: signal shorter than one frame");
    const int64_t frames = (n - win) / hop + 1;
    const int64_t nfft = specdetail::next_pow2(win);
    const int64_t bins = nfft / 2 + 1;

    std::vector<double> hann(static_cast<size_t>(win));
    for (int64_t i = 0; i < win; ++i)
        hann[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * static_cast<double>(i) /
                                 static_cast<double>(win - 1));

    Mat<float> out(frames, bins);
    std::vector<std::complex<double>> buf(static_cast<size_t>(nfft));
    for (int64_t k = 0; k < frames; ++k) {
        for (int64_t i = 0; i < win; ++i)
            buf[static_cast<size_t>(i)] = {hann[static_cast<size_t>(i)] *
                                               static_cast<double>(sig.samples[static_cast<size_t>(k * hop + i)]),
                                           0.0};
        for (int64_t i = win; i < nfft; ++i) buf[static_cast<size_t>(i)] = {0.0, 0.0};
        specdetail::fft_pow2(buf);
        for (int64_t b = 0; b < bins; ++b) {
            const auto& c = buf[static_cast<size_t>(b)];
            out.at(k, b) = static_cast<float>(c.real() * c.real() + c.imag() * c.imag());
        }
    }
    return out;
}

// Triangular filters equally spaced on the mel scale; rows are filters.
inline Mat<double> mel_filterbank(int n_bins, int sample_rate, int n_mels, double fmin, double fmax) {
    if (fmax <= 0.0) fmax = sample_rate / 2.0;
    if (n_mels < 1) throw ConfigError("mel: n_mels must be >= 1");
    if (!(fmin < fmax) || fmax > sample_rate / 2.0 + 1e-9)
        throw ConfigError("mel: need fmin < fmax <= Nyquist");
    if (n_mels > n_bins) throw ConfigError("mel: n_mels exceeds number of DFT bins");
    const double mlo = mel_of_hz(fmin), mhi = mel_of_hz(fmax);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[static_cast<size_t>(i)] = mlo + (mhi - mlo) * static_cast<double>(i) / (n_mels + 1);

    const int64_t nfft = static_cast<int64_t>(n_bins - 1) * 2;
    Mat<double> fb(n_mels, n_bins);
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[static_cast<size_t>(m)];
        const double center = edges[static_cast<size_t>(m) + 1];
        const double right = edges[static_cast<size_t>(m) + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * sample_rate / static_cast<double>(nfft);
            const double mel = mel_of_hz(f);
            double w = 0.0;
            if (mel > left && mel < right)
                w = (mel <= center) ? (mel - left) / (center - left) : (right - mel) / (right - center);
            fb.at(m, b) = w;
        }
    }
    return fb;
}

// Log mel filterbank features; no appended energy coefficient.
inline MelSpectrogram log_mel(const Mat<float>& power, int sample_rate, double frame_shift_s,
                              int n_mels = 128, double fmin = 20.0, double fmax = 0.0) {
    const Mat<double> fb = mel_filterbank(static_cast<int>(power.cols), sample_rate, n_mels, fmin, fmax);
    MelSpectrogram mel;
    mel.n_mels = n_mels;
    mel.frame_shift_s = frame_shift_s;
    mel.frames = Mat<float>(power.rows, n_mels);
    constexpr double kLogFloor = 1e-10;
    for (int64_t t = 0; t < power.rows; ++t) {
        const float* p = power.row(t);
        for (int m = 0; m < n_mels; ++m) {
            const double* w = fb.row(m);
            double acc = 0.0;
            for (int64_t b = 0; b < power.cols; ++b) acc += w[b] * static_cast<double>(p[b]);
            mel.frames.at(t, m) = static_cast<float>(std::log(acc + kLogFloor));
        }
    }
    return mel;
}

// Corpus-global min/max for the linear map onto [-1, 1].
inline NormalizationStats fit_normalization(const std::vector<MelSpectrogram>& corpus) {
    if (corpus.empty()) throw ConfigError("fit_normalization: empty corpus");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : corpus)
        for (float x : s.frames.v) {
            lo = std::min(lo, static_cast<double>(x));
            hi = std::max(hi, static_cast<double>(x));
        }
    if (!(lo < hi)) throw NumericError("fit_normalization: degenerate corpus (constant value)");
    return {lo, hi};
}

inline float apply_normalization(double x, const NormalizationStats& st) {
    double y = 2.0 * (x - st.lo) / (st.hi - st.lo) - 1.0;
    if (y > 1.0) y = 1.0;
    if (y < -1.0) y = -1.0;
    return static_cast<float>(y);
}

inline NormalizedSpectrogram normalize(const MelSpectrogram& spec, const NormalizationStats& st) {
    if (!(st.lo < st.hi)) throw ConfigError("normalize: invalid stats");
    NormalizedSpectrogram out;
    out.frame_shift_s = spec.frame_shift_s;
    out.n_mels = spec.n_mels;
    out.frames = Mat<float>(spec.frames.rows, spec.frames.cols);
    for (size_t i = 0; i < spec.frames.v.size(); ++i)
        out.frames.v[i] = apply_normalization(spec.frames.v[i], st);
    return out;
}

// Contiguous (context, future) training pairs at origins 0, stride, ...
inline std::vector<WindowPair> window_pairs(const Mat<float>& frames, int64_t ctx, int64_t horizon,
                                            int64_t stride) {
    if (stride < 1) throw ConfigError("window_pairs: stride must be >= 1");
    if (frames.rows < ctx + horizon) throw ConfigError("window_pairs: spectrogram too short");
    std::vector<WindowPair> out;
    for (int64_t o = 0; o + ctx + horizon <= frames.rows; o += stride) {
        WindowPair p;
        p.origin_frame = o;
        p.context = take_rows(frames, o, o + ctx);
        p.future = take_rows(frames, o + ctx, o + ctx + horizon);
        out.push_back(std::move(p));
    }
    return out;
}

// Full pipeline for one signal.
inline NormalizedSpectrogram signal_to_normalized(const PcmSignal& sig, const FrontendConfig& fc,
                                                  const NormalizationStats& st) {
    const Mat<float> power = stft_power(sig, fc.frame_len_s, fc.frame_shift_s);
    const MelSpectrogram mel = log_mel(power, sig.sample_rate, fc.frame_shift_s, fc.n_mels, fc.fmin, fc.fmax);
    return normalize(mel, st);
}

}  // namespace sfwm

#endif
