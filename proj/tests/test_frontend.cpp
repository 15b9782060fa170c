#include <catch2/catch_amalgamated.hpp>
#include <complex>

#include "sfwm/digest.hpp"
#include "sfwm/gridio.hpp"
#include "sfwm/rng.hpp"
#include "sfwm/spectrogram.hpp"
#include "sfwm/wav.hpp"

using namespace sfwm;

namespace {

// Brute-force DFT power of one Hann-windowed frame: the independent oracle
// for the FFT-backed path.
std::vector<double> brute_frame_power(const std::vector<float>& x, size_t start, int win, int nfft) {
    std::vector<double> w(static_cast<size_t>(win));
    for (int i = 0; i < win; ++i)
        w[static_cast<size_t>(i)] = (0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1))) *
                                    static_cast<double>(x[start + static_cast<size_t>(i)]);
    std::vector<double> power(static_cast<size_t>(nfft / 2 + 1));
    for (int b = 0; b <= nfft / 2; ++b) {
        std::complex<double> acc(0.0, 0.0);
        for (int i = 0; i < win; ++i) {
            const double ang = -2.0 * M_PI * b * i / nfft;
            acc += w[static_cast<size_t>(i)] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        power[static_cast<size_t>(b)] = std::norm(acc);
    }
    return power;
}

std::vector<uint8_t> wav_header_pcm16(uint32_t sr, const std::vector<int16_t>& data,
                                      uint16_t channels = 1) {
    std::vector<uint8_t> b;
    auto put32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    };
    auto put16 = [&](uint16_t v) {
        b.push_back(static_cast<uint8_t>(v & 0xff));
        b.push_back(static_cast<uint8_t>(v >> 8));
    };
    auto tag = [&](const char* s) { b.insert(b.end(), s, s + 4); };
    const uint32_t dlen = static_cast<uint32_t>(data.size() * 2);
    tag("RIFF");
    put32(36 + dlen);
    tag("WAVE");
    tag("fmt ");
    put32(16);
    put16(1);
    put16(channels);
    put32(sr);
    put32(sr * 2 * channels);
    put16(static_cast<uint16_t>(2 * channels));
    put16(16);
    tag("data");
    put32(dlen);
    for (int16_t s : data) put16(static_cast<uint16_t>(s));
    return b;
}

}  // namespace

TEST_CASE("wav pcm16 scaling") {
    auto bytes = wav_header_pcm16(16000, {0, 16384, -16384, 32767});
    auto sig = load_wav(bytes);
    REQUIRE(sig.sample_rate == 16000);
    REQUIRE(sig.samples.size() == 4);
    REQUIRE(sig.samples[0] == 0.0f);
    REQUIRE(sig.samples[1] == Catch::Approx(0.5));
    REQUIRE(sig.samples[2] == Catch::Approx(-0.5));
    REQUIRE(sig.samples[3] == Catch::Approx(32767.0 / 32768.0));
}

TEST_CASE("wav stereo averages to mono") {
    // L = 0.2, R = 0.4 -> 0.3
    const int16_t l = static_cast<int16_t>(std::lround(0.2 * 32768.0));
    const int16_t r = static_cast<int16_t>(std::lround(0.4 * 32768.0));
    auto bytes = wav_header_pcm16(16000, {l, r}, 2);
    auto sig = load_wav(bytes);
    REQUIRE(sig.samples.size() == 1);
    REQUIRE(sig.samples[0] == Catch::Approx(0.3).margin(1e-4));
}

TEST_CASE("wav rejects RIFX with a malformed header error") {
    auto bytes = wav_header_pcm16(16000, {0, 0});
    bytes[3] = 'X';  // RIFX
    try {
        load_wav(bytes);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(std::string(e.what()).find("malformed header") != std::string::npos);
        REQUIRE(e.offset == 0);
    }
}

TEST_CASE("wav truncated data chunk reports an offset") {
    auto bytes = wav_header_pcm16(16000, {1, 2, 3, 4});
    bytes.resize(bytes.size() - 3);
    REQUIRE_THROWS_AS(load_wav(bytes), ParseError);
}

TEST_CASE("wav round trip through the pcm16 writer") {
    PcmSignal sig;
    sig.sample_rate = 16000;
    Rng rng(3);
    for (int i = 0; i < 256; ++i) sig.samples.push_back(static_cast<float>(rng.uniform(-0.9, 0.9)));
    auto loaded = load_wav(encode_wav_pcm16(sig));
    REQUIRE(loaded.samples.size() == sig.samples.size());
    for (size_t i = 0; i < sig.samples.size(); ++i)
        REQUIRE(loaded.samples[i] == Catch::Approx(sig.samples[i]).margin(1.0 / 16000.0));
}

TEST_CASE("stft hop arithmetic at 44.1 kHz") {
    PcmSignal sig;
    sig.sample_rate = 44100;
    sig.samples.assign(44100, 0.0f);
    auto power = stft_power(sig, 0.025, 0.010);
    // hop = 441 samples, win = 1103 -> T = (44100 - 1103)/441 + 1
    REQUIRE(power.rows == (44100 - 1103) / 441 + 1);
}

TEST_CASE("stft of silence is identically zero") {
    PcmSignal sig;
    sig.sample_rate = 16000;
    sig.samples.assign(8000, 0.0f);
    auto power = stft_power(sig, 0.025, 0.010);
    for (float x : power.v) REQUIRE(x == 0.0f);
}

TEST_CASE("stft frame-count law against brute-force framing") {
    Rng rng(17);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 900 + static_cast<int>(rng.index(4000));
        PcmSignal sig;
        sig.sample_rate = 16000;
        sig.samples.assign(static_cast<size_t>(n), 0.01f);
        const int win = 400, hop = 160;
        if (n < win) continue;
        // brute force: count windows fitting entirely inside the signal
        int expect = 0;
        for (int start = 0; start + win <= n; start += hop) ++expect;
        auto power = stft_power(sig, 0.025, 0.010);
        REQUIRE(power.rows == expect);
        REQUIRE(power.rows == (n - win) / hop + 1);
    }
}

TEST_CASE("stft too-short signal is rejected") {
    PcmSignal sig;
    sig.sample_rate = 16000;
    sig.samples.assign(100, 0.0f);
    REQUIRE_THROWS_AS(stft_power(sig, 0.025, 0.010), ConfigError);
}

TEST_CASE("pure sine peaks at the DFT bin nearest its frequency") {
    const int sr = 16000;
    const double f0 = 1000.0;
    PcmSignal sig;
    sig.sample_rate = sr;
    sig.samples.resize(8000);
    for (size_t i = 0; i < sig.samples.size(); ++i)
        sig.samples[i] = static_cast<float>(0.7 * std::sin(2.0 * M_PI * f0 * i / sr));
    auto power = stft_power(sig, 0.025, 0.010);
    const int win = 400, nfft = 512;
    const int expected_bin = static_cast<int>(std::lround(f0 * nfft / sr));
    for (int64_t k = 0; k < power.rows; k += 7) {
        int64_t argmax = 0;
        for (int64_t b = 1; b < power.cols; ++b)
            if (power.at(k, b) > power.at(k, argmax)) argmax = b;
        REQUIRE(argmax == expected_bin);
        // cross-check the whole frame against the brute-force DFT oracle
        if (k == 0) {
            auto oracle = brute_frame_power(sig.samples, 0, win, nfft);
            for (int64_t b = 0; b < power.cols; ++b)
                REQUIRE(power.at(0, b) == Catch::Approx(oracle[static_cast<size_t>(b)]).margin(1e-6));
        }
    }
}

TEST_CASE("mel scale formula") {
    REQUIRE(mel_of_hz(700.0) == Catch::Approx(1127.0 * std::log(2.0)));
    REQUIRE(mel_of_hz(700.0) == Catch::Approx(781.17).margin(0.01));
}

TEST_CASE("log-mel of zero power is the log floor") {
    Mat<float> power(3, 257);
    auto mel = log_mel(power, 16000, 0.01, 40);
    for (float x : mel.frames.v) REQUIRE(x == Catch::Approx(std::log(1e-10)));
}

TEST_CASE("440 Hz sine lands in the mel bin whose center is nearest 440") {
    const int sr = 44100;
    PcmSignal sig;
    sig.sample_rate = sr;
    sig.samples.resize(static_cast<size_t>(sr / 2));
    for (size_t i = 0; i < sig.samples.size(); ++i)
        sig.samples[i] = static_cast<float>(0.8 * std::sin(2.0 * M_PI * 440.0 * i / sr));
    auto power = stft_power(sig, 0.025, 0.010);
    auto mel = log_mel(power, sr, 0.01, 128, 20.0, sr / 2.0);

    // oracle: filter centers straight from the mel formula
    const double mlo = mel_of_hz(20.0), mhi = mel_of_hz(sr / 2.0);
    int nearest = 0;
    double best = 1e18;
    for (int m = 0; m < 128; ++m) {
        const double center_hz = hz_of_mel(mlo + (mhi - mlo) * (m + 1) / 129.0);
        if (std::abs(center_hz - 440.0) < best) {
            best = std::abs(center_hz - 440.0);
            nearest = m;
        }
    }
    for (int64_t t = 0; t < mel.frames.rows; t += 9) {
        int argmax = 0;
        for (int m = 1; m < 128; ++m)
            if (mel.frames.at(t, m) > mel.frames.at(t, argmax)) argmax = m;
        REQUIRE(argmax == nearest);
    }

    // oracle: brute-force the filterbank product for one frame
    auto fb = mel_filterbank(static_cast<int>(power.cols), sr, 128, 20.0, sr / 2.0);
    for (int m = 0; m < 128; m += 17) {
        double acc = 0.0;
        for (int64_t b = 0; b < power.cols; ++b) acc += fb.at(m, b) * static_cast<double>(power.at(0, b));
        REQUIRE(mel.frames.at(0, m) == Catch::Approx(std::log(acc + 1e-10)).margin(1e-5));
    }
}

TEST_CASE("mel filters are triangular, positive, and overlapping") {
    auto fb = mel_filterbank(257, 16000, 40, 20.0, 8000.0);
    for (int m = 0; m < 40; ++m) {
        double sum = 0.0;
        int support = 0;
        bool rising_seen = false, falling_after_peak = true;
        double peak = 0.0;
        for (int b = 0; b < 257; ++b) {
            const double w = fb.at(m, b);
            REQUIRE(w >= 0.0);
            sum += w;
            if (w > 0) ++support;
            if (w > peak) {
                peak = w;
                rising_seen = true;
            }
        }
        REQUIRE(sum > 0.0);
        REQUIRE(rising_seen);
        REQUIRE(falling_after_peak);
        REQUIRE(support >= 1);
        if (m + 1 < 40) {
            // adjacent filters overlap: some bin has weight in both
            bool overlap = false;
            for (int b = 0; b < 257; ++b)
                if (fb.at(m, b) > 0 && fb.at(m + 1, b) > 0) overlap = true;
            REQUIRE(overlap);
        }
    }
}

TEST_CASE("mel rejects more filters than DFT bins") {
    Mat<float> power(2, 17);
    REQUIRE_THROWS_AS(log_mel(power, 16000, 0.01, 64), ConfigError);
}

TEST_CASE("normalization fit and application") {
    MelSpectrogram a, b;
    a.frames = Mat<float>(2, 2);
    a.frames.v = {-23.0f, -5.0f, 0.0f, 1.0f};
    b.frames = Mat<float>(1, 4);
    b.frames.v = {4.6f, -1.0f, 2.0f, 3.0f};
    auto st = fit_normalization({a, b});
    REQUIRE(st.lo == Catch::Approx(-23.0));
    REQUIRE(st.hi == Catch::Approx(4.6));
    REQUIRE(apply_normalization(st.lo, st) == Catch::Approx(-1.0));
    REQUIRE(apply_normalization(st.hi, st) == Catch::Approx(1.0));
    REQUIRE(apply_normalization((st.lo + st.hi) / 2.0, st) == Catch::Approx(0.0).margin(1e-7));
    REQUIRE(apply_normalization(st.hi + 10.0, st) == 1.0f);  // clamps

    NormalizationStats simple{0.0, 2.0};
    REQUIRE(apply_normalization(0.5, simple) == Catch::Approx(-0.5));

    MelSpectrogram flat;
    flat.frames = Mat<float>(4, 4, 0.0f);
    REQUIRE_THROWS_WITH(fit_normalization({flat}), Catch::Matchers::ContainsSubstring("degenerate corpus"));
}

TEST_CASE("normalize is monotone before clamping") {
    NormalizationStats st{-3.0, 7.0};
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double x1 = rng.uniform(-5.0, 9.0);
        const double x2 = x1 + rng.uniform(0.0, 3.0);
        REQUIRE(apply_normalization(x1, st) <= apply_normalization(x2, st));
    }
}

TEST_CASE("window pair extraction counts, origins, and bit-identical tiles") {
    SECTION("exactly one pair") {
        Mat<float> f(384, 8);
        auto pairs = window_pairs(f, 128, 256, 1);
        REQUIRE(pairs.size() == 1);
        REQUIRE(pairs[0].origin_frame == 0);
    }
    SECTION("two pairs with stride 10") {
        Mat<float> f(394, 8);
        auto pairs = window_pairs(f, 128, 256, 10);
        REQUIRE(pairs.size() == 2);
        REQUIRE(pairs[0].origin_frame == 0);
        REQUIRE(pairs[1].origin_frame == 10);
    }
    SECTION("too short") {
        Mat<float> f(300, 8);
        REQUIRE_THROWS_WITH(window_pairs(f, 128, 256, 1), Catch::Matchers::ContainsSubstring("too short"));
    }
    SECTION("tiles are exact sub-matrices and contiguous") {
        Rng rng(21);
        Mat<float> f = rng.normal_mat<float>(420, 6);
        auto pairs = window_pairs(f, 128, 256, 16);
        REQUIRE(pairs.size() == static_cast<size_t>((420 - 384) / 16 + 1));
        for (const auto& p : pairs) {
            for (int64_t i = 0; i < 128; ++i)
                for (int64_t j = 0; j < 6; ++j)
                    REQUIRE(p.context.at(i, j) == f.at(p.origin_frame + i, j));
            for (int64_t i = 0; i < 256; ++i)
                for (int64_t j = 0; j < 6; ++j)
                    REQUIRE(p.future.at(i, j) == f.at(p.origin_frame + 128 + i, j));
        }
    }
}

TEST_CASE("context and future spans at the 10 ms shift") {
    REQUIRE(128 * 0.010 == Catch::Approx(1.28));
    REQUIRE(256 * 0.010 == Catch::Approx(2.56));
}

TEST_CASE("grid file round trip is byte-exact") {
    Rng rng(33);
    Mat<float> f = rng.normal_mat<float>(50, 16);
    const std::string path = "test_grid_tmp.bin";
    write_grid(path, f, 0.01);
    auto g = read_grid(path);
    REQUIRE(g.frame_shift_s == 0.01);
    REQUIRE(g.frames.rows == 50);
    REQUIRE(g.frames.cols == 16);
    for (size_t i = 0; i < f.v.size(); ++i) REQUIRE(g.frames.v[i] == f.v[i]);
    write_grid(path + "2", g.frames, g.frame_shift_s);
    REQUIRE(read_file_bytes(path) == read_file_bytes(path + "2"));
    std::remove(path.c_str());
    std::remove((path + "2").c_str());
}
