#ifndef SFWM_WAV_HPP
#define SFWM_WAV_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sfwm/common.hpp"

namespace sfwm {

// Mono PCM audio in [-1, 1].
struct PcmSignal {
    std::vector<float> samples;
    int sample_rate = 0;
};

namespace wavdetail {

inline uint32_t u32le(const std::vector<uint8_t>& b, size_t at) {
    return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
           (static_cast<uint32_t>(b[at + 2]) << 16) | (static_cast<uint32_t>(b[at + 3]) << 24);
}

inline uint16_t u16le(const std::vector<uint8_t>& b, size_t at) {
    return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace wavdetail

// Parse a RIFF/WAVE container holding PCM-16 or IEEE float-32 samples,
// 1 or 2 channels. Stereo is averaged to mono; 16-bit samples are scaled
// by 1/32768.
inline PcmSignal load_wav(const std::vector<uint8_t>& bytes) {
    using namespace wavdetail;
    if (bytes.size() < 12) throw ParseError("malformed header: file too small", 0);
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw ParseError("malformed header: expected RIFF", 0);
    if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw ParseError("malformed header: expected WAVE", 8);

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    size_t data_at = 0, data_len = 0;

    size_t at = 12;
    while (at + 8 <= bytes.size()) {
        char id[5] = {0};
        std::memcpy(id, bytes.data() + at, 4);
        const uint32_t len = u32le(bytes, at + 4);
        const size_t body = at + 8;
        if (body + len > bytes.size()) {
            if (std::memcmp(id, "data", 4) == 0)
                throw ParseError("truncated data chunk", at);
            throw ParseError(std::string("chunk '") + id + "' overruns file", at);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw ParseError("malformed header: fmt chunk too small", at);
            format = u16le(bytes, body);
            channels = u16le(bytes, body + 2);
            sample_rate = u32le(bytes, body + 4);
            bits = u16le(bytes, body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_at = body;
            data_len = len;
        }
        at = body + len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt) throw ParseError("malformed header: missing fmt chunk", 12);
    if (data_at == 0) throw ParseError("malformed header: missing data chunk", 12);
    if (channels != 1 && channels != 2)
        throw ParseError("unsupported codec: channels must be 1 or 2", data_at);
    if (sample_rate == 0) throw ParseError("malformed header: zero sample rate", data_at);

    const bool pcm16 = (format == 1 && bits == 16);
    const bool f32 = (format == 3 && bits == 32);
    if (!pcm16 && !f32) throw ParseError("unsupported codec: need PCM-16 or float-32", data_at);

    const size_t bytes_per = (pcm16 ? 2u : 4u) * channels;
    if (data_len % bytes_per != 0) throw ParseError("truncated data chunk", data_at + data_len);
    const size_t frames = data_len / bytes_per;

    PcmSignal sig;
    sig.sample_rate = static_cast<int>(sample_rate);
    sig.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        float acc = 0.0f;
        for (uint16_t ch = 0; ch < channels; ++ch) {
            const size_t p = data_at + (i * channels + ch) * (pcm16 ? 2 : 4);
            if (pcm16) {
                const int16_t s = static_cast<int16_t>(bytes[p] | (bytes[p + 1] << 8));
                acc += static_cast<float>(s) / 32768.0f;
            } else {
                uint32_t u = u32le(bytes, p);
                float f;
                std::memcpy(&f, &u, 4);
                acc += f;
            }
        }
        sig.samples[i] = acc / static_cast<float>(channels);
    }
    return sig;
}

inline PcmSignal load_wav_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open wav: " + path);
    std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return load_wav(bytes);
}

// PCM-16 LE mono writer.
inline std::vector<uint8_t> encode_wav_pcm16(const PcmSignal& sig) {
    const uint32_t n = static_cast<uint32_t>(sig.samples.size());
    const uint32_t data_len = n * 2;
    std::vector<uint8_t> out;
    out.reserve(44 + data_len);
    auto put32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    };
    auto put16 = [&](uint16_t v) {
        out.push_back(static_cast<uint8_t>(v & 0xff));
        out.push_back(static_cast<uint8_t>(v >> 8));
    };
    auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
    tag("RIFF");
    put32(36 + data_len);
    tag("WAVE");
    tag("fmt ");
    put32(16);
    put16(1);  // PCM
    put16(1);  // mono
    put32(static_cast<uint32_t>(sig.sample_rate));
    put32(static_cast<uint32_t>(sig.sample_rate) * 2);
    put16(2);
    put16(16);
    tag("data");
    put32(data_len);
    for (uint32_t i = 0; i < n; ++i) {
        float x = sig.samples[i];
        if (x > 1.0f) x = 1.0f;
        if (x < -1.0f) x = -1.0f;
        const int v = static_cast<int>(std::lround(x * 32767.0f));
        put16(static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
    return out;
}

inline void save_wav_pcm16(const std::string& path, const PcmSignal& sig) {
    const auto bytes = encode_wav_pcm16(sig);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write wav: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace sfwm

#endif
