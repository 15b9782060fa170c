#ifndef SFWM_GRIDIO_HPP
#define SFWM_GRIDIO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"

namespace sfwm {

// Binary grid container shared by spectrograms and piano rolls:
//   "SPEC" | u32 version | u32 T | u32 M | f64 frame_shift | T*M f32 LE row-major

struct GridFile {
    Mat<float> frames;
    double frame_shift_s = 0.0;
};

inline void write_grid(const std::string& path, const Mat<float>& frames, double frame_shift_s) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write grid: " + path);
    f.write("SPEC", 4);
    auto put32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    put32(1);
    put32(static_cast<uint32_t>(frames.rows));
    put32(static_cast<uint32_t>(frames.cols));
    f.write(reinterpret_cast<const char*>(&frame_shift_s), 8);
    f.write(reinterpret_cast<const char*>(frames.v.data()),
            static_cast<std::streamsize>(frames.v.size() * 4));
}

inline GridFile read_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DependencyError("missing grid file: " + path);
    std::vector<uint8_t> b{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    if (b.size() < 24 || std::memcmp(b.data(), "SPEC", 4) != 0)
        throw ParseError("bad grid magic in " + path, 0);
    uint32_t version, t, m;
    std::memcpy(&version, b.data() + 4, 4);
    std::memcpy(&t, b.data() + 8, 4);
    std::memcpy(&m, b.data() + 12, 4);
    if (version != 1) throw ParseError("unsupported grid version in " + path, 4);
    GridFile g;
    std::memcpy(&g.frame_shift_s, b.data() + 16, 8);
    const size_t need = 24 + static_cast<size_t>(t) * m * 4;
    if (b.size() != need) throw ParseError("grid payload size mismatch in " + path, 24);
    g.frames = Mat<float>(t, m);
    std::memcpy(g.frames.v.data(), b.data() + 24, static_cast<size_t>(t) * m * 4);
    return g;
}

// 8-bit grayscale preview; x axis = time, y axis = feature with feature 0 at
// the bottom. Values mapped from [lo, hi].
inline void write_pgm(const std::string& path, const Mat<float>& frames, float lo = -1.0f,
                      float hi = 1.0f) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write pgm: " + path);
    f << "P5\n" << frames.rows << " " << frames.cols << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(frames.rows));
    for (int64_t m = frames.cols - 1; m >= 0; --m) {
        for (int64_t t = 0; t < frames.rows; ++t) {
            float x = (frames.at(t, m) - lo) / (hi - lo);
            if (x < 0.0f) x = 0.0f;
            if (x > 1.0f) x = 1.0f;
            row[static_cast<size_t>(t)] = static_cast<uint8_t>(std::lround(x * 255.0f));
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

}  // namespace sfwm

#endif
