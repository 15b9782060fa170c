#ifndef SFWM_RNG_HPP
#define SFWM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "sfwm/mat.hpp"

namespace sfwm {

// Deterministic random source. mt19937_64 has a standard-mandated output
// sequence, and normals come from Box-Muller over the uniform stream, so a
// seed pins the entire draw sequence on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t index(uint64_t n) { return n == 0 ? 0 : eng_() % n; }

    // Standard normal via Box-Muller; the sine partner is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    Mat<T> normal_mat(int64_t rows, int64_t cols, double scale = 1.0) {
        Mat<T> m(rows, cols);
        for (auto& x : m.v) x = static_cast<T>(scale * normal());
        return m;
    }

    template <typename T>
    Mat<T> uniform_mat(int64_t rows, int64_t cols, double lo, double hi) {
        Mat<T> m(rows, cols);
        for (auto& x : m.v) x = static_cast<T>(uniform(lo, hi));
        return m;
    }

    // Derive an independent child stream (e.g. one per episode or trial).
    Rng fork(uint64_t salt) {
        // splitmix64 over (next draw, salt)
        uint64_t z = eng_() + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sfwm

#endif
