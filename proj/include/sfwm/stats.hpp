#ifndef SFWM_STATS_HPP
#define SFWM_STATS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sfwm {

// Midrank-tied ranks.
inline std::vector<double> ranks_with_ties(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation with midrank tie handling.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks_with_ties(x), ranks_with_ties(y));
}

inline double mean_of(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double s = 0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double stddev_of(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean_of(x);
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace sfwm

#endif
