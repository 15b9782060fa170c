#ifndef SFWM_MAT_HPP
#define SFWM_MAT_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "sfwm/common.hpp"

namespace sfwm {

// Dense row-major matrix. Rank-1 data travels as 1xN, scalars as 1x1.
template <typename T>
struct Mat {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int64_t r, int64_t c, T fill = T(0)) : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

    static Mat scalar(T x) {
        Mat m(1, 1);
        m.v[0] = x;
        return m;
    }

    T& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    const T& at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
    T* row(int64_t r) { return v.data() + r * cols; }
    const T* row(int64_t r) const { return v.data() + r * cols; }
    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

template <typename T>
bool all_finite(const Mat<T>& m) {
    for (const T& x : m.v) {
        if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
}

// C = A * B
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.rows) throw NumericError("matmul: inner dimension mismatch");
    Mat<T> c(a.rows, b.cols);
    for (int64_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int64_t k = 0; k < a.cols; ++k) {
            const T aik = arow[k];
            if (aik == T(0)) continue;
            const T* brow = b.row(k);
            for (int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C += A * B^T  (rows of A dotted with rows of B)
template <typename T>
void gemm_nt_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw NumericError("gemm_nt_acc: shape mismatch");
    for (int64_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int64_t j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (int64_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

// C += A^T * B  (columns of A against rows of B)
template <typename T>
void gemm_tn_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw NumericError("gemm_tn_acc: shape mismatch");
    for (int64_t k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (int64_t i = 0; i < a.cols; ++i) {
            const T aki = arow[i];
            if (aki == T(0)) continue;
            T* crow = c.row(i);
            for (int64_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

template <typename T>
Mat<T> transposed(const Mat<T>& a) {
    Mat<T> t(a.cols, a.rows);
    for (int64_t i = 0; i < a.rows; ++i)
        for (int64_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

template <typename T>
void add_inplace(Mat<T>& a, const Mat<T>& b) {
    if (!a.same_shape(b)) throw NumericError("add_inplace: shape mismatch");
    for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

template <typename T>
double mse(const Mat<T>& a, const Mat<T>& b) {
    if (!a.same_shape(b)) throw NumericError("mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        acc += d * d;
    }
    return a.v.empty() ? 0.0 : acc / static_cast<double>(a.v.size());
}

template <typename T>
double rms(const Mat<T>& a) {
    double acc = 0.0;
    for (const T& x : a.v) acc += static_cast<double>(x) * static_cast<double>(x);
    return a.v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(a.v.size()));
}

// Rows [r0, r1) as a new matrix.
template <typename T>
Mat<T> take_rows(const Mat<T>& a, int64_t r0, int64_t r1) {
    if (r0 < 0 || r1 > a.rows || r0 > r1) throw NumericError("take_rows: bad range");
    Mat<T> out(r1 - r0, a.cols);
    for (int64_t i = r0; i < r1; ++i)
        for (int64_t j = 0; j < a.cols; ++j) out.at(i - r0, j) = a.at(i, j);
    return out;
}

template <typename T>
Mat<T> vstack(const Mat<T>& a, const Mat<T>& b) {
    if (a.rows == 0) return b;
    if (b.rows == 0) return a;
    if (a.cols != b.cols) throw NumericError("vstack: column mismatch");
    Mat<T> out(a.rows + b.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

}  // namespace sfwm

#endif
