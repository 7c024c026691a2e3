#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "koopid/errors.hpp"

namespace koopid {

using Vec = std::vector<double>;

// Dense row-major matrix. Sizes here are small (tens to low hundreds), so a
// plain contiguous buffer with hand-written kernels is all that is needed.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    std::size_t size() const { return a.size(); }
};

inline Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline void check_matvec(const Mat& m, const Vec& x, const char* who) {
    if (m.cols != x.size())
        fail(ErrorCode::Shape, std::string(who) + ": matrix is " + std::to_string(m.rows) + "x" +
                                   std::to_string(m.cols) + " but vector has length " +
                                   std::to_string(x.size()));
}

// y = M x
inline void matvec_into(const Mat& m, const Vec& x, Vec& y) {
    check_matvec(m, x, "matvec");
    y.assign(m.rows, 0.0);
    const double* row = m.a.data();
    for (std::size_t i = 0; i < m.rows; ++i, row += m.cols) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

inline Vec matvec(const Mat& m, const Vec& x) {
    Vec y;
    matvec_into(m, x, y);
    return y;
}

// y += M^T x  (used by reverse-mode passes)
inline void matvec_t_acc(const Mat& m, const Vec& x, Vec& y) {
    if (m.rows != x.size() || m.cols != y.size())
        fail(ErrorCode::Shape, "matvec_t_acc: incompatible shapes");
    const double* row = m.a.data();
    for (std::size_t i = 0; i < m.rows; ++i, row += m.cols) {
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * xi;
    }
}

// M += u v^T
inline void add_outer(Mat& m, const Vec& u, const Vec& v) {
    if (m.rows != u.size() || m.cols != v.size())
        fail(ErrorCode::Shape, "add_outer: incompatible shapes");
    double* row = m.a.data();
    for (std::size_t i = 0; i < m.rows; ++i, row += m.cols) {
        const double ui = u[i];
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += ui * v[j];
    }
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) fail(ErrorCode::Shape, "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) fail(ErrorCode::Shape, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2_sq(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

inline bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

}  // namespace koopid
