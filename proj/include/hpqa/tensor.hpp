#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hpqa/error.hpp"

namespace hpqa {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model state lives in these.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw RuntimeFault("dot: dimension mismatch");
    return dot(a.data(), b.data(), a.size());
}

inline double norm2(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }
inline double norm2(const Vec& a) { return norm2(a.data(), a.size()); }

inline void normalize_in_place(double* a, std::size_t n) {
    double nr = norm2(a, n);
    if (nr < 1e-300) throw RuntimeFault("normalize: zero vector");
    for (std::size_t i = 0; i < n; ++i) a[i] /= nr;
}

inline void normalize_in_place(Vec& a) { normalize_in_place(a.data(), a.size()); }

// Cosine distance 1 - cos(u, v), range [0, 2]. Errors on zero vectors.
inline double cosine_distance(const double* u, const double* v, std::size_t n) {
    double nu = norm2(u, n);
    double nv = norm2(v, n);
    if (nu < 1e-300 || nv < 1e-300) throw RuntimeFault("cosine_distance: zero vector");
    return 1.0 - dot(u, v, n) / (nu * nv);
}

inline double cosine_distance(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw RuntimeFault("cosine_distance: dimension mismatch");
    return cosine_distance(u.data(), v.data(), u.size());
}

// d(q, k) differentiated in k; q is held fixed.
inline Vec cosine_distance_grad_wrt_second(const Vec& q, const Vec& k) {
    std::size_t n = q.size();
    double nq = norm2(q);
    double nk = norm2(k);
    if (nq < 1e-300 || nk < 1e-300) throw RuntimeFault("cosine_distance_grad: zero vector");
    double qk = dot(q, k);
    Vec g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = -q[i] / (nq * nk) + qk * k[i] / (nq * nk * nk * nk);
    return g;
}

}  // namespace hpqa
