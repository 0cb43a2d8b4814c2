#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "qcurrents/rational.hpp"

namespace qcurrents {

template <class T>
using Vec = std::vector<T>;

using VecD = Vec<double>;
using VecR = Vec<Rat>;

template <class T>
Vec<T> vec_add(const Vec<T>& a, const Vec<T>& b) {
    assert(a.size() == b.size());
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

template <class T>
Vec<T> vec_sub(const Vec<T>& a, const Vec<T>& b) {
    assert(a.size() == b.size());
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

template <class T>
Vec<T> vec_scale(const T& s, const Vec<T>& a) {
    Vec<T> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
}

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
    assert(a.size() == b.size());
    T s{};
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const VecD& a) { return std::sqrt(dot(a, a)); }

inline double dist(const VecD& a, const VecD& b) { return norm(vec_sub(a, b)); }

inline VecD to_double(const VecR& a) {
    VecD r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = to_double(a[i]);
    return r;
}

/// Dense row-major matrix over double or Rat. Sizes here are tiny
/// (ambient dimensions), so no cleverness is attempted.
template <class T>
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, T{}) {}

    T& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    Vec<T> column(std::size_t j) const {
        Vec<T> c(rows);
        for (std::size_t i = 0; i < rows; ++i) c[i] = (*this)(i, j);
        return c;
    }
    Vec<T> row(std::size_t i) const {
        Vec<T> r(cols);
        for (std::size_t j = 0; j < cols; ++j) r[j] = (*this)(i, j);
        return r;
    }

    Vec<T> mul(const Vec<T>& x) const {
        assert(x.size() == cols);
        Vec<T> y(rows, T{});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) y[i] += (*this)(i, j) * x[j];
        return y;
    }

    Mat mul(const Mat& b) const {
        assert(cols == b.rows);
        Mat c(rows, b.cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t k = 0; k < cols; ++k) {
                const T& v = (*this)(i, k);
                if (v == T{}) continue;
                for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += v * b(k, j);
            }
        return c;
    }

    Mat transposed() const {
        Mat t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }
};

using MatD = Mat<double>;
using MatR = Mat<Rat>;

inline MatD to_double(const MatR& m) {
    MatD d(m.rows, m.cols);
    for (std::size_t i = 0; i < m.a.size(); ++i) d.a[i] = to_double(m.a[i]);
    return d;
}

namespace detail {
template <class T>
bool pivot_nonzero(const T& x) {
    return x != T{};
}
inline bool pivot_nonzero(const double& x) { return x != 0.0; }

// Pivot selection: largest magnitude for double, first nonzero for Rat.
template <class T>
std::size_t pick_pivot(const Mat<T>& m, std::size_t col, std::size_t from) {
    if constexpr (std::is_same_v<T, double>) {
        std::size_t best = from;
        double best_v = std::abs(m(from, col));
        for (std::size_t i = from + 1; i < m.rows; ++i)
            if (std::abs(m(i, col)) > best_v) { best_v = std::abs(m(i, col)); best = i; }
        return best;
    } else {
        for (std::size_t i = from; i < m.rows; ++i)
            if (m(i, col) != T{}) return i;
        return from;
    }
}
}  // namespace detail

/// Determinant by Gaussian elimination (exact for Rat).
template <class T>
T det(Mat<T> m) {
    assert(m.rows == m.cols);
    const std::size_t n = m.rows;
    T d(1);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = detail::pick_pivot(m, k, k);
        if (!detail::pivot_nonzero(m(p, k))) return T{};
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(p, j), m(k, j));
            d = -d;
        }
        d *= m(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            T f = m(i, k) / m(k, k);
            if (f == T{}) continue;
            for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
        }
    }
    return d;
}

/// Rank via row reduction (exact for Rat).
template <class T>
std::size_t rank(Mat<T> m) {
    std::size_t r = 0;
    for (std::size_t c = 0; c < m.cols && r < m.rows; ++c) {
        std::size_t p = detail::pick_pivot(m, c, r);
        if (!detail::pivot_nonzero(m(p, c))) continue;
        if constexpr (std::is_same_v<T, double>) {
            if (std::abs(m(p, c)) < 1e-13) continue;
        }
        if (p != r)
            for (std::size_t j = 0; j < m.cols; ++j) std::swap(m(p, j), m(r, j));
        for (std::size_t i = r + 1; i < m.rows; ++i) {
            T f = m(i, c) / m(r, c);
            for (std::size_t j = c; j < m.cols; ++j) m(i, j) -= f * m(r, j);
        }
        ++r;
    }
    return r;
}

/// Solves m x = rhs for square m. Empty optional when singular.
template <class T>
std::optional<Vec<T>> solve(Mat<T> m, Vec<T> rhs) {
    assert(m.rows == m.cols && rhs.size() == m.rows);
    const std::size_t n = m.rows;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = detail::pick_pivot(m, k, k);
        if (!detail::pivot_nonzero(m(p, k))) return std::nullopt;
        if constexpr (std::is_same_v<T, double>) {
            if (std::abs(m(p, k)) < 1e-300) return std::nullopt;
        }
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(p, j), m(k, j));
            std::swap(rhs[p], rhs[k]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            T f = m(i, k) / m(k, k);
            if (f == T{}) continue;
            for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
            rhs[i] -= f * rhs[k];
        }
    }
    Vec<T> x(n, T{});
    for (std::size_t i = n; i-- > 0;) {
        T s = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x[j];
        x[i] = s / m(i, i);
    }
    return x;
}

/// Reduced row echelon form; returns pivot column indices. Exact for Rat.
template <class T>
std::vector<std::size_t> rref(Mat<T>& m) {
    std::vector<std::size_t> pivots;
    std::size_t r = 0;
    for (std::size_t c = 0; c < m.cols && r < m.rows; ++c) {
        std::size_t p = detail::pick_pivot(m, c, r);
        if (!detail::pivot_nonzero(m(p, c))) continue;
        if (p != r)
            for (std::size_t j = 0; j < m.cols; ++j) std::swap(m(p, j), m(r, j));
        T inv = m(r, c);
        for (std::size_t j = 0; j < m.cols; ++j) m(r, j) = m(r, j) / inv;
        for (std::size_t i = 0; i < m.rows; ++i) {
            if (i == r) continue;
            T f = m(i, c);
            if (f == T{}) continue;
            for (std::size_t j = 0; j < m.cols; ++j) m(i, j) -= f * m(r, j);
        }
        pivots.push_back(c);
        ++r;
    }
    return pivots;
}

/// Hilbert-Schmidt (Frobenius) norm.
inline double frobenius(const MatD& m) {
    double s = 0;
    for (double v : m.a) s += v * v;
    return std::sqrt(s);
}

/// Largest eigenvalue of a small symmetric matrix by cyclic Jacobi sweeps.
inline double sym_eig_max(MatD s) {
    assert(s.rows == s.cols);
    const std::size_t n = s.rows;
    if (n == 1) return s(0, 0);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (s(p, q) == 0.0) continue;
                double theta = (s(q, q) - s(p, p)) / (2 * s(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1));
                double c = 1 / std::sqrt(t * t + 1), sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double skp = s(k, p), skq = s(k, q);
                    s(k, p) = c * skp - sn * skq;
                    s(k, q) = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double spk = s(p, k), sqk = s(q, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(q, k) = sn * spk + c * sqk;
                }
            }
    }
    double mx = s(0, 0);
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, s(i, i));
    return mx;
}

/// Spectral norm of a (possibly rectangular) matrix.
inline double operator_norm(const MatD& m) {
    MatD g = m.transposed().mul(m);
    double l = sym_eig_max(g);
    return std::sqrt(std::max(0.0, l));
}

/// All k-element subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    if (k > n) return out;
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        out.push_back(idx);
        std::size_t i = k;
        while (i-- > 0) {
            if (idx[i] != i + n - k) {
                ++idx[i];
                for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
                break;
            }
            if (i == 0) return out;
        }
    }
}

/// Sub-matrix with the given rows and columns.
template <class T>
Mat<T> submatrix(const Mat<T>& m, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& cols) {
    Mat<T> s(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) s(i, j) = m(rows[i], cols[j]);
    return s;
}

/// sqrt(det(E^T E)) for the N x m matrix of simplex edge vectors.
inline double gram_volume(const MatD& edges) {
    MatD g = edges.transposed().mul(edges);
    double d = det(g);
    return std::sqrt(std::max(0.0, d));
}

inline double factorial(std::size_t k) {
    double f = 1;
    for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
    return f;
}

}  // namespace qcurrents
