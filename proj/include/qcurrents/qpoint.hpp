#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qcurrents/assignment.hpp"
#include "qcurrents/linalg.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

/// Unordered Q-tuple of points in R^n with multiplicity, kept in canonical
/// lexicographic order so that multiset equality is plain equality and the
/// representation is hashable/orderable. Immutable after construction.
template <class T>
class QPointT {
public:
    QPointT(int n, std::vector<Vec<T>> points) : n_(n), pts_(std::move(points)) {
        for (const auto& p : pts_)
            if (static_cast<int>(p.size()) != n_)
                throw std::invalid_argument("QPoint: wrong ambient dimension");
        if (pts_.empty()) throw std::invalid_argument("QPoint: Q must be positive");
        canonicalize();
    }

    static QPointT constant(int q, const Vec<T>& p) {
        return QPointT(static_cast<int>(p.size()), std::vector<Vec<T>>(q, p));
    }

    int q() const { return static_cast<int>(pts_.size()); }
    int ambient() const { return n_; }
    const std::vector<Vec<T>>& points() const { return pts_; }
    const Vec<T>& operator[](int i) const { return pts_[i]; }

    bool operator==(const QPointT& o) const { return n_ == o.n_ && pts_ == o.pts_; }
    bool operator!=(const QPointT& o) const { return !(*this == o); }

    /// Sum of two multisets (Q = q1 + q2).
    QPointT operator+(const QPointT& o) const {
        assert(n_ == o.n_);
        auto pts = pts_;
        pts.insert(pts.end(), o.pts_.begin(), o.pts_.end());
        return QPointT(n_, std::move(pts));
    }

    QPointT translated(const Vec<T>& v) const {
        auto pts = pts_;
        for (auto& p : pts) p = vec_add(p, v);
        return QPointT(n_, std::move(pts));
    }

private:
    void canonicalize() { std::sort(pts_.begin(), pts_.end()); }

    int n_;
    std::vector<Vec<T>> pts_;
};

using QPoint = QPointT<double>;
using QPointR = QPointT<Rat>;

inline QPoint to_double(const QPointR& s) {
    std::vector<VecD> pts;
    pts.reserve(s.q());
    for (const auto& p : s.points()) pts.push_back(to_double(p));
    return QPoint(s.ambient(), std::move(pts));
}

/// Witness for the matching metric: a bijection of sheet slots together
/// with its cost (sum of squared pair distances).
struct Matching {
    std::vector<int> permutation;  // i -> sigma(i)
    double cost = 0;               // sum_i |s_i - t_{sigma(i)}|^2
};

namespace detail {
inline double pair_cost(const std::vector<VecD>& s, const std::vector<VecD>& t,
                        const std::vector<int>& perm) {
    double c = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto d = vec_sub(s[i], t[perm[i]]);
        c += dot(d, d);
    }
    return c;
}
}  // namespace detail

/// The matching metric: min over bijections sigma of
/// sqrt(sum_i |s_i - t_{sigma(i)}|^2), computed by optimal assignment on
/// the squared-distance cost matrix. The witness attains the value.
template <class T>
std::pair<double, Matching> g_metric_with_witness(const QPointT<T>& s, const QPointT<T>& t) {
    if (s.q() != t.q()) throw std::invalid_argument("g_metric: cardinality mismatch");
    if (s.ambient() != t.ambient()) throw std::invalid_argument("g_metric: dimension mismatch");
    const int q = s.q();

    std::vector<VecD> sp, tp;
    sp.reserve(q);
    tp.reserve(q);
    for (int i = 0; i < q; ++i) {
        if constexpr (std::is_same_v<T, double>) {
            sp.push_back(s[i]);
            tp.push_back(t[i]);
        } else {
            sp.push_back(to_double(s[i]));
            tp.push_back(to_double(t[i]));
        }
    }

    std::vector<std::vector<double>> cost(q, std::vector<double>(q));
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            auto d = vec_sub(sp[i], tp[j]);
            cost[i][j] = dot(d, d);
        }

    Matching m;
    m.permutation = solve_assignment(cost);
    m.cost = detail::pair_cost(sp, tp, m.permutation);
    return {std::sqrt(m.cost), m};
}

template <class T>
double g_metric(const QPointT<T>& s, const QPointT<T>& t) {
    return g_metric_with_witness(s, t).first;
}

/// Arithmetic mean of the Q points, with multiplicity.
template <class T>
Vec<T> eta(const QPointT<T>& s) {
    Vec<T> m(s.ambient(), T{});
    for (const auto& p : s.points()) m = vec_add(m, p);
    T inv = T(1) / T(s.q());
    return vec_scale(inv, m);
}

/// Max pairwise distance d(S) = max_{i,j} |s_i - s_j|.
template <class T>
double diameter(const QPointT<T>& s) {
    double d = 0;
    std::vector<VecD> pts;
    for (const auto& p : s.points()) {
        if constexpr (std::is_same_v<T, double>) pts.push_back(p);
        else pts.push_back(to_double(p));
    }
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            d = std::max(d, dist(pts[i], pts[j]));
    return d;
}

/// |S| = G(S, Q[[0]]).
template <class T>
double qpoint_norm(const QPointT<T>& s) {
    double acc = 0;
    for (const auto& p : s.points()) {
        if constexpr (std::is_same_v<T, double>) acc += dot(p, p);
        else { auto d = to_double(p); acc += dot(d, d); }
    }
    return std::sqrt(acc);
}

/// Gap clustering: points joined by chains of steps <= 4h share a part.
/// The parts then satisfy d(T_j) <= 4*Q*h and pairwise separation > 4h.
template <class T>
std::vector<QPointT<T>> decompose_by_gap(const QPointT<T>& s, double h) {
    if (!(h > 0)) throw std::invalid_argument("decompose_by_gap: h must be positive");
    const int q = s.q();
    std::vector<VecD> pts;
    for (const auto& p : s.points()) {
        if constexpr (std::is_same_v<T, double>) pts.push_back(p);
        else pts.push_back(to_double(p));
    }

    std::vector<int> part(q, -1);
    int nparts = 0;
    for (int seed = 0; seed < q; ++seed) {
        if (part[seed] >= 0) continue;
        std::vector<int> stack{seed};
        part[seed] = nparts;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            for (int j = 0; j < q; ++j) {
                if (part[j] >= 0) continue;
                if (dist(pts[i], pts[j]) <= 4 * h) {
                    part[j] = nparts;
                    stack.push_back(j);
                }
            }
        }
        ++nparts;
    }

    std::vector<std::vector<Vec<T>>> groups(nparts);
    for (int i = 0; i < q; ++i) groups[part[i]].push_back(s[i]);
    std::vector<QPointT<T>> out;
    out.reserve(nparts);
    for (auto& g : groups) out.emplace_back(s.ambient(), std::move(g));
    return out;
}

}  // namespace qcurrents
