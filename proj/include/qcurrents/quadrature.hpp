#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "qcurrents/linalg.hpp"

namespace qcurrents {

struct QuadNode {
    VecD x;
    double w;
};

/// Gauss-Legendre nodes/weights on [-1,1], Newton iteration on P_n.
inline void gauss_legendre(int n, VecD& nodes, VecD& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = 0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * x * p1 - j * p2) / (j + 1);
            }
            pp = n * (x * p0 - p1) / (x * x - 1);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = 2.0 / ((1 - x * x) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
}

inline const std::pair<VecD, VecD>& gauss_legendre_cached(int n) {
    static std::map<int, std::pair<VecD, VecD>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::pair<VecD, VecD> nw;
        gauss_legendre(n, nw.first, nw.second);
        it = cache.emplace(n, std::move(nw)).first;
    }
    return it->second;
}

/// Axis-aligned box [lo_1,hi_1] x ... x [lo_m,hi_m].
struct Box {
    VecD lo, hi;
    int dim() const { return static_cast<int>(lo.size()); }
    double volume() const {
        double v = 1;
        for (int i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }
    bool contains(const VecD& x, double pad = 0.0) const {
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lo[i] - pad || x[i] > hi[i] + pad) return false;
        return true;
    }
};

/// Integration domain: a box or a centered ball (dimension 1 or 2).
struct Domain {
    enum class Kind { BoxKind, BallKind };
    Kind kind = Kind::BoxKind;
    Box box;                 // BoxKind
    VecD center;             // BallKind
    double radius = 1.0;     // BallKind

    static Domain make_box(Box b) {
        Domain d;
        d.kind = Kind::BoxKind;
        d.box = std::move(b);
        return d;
    }
    static Domain make_ball(VecD c, double r) {
        Domain d;
        d.kind = Kind::BallKind;
        d.center = std::move(c);
        d.radius = r;
        return d;
    }
    int dim() const { return kind == Kind::BoxKind ? box.dim() : static_cast<int>(center.size()); }

    Box bounding_box() const {
        if (kind == Kind::BoxKind) return box;
        Box b;
        b.lo = center;
        b.hi = center;
        for (int i = 0; i < dim(); ++i) {
            b.lo[i] -= radius;
            b.hi[i] += radius;
        }
        return b;
    }
    bool contains(const VecD& x, double pad = 0.0) const {
        if (kind == Kind::BoxKind) return box.contains(x, pad);
        return dist(x, center) <= radius + pad;
    }
};

/// Tensor-product Gauss rule on a box, `order` nodes per axis.
inline std::vector<QuadNode> box_rule(const Box& box, int order) {
    const auto& [gx, gw] = gauss_legendre_cached(order);
    const int m = box.dim();
    std::vector<QuadNode> nodes;
    std::vector<int> idx(m, 0);
    nodes.reserve(static_cast<std::size_t>(std::pow(order, m)));
    while (true) {
        QuadNode qn;
        qn.x.resize(m);
        qn.w = 1;
        for (int i = 0; i < m; ++i) {
            double half = 0.5 * (box.hi[i] - box.lo[i]);
            qn.x[i] = box.lo[i] + half * (gx[idx[i]] + 1.0);
            qn.w *= gw[idx[i]] * half;
        }
        nodes.push_back(std::move(qn));
        int k = 0;
        while (k < m && ++idx[k] == order) idx[k++] = 0;
        if (k == m) break;
    }
    return nodes;
}

/// Gauss(r) x equispaced(theta) rule on a disk; the angular trapezoid rule
/// is spectrally accurate for the periodic direction.
inline std::vector<QuadNode> disk_rule(const VecD& center, double radius, int order) {
    const auto& [gx, gw] = gauss_legendre_cached(order);
    const int ntheta = 4 * order;
    std::vector<QuadNode> nodes;
    nodes.reserve(static_cast<std::size_t>(order) * ntheta);
    for (int i = 0; i < order; ++i) {
        double r = 0.5 * radius * (gx[i] + 1.0);
        double wr = 0.5 * radius * gw[i] * r;
        for (int j = 0; j < ntheta; ++j) {
            double th = 2 * M_PI * j / ntheta;
            QuadNode qn;
            qn.x = {center[0] + r * std::cos(th), center[1] + r * std::sin(th)};
            qn.w = wr * (2 * M_PI / ntheta);
            nodes.push_back(std::move(qn));
        }
    }
    return nodes;
}

inline std::vector<QuadNode> domain_rule(const Domain& d, int order) {
    if (d.kind == Domain::Kind::BoxKind) return box_rule(d.box, order);
    if (d.dim() == 1)
        return box_rule(Box{{d.center[0] - d.radius}, {d.center[0] + d.radius}}, order);
    if (d.dim() == 2) return disk_rule(d.center, d.radius, order);
    throw std::invalid_argument("domain_rule: balls only in dimension 1 or 2");
}

inline double integrate(const std::vector<QuadNode>& rule,
                        const std::function<double(const VecD&)>& f) {
    double acc = 0;
    for (const auto& qn : rule) acc += qn.w * f(qn.x);
    return acc;
}

namespace detail {
inline std::vector<std::vector<int>> multi_indices(int nvars, int total) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(nvars, 0);
    std::function<void(int, int)> rec = [&](int pos, int rem) {
        if (pos == nvars - 1) {
            cur[pos] = rem;
            out.push_back(cur);
            return;
        }
        for (int k = 0; k <= rem; ++k) {
            cur[pos] = k;
            rec(pos + 1, rem - k);
        }
    };
    if (nvars == 0) return out;
    rec(0, total);
    return out;
}
}  // namespace detail

/// Grundmann-Moller rule of index s on the unit n-simplex
/// {x >= 0, sum x <= 1}; exact for polynomials of degree 2s+1.
inline std::vector<QuadNode> grundmann_moller(int n, int s) {
    const int d = 2 * s + 1;
    std::vector<QuadNode> nodes;
    double vol = 1.0 / factorial(n);
    double wsum_check = 0;
    for (int i = 0; i <= s; ++i) {
        double w = (i % 2 ? -1.0 : 1.0) * std::pow(2.0, -2.0 * s) *
                   std::pow(static_cast<double>(d + n - 2 * i), d) /
                   (factorial(i) * factorial(d + n - i));
        for (const auto& beta : detail::multi_indices(n + 1, s - i)) {
            QuadNode qn;
            qn.x.resize(n);
            double denom = d + n - 2 * i;
            for (int k = 0; k < n; ++k) qn.x[k] = (2.0 * beta[k + 1] + 1.0) / denom;
            qn.w = w;
            wsum_check += w;
            nodes.push_back(std::move(qn));
        }
    }
    // Normalize so constants integrate to the simplex volume.
    double scale = vol / wsum_check;
    for (auto& qn : nodes) qn.w *= scale;
    return nodes;
}

inline const std::vector<QuadNode>& grundmann_moller_cached(int n, int s) {
    static std::map<std::pair<int, int>, std::vector<QuadNode>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_pair(n, s);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, grundmann_moller(n, s)).first;
    return it->second;
}

/// Simplex rule exact for the given polynomial degree.
inline const std::vector<QuadNode>& simplex_rule(int n, int degree) {
    int s = std::max(0, (degree - 1 + 1) / 2);  // 2s+1 >= degree
    return grundmann_moller_cached(n, s);
}

}  // namespace qcurrents
