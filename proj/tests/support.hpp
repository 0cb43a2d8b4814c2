#pragma once

// Shared helpers for the test suites: independent brute-force oracles and
// deterministic random generators. Everything here must stay independent
// of the implementation paths it is used to check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qcurrents/mesh.hpp"
#include "qcurrents/paqmap.hpp"
#include "qcurrents/qpoint.hpp"

namespace qctest {

using namespace qcurrents;

/// Brute-force matching metric: min over all Q! permutations, with the
/// same summation order as the production path.
template <class T>
inline double brute_force_g(const QPointT<T>& s, const QPointT<T>& t) {
    const int q = s.q();
    std::vector<VecD> sp, tp;
    for (int i = 0; i < q; ++i) {
        if constexpr (std::is_same_v<T, double>) {
            sp.push_back(s[i]);
            tp.push_back(t[i]);
        } else {
            sp.push_back(to_double(s[i]));
            tp.push_back(to_double(t[i]));
        }
    }
    std::vector<int> perm(q);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0;
        for (int i = 0; i < q; ++i) {
            auto d = vec_sub(sp[i], tp[perm[i]]);
            c += dot(d, d);
        }
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best);
}

inline QPoint random_qpoint(std::mt19937& rng, int q, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<VecD> pts;
    for (int i = 0; i < q; ++i) {
        VecD p(n);
        for (int c = 0; c < n; ++c) p[c] = u(rng);
        pts.push_back(std::move(p));
    }
    return QPoint(n, std::move(pts));
}

inline Rat random_rat(std::mt19937& rng, int num_range = 8, int den_max = 6) {
    std::uniform_int_distribution<int> un(-num_range, num_range);
    std::uniform_int_distribution<int> ud(1, den_max);
    return Rat(un(rng), ud(rng));
}

/// Random compatible PAQMap: Q global piecewise-affine sheets from random
/// rational vertex values (always face-compatible), with optional
/// duplicated sheets to exercise multiplicity handling.
inline PAQMap random_paqmap(std::mt19937& rng, const SimplicialMesh& mesh, int q, int n,
                            bool allow_duplicates = true) {
    std::vector<std::vector<VecR>> vertex_values(q);
    for (int j = 0; j < q; ++j) {
        vertex_values[j].resize(mesh.vertices.size());
        for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
            VecR val(n);
            for (int c = 0; c < n; ++c) val[c] = random_rat(rng);
            vertex_values[j][v] = std::move(val);
        }
    }
    if (allow_duplicates && q >= 2) {
        std::uniform_int_distribution<int> coin(0, 3);
        if (coin(rng) == 0) vertex_values[q - 1] = vertex_values[0];
    }
    return pa_from_vertex_values(mesh, vertex_values);
}

struct SlopeFit {
    double slope = 0;
    double r2 = 0;
};

/// Least-squares slope of log|y| against log(x), with R^2.
inline SlopeFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (std::abs(ys[i]) < 1e-300) continue;
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(std::abs(ys[i])));
    }
    SlopeFit fit;
    const std::size_t n = lx.size();
    if (n < 2) return fit;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

}  // namespace qctest
