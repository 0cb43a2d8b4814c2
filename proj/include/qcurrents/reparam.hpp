#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/analytic.hpp"
#include "qcurrents/current.hpp"
#include "qcurrents/manifold.hpp"
#include "qcurrents/overlay.hpp"
#include "qcurrents/paqmap.hpp"
#include "qcurrents/qpoint.hpp"

namespace qcurrents {

/// Rational frame of an m-plane in R^{m+n}: a point on the plane, m
/// tangent vectors and n vectors spanning the orthogonal complement.
/// Points decompose exactly as p = origin + sum u_k t_k + sum z_l k_l.
struct PlaneFrame {
    int m = 0, n = 0;
    VecR origin;
    std::vector<VecR> tangent;
    std::vector<VecR> normal;

    int ambient() const { return m + n; }

    static PlaneFrame standard(int m, int n) {
        PlaneFrame fr;
        fr.m = m;
        fr.n = n;
        fr.origin.assign(m + n, Rat(0));
        for (int k = 0; k < m; ++k) {
            VecR t(m + n, Rat(0));
            t[k] = 1;
            fr.tangent.push_back(t);
        }
        for (int l = 0; l < n; ++l) {
            VecR v(m + n, Rat(0));
            v[m + l] = 1;
            fr.normal.push_back(v);
        }
        return fr;
    }

    /// Graph plane of the linear map x -> B x (B rational n x m):
    /// t_k = (e_k, B e_k), k_l = (-B^T e_l, e_l); exactly orthogonal.
    static PlaneFrame from_tilt(const MatR& b) {
        PlaneFrame fr;
        fr.n = static_cast<int>(b.rows);
        fr.m = static_cast<int>(b.cols);
        fr.origin.assign(fr.m + fr.n, Rat(0));
        for (int k = 0; k < fr.m; ++k) {
            VecR t(fr.m + fr.n, Rat(0));
            t[k] = 1;
            for (int l = 0; l < fr.n; ++l) t[fr.m + l] = b(l, k);
            fr.tangent.push_back(t);
        }
        for (int l = 0; l < fr.n; ++l) {
            VecR v(fr.m + fr.n, Rat(0));
            for (int k = 0; k < fr.m; ++k) v[k] = -b(l, k);
            v[fr.m + l] = 1;
            fr.normal.push_back(v);
        }
        return fr;
    }

    PlaneFrame translated(const VecR& q) const {
        PlaneFrame fr = *this;
        fr.origin = vec_add(fr.origin, q);
        return fr;
    }

    VecR point(const VecR& u, const VecR& z) const {
        VecR p = origin;
        for (int k = 0; k < m; ++k) p = vec_add(p, vec_scale(u[k], tangent[k]));
        for (int l = 0; l < n; ++l) p = vec_add(p, vec_scale(z[l], normal[l]));
        return p;
    }

    /// Exact coordinates (u, z) of an ambient point.
    std::pair<VecR, VecR> coords(const VecR& p) const {
        MatR sys(ambient(), ambient());
        for (int r = 0; r < ambient(); ++r) {
            for (int k = 0; k < m; ++k) sys(r, k) = tangent[k][r];
            for (int l = 0; l < n; ++l) sys(r, m + l) = normal[l][r];
        }
        auto sol = solve(sys, vec_sub(p, origin));
        if (!sol) throw std::logic_error("PlaneFrame: degenerate frame");
        VecR u(sol->begin(), sol->begin() + m);
        VecR z(sol->begin() + m, sol->end());
        return {u, z};
    }

    /// Operator-norm distance between the orthogonal projections onto this
    /// plane and onto another; the plane-distance convention.
    double projection_distance(const PlaneFrame& other) const {
        auto proj = [](const PlaneFrame& fr) {
            MatD t(fr.ambient(), fr.m);
            for (int k = 0; k < fr.m; ++k)
                for (int r = 0; r < fr.ambient(); ++r) t(r, k) = to_double(fr.tangent[k][r]);
            MatD g = t.transposed().mul(t);
            MatD ginv(fr.m, fr.m);
            for (int c = 0; c < fr.m; ++c) {
                VecD e(fr.m, 0.0);
                e[c] = 1.0;
                auto col = solve(g, e);
                for (int r = 0; r < fr.m; ++r) ginv(r, c) = (*col)[r];
            }
            return t.mul(ginv).mul(t.transposed());
        };
        MatD d = proj(*this);
        MatD o = proj(other);
        for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] -= o.a[i];
        return operator_norm(d);
    }
};

/// One point of Gr(f) on a fiber, with its multiplicity and the
/// (simplex, sheet) pairs that produced it.
struct FiberHit {
    VecR point;  // ambient coordinates, exact
    int multiplicity = 0;
    std::vector<std::pair<int, int>> sources;
};

struct FiberIntersection {
    VecR base_point;  // ambient point on the target plane
    std::vector<FiberHit> hits;
    int total_multiplicity = 0;
    bool ok = false;
    std::string diagnostic;
};

/// Exact fiber intersection for a piecewise-affine map: f lives over
/// source_frame (mesh in u-coordinates, sheet values as normal
/// coefficients); the fiber is base + span(target normals). Solves the m
/// tangential equations per (simplex, sheet) and keeps solutions inside
/// the simplex.
inline FiberIntersection fiber_intersect_pa(const PAQMap& f, const PlaneFrame& source_frame,
                                            const PlaneFrame& target_frame,
                                            const VecR& u_target) {
    const int m = source_frame.m, n = source_frame.n;
    if (f.mesh.dim != m || f.n != n)
        throw std::invalid_argument("fiber_intersect_pa: frame/map shape mismatch");
    FiberIntersection out;
    out.base_point = target_frame.point(u_target, VecR(n, Rat(0)));

    std::map<VecR, FiberHit> hit_map;
    for (int s = 0; s < f.mesh.cell_count(); ++s) {
        auto [e, ecols] = std::pair<MatR, int>(f.mesh.edge_matrix(s), m);
        const auto& sx = f.mesh.simplices[s];
        for (int j = 0; j < f.q; ++j) {
            // ambient graph point as an affine function of barycentric
            // coordinates: w(lambda) = sum lambda_l W_l with
            // W_l = source_frame.point(vertex_l, value_l)
            std::vector<VecR> w(m + 1);
            for (int l = 0; l <= m; ++l)
                w[l] = source_frame.point(f.mesh.vertices[sx[l]], f.sheets[s][j][l]);
            // equations: <w(lambda) - base, t_k> = 0, sum lambda = 1
            MatR sys(m + 1, m + 1);
            VecR rhs(m + 1);
            for (int k = 0; k < m; ++k) {
                for (int l = 0; l <= m; ++l) sys(k, l) = dot(w[l], target_frame.tangent[k]);
                rhs[k] = dot(out.base_point, target_frame.tangent[k]);
            }
            for (int l = 0; l <= m; ++l) sys(m, l) = 1;
            rhs[m] = 1;
            auto lam = solve(sys, rhs);
            if (!lam) {
                out.diagnostic = "singular sheet/fiber system (hypotheses violated)";
                continue;
            }
            bool inside = true;
            for (const auto& l : *lam)
                if (l < 0) inside = false;
            if (!inside) continue;
            VecR q(source_frame.ambient(), Rat(0));
            for (int l = 0; l <= m; ++l) q = vec_add(q, vec_scale((*lam)[l], w[l]));
            auto& hit = hit_map[q];
            hit.point = q;
            hit.sources.emplace_back(s, j);
        }
    }
    // multiplicity of a hit q: the number of sheets whose value at the base
    // point under q equals the offset of q (a solution exactly on a shared
    // face is found by both owners but counts once per sheet strand)
    for (auto& [q, hit] : hit_map) {
        auto [xq, zq] = source_frame.coords(q);
        auto cell = f.mesh.locate(xq);
        if (!cell) {
            out.diagnostic = "hit projects outside the domain mesh";
            continue;
        }
        auto lam = f.mesh.barycentric(*cell, xq);
        hit.multiplicity = 0;
        for (int j = 0; j < f.q; ++j)
            if (f.sheet_at(*cell, j, *lam) == zq) ++hit.multiplicity;
        out.hits.push_back(hit);
    }
    out.total_multiplicity = 0;
    for (const auto& hit : out.hits) out.total_multiplicity += hit.multiplicity;
    out.ok = out.total_multiplicity == f.q && out.diagnostic.empty();
    if (!out.ok && out.diagnostic.empty())
        out.diagnostic = "total multiplicity " + std::to_string(out.total_multiplicity) +
                         " != Q = " + std::to_string(f.q) +
                         " (hypotheses violated or base point near the domain boundary)";
    return out;
}

/// Fiber intersection for analytic sheets over a curved base: Newton per
/// sheet from the chart seed, hits within `merge_tol` merge.
struct FiberHitD {
    VecD point;
    int multiplicity = 0;
};

struct FiberIntersectionD {
    VecD base_point;
    std::vector<FiberHitD> hits;
    int total_multiplicity = 0;
    bool ok = false;
};

inline FiberIntersectionD fiber_intersect_analytic(const BaseManifold& base,
                                                   const AnalyticSheetBundle& f,
                                                   const VecD& chart_x, double tol = 1e-12,
                                                   double merge_tol = 1e-8) {
    const int m = base.m(), n = base.n();
    if (f.m() != m || f.n() != n)
        throw std::invalid_argument("fiber_intersect_analytic: shape mismatch");
    FiberIntersectionD out;
    VecD p = base.chart(chart_x);
    out.base_point = p;
    auto fr = base.frames(chart_x);

    std::vector<VecD> raw;
    for (int i = 0; i < f.q(); ++i) {
        VecD x = chart_x;
        bool converged = false;
        for (int it = 0; it < 50; ++it) {
            VecD w = x;
            VecD y = f.value(i, x);
            w.insert(w.end(), y.begin(), y.end());
            VecD g(m);
            for (int k = 0; k < m; ++k) g[k] = dot(vec_sub(w, p), fr.tangent[k]);
            MatD jg(m, m);
            MatD df = f.jacobian(i, x);
            for (int k = 0; k < m; ++k)
                for (int l = 0; l < m; ++l) {
                    double acc = fr.tangent[k][l];
                    for (int c = 0; c < n; ++c) acc += fr.tangent[k][m + c] * df(c, l);
                    jg(k, l) = acc;
                }
            auto step = solve(jg, g);
            if (!step) break;
            double sn = 0;
            for (int k = 0; k < m; ++k) {
                x[k] -= (*step)[k];
                sn = std::max(sn, std::abs((*step)[k]));
            }
            if (sn < tol) {
                converged = true;
                break;
            }
        }
        if (!converged) continue;
        VecD w = x;
        VecD y = f.value(i, x);
        w.insert(w.end(), y.begin(), y.end());
        raw.push_back(w);
    }
    for (const auto& w : raw) {
        bool merged = false;
        for (auto& hit : out.hits)
            if (dist(hit.point, w) <= merge_tol) {
                hit.multiplicity += 1;
                merged = true;
                break;
            }
        if (!merged) out.hits.push_back(FiberHitD{w, 1});
    }
    out.total_multiplicity = 0;
    for (const auto& h : out.hits) out.total_multiplicity += h.multiplicity;
    out.ok = out.total_multiplicity == f.q();
    return out;
}

/// Reparametrization estimate ledger over a sampled grid: the two-sided
/// comparison with its explicit 2 sqrt(Q) factor, the mean estimate, the
/// Lipschitz estimate and the projected-offset comparison.
struct ReparamLedger {
    bool cambio1_ok = true;        // (2 sqrt(Q))^{-1} |N| <= G(f, Q[[phi]]) <= 2 sqrt(Q) |N|
    double cambio1_worst = 0;      // worst ratio against the admissible band
    VecD cambio1_worst_point;
    double media_fitted_c = 0;     // |eta o N| <= C (|eta o f - phi| + Lip(f)|Dphi||N|)
    VecD media_worst_point;
    double lip_fitted_c = 0;       // Lip(N) <= C (|D2phi| |N|_inf + |Dphi| + Lip(f))
    VecD lip_worst_point;
    bool cambio10_ok = true;       // G(N(xi), Q[[q]]) <= 2 sqrt(Q) G(f, Q[[eta o f]])
    double cambio10_worst = 0;
    VecD cambio10_worst_point;
    bool multiplicity_ok = true;
    bool hypothesis_ok = true;     // |phi|_C2 + Lip(f) <= c0
};

struct ReparamSample {
    VecD chart_point;
    QPoint n_value;  // offsets as a Q-point in ambient coordinates
};

struct ReparamResult {
    std::vector<ReparamSample> samples;
    ReparamLedger ledger;
};

/// Samples the geometric reparametrization of Gr(f) over the curved base
/// and audits the four estimates. `grid` points per axis plus `random_count`
/// uniform samples inside the chart domain.
inline ReparamResult reparametrize(const BaseManifold& base, const AnalyticSheetBundle& f,
                                   double c0 = 0.05, int grid = 33, int random_count = 1000,
                                   unsigned seed = 12345) {
    const int m = base.m(), n = base.n();
    ReparamResult res;
    auto& led = res.ledger;

    // hypothesis audit (run anyway when violated; the ledger carries the flag)
    double lip_f = 0;
    {
        Box bb = f.domain().bounding_box();
        for (int i = 0; i <= 16; ++i)
            for (int j = 0; j <= (m > 1 ? 16 : 0); ++j) {
                VecD x(m);
                x[0] = bb.lo[0] + (bb.hi[0] - bb.lo[0]) * i / 16.0;
                if (m > 1) x[1] = bb.lo[1] + (bb.hi[1] - bb.lo[1]) * j / 16.0;
                if (!f.domain().contains(x, 1e-12)) continue;
                for (int q = 0; q < f.q(); ++q)
                    lip_f = std::max(lip_f, operator_norm(f.jacobian(q, x)));
            }
    }
    led.hypothesis_ok = base.c2_norm() + base.c1_norm() + base.c0_norm() + lip_f <= c0 ||
                        (base.c1_norm() + base.c2_norm() + lip_f) <= c0;

    const double two_sqrt_q = 2 * std::sqrt(static_cast<double>(f.q()));

    // sample points: grid + uniform random inside the base domain
    std::vector<VecD> points;
    Box bb = base.domain().bounding_box();
    if (m == 1) {
        for (int i = 0; i < grid; ++i)
            points.push_back({bb.lo[0] + (bb.hi[0] - bb.lo[0]) * i / (grid - 1.0)});
    } else {
        for (int i = 0; i < grid; ++i)
            for (int j = 0; j < grid; ++j) {
                VecD x = {bb.lo[0] + (bb.hi[0] - bb.lo[0]) * i / (grid - 1.0),
                          bb.lo[1] + (bb.hi[1] - bb.lo[1]) * j / (grid - 1.0)};
                if (base.domain().contains(x, 1e-12)) points.push_back(x);
            }
    }
    // deterministic congruential samples (no <random> to keep runs identical
    // across standard libraries)
    unsigned long long state = seed;
    auto next_uniform = [&]() {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>((state >> 11) & ((1ULL << 53) - 1)) / (1ULL << 53);
    };
    for (int r = 0; r < random_count; ++r) {
        VecD x(m);
        for (int k = 0; k < m; ++k) x[k] = bb.lo[k] + (bb.hi[k] - bb.lo[k]) * next_uniform();
        if (base.domain().contains(x, 1e-12)) points.push_back(x);
    }

    for (const auto& x : points) {
        auto fib = fiber_intersect_analytic(base, f, x);
        if (!fib.ok) {
            led.multiplicity_ok = false;
            continue;
        }
        VecD p_amb = base.chart(x);
        std::vector<VecD> offsets;
        for (const auto& hit : fib.hits)
            for (int c = 0; c < hit.multiplicity; ++c)
                offsets.push_back(vec_sub(hit.point, p_amb));
        QPoint nval(base.ambient(), offsets);
        res.samples.push_back(ReparamSample{x, nval});

        double n_norm = qpoint_norm(nval);
        // G(f(x), Q [[phi(x)]]): distance of the sheet values to the base
        double gval = 0;
        {
            VecD phi_x = base.phi(x);
            for (int i = 0; i < f.q(); ++i) {
                VecD d = vec_sub(f.value(i, x), phi_x);
                gval += dot(d, d);
            }
            gval = std::sqrt(gval);
        }
        double lo = n_norm / two_sqrt_q, hi = two_sqrt_q * n_norm;
        double tolerance = 1e-12 * (1 + n_norm + gval);
        if (gval < lo - tolerance || gval > hi + tolerance) {
            led.cambio1_ok = false;
        }
        double band = std::max(gval > 0 ? lo / std::max(gval, 1e-300) : 0.0,
                               hi > 0 ? gval / std::max(hi, 1e-300) : 0.0);
        if (band > led.cambio1_worst) {
            led.cambio1_worst = band;
            led.cambio1_worst_point = x;
        }

        // mean estimate
        VecD eta_n = eta(nval);
        VecD eta_f(n, 0.0);
        for (int i = 0; i < f.q(); ++i) eta_f = vec_add(eta_f, f.value(i, x));
        eta_f = vec_scale(1.0 / f.q(), eta_f);
        double lhs = norm(eta_n);
        double dphi = operator_norm(base.phi_jacobian(x));
        double rhs = dist(eta_f, base.phi(x)) + lip_f * dphi * n_norm;
        if (rhs > 1e-14 && lhs / rhs > led.media_fitted_c) {
            led.media_fitted_c = lhs / rhs;
            led.media_worst_point = x;
        }
    }

    // Lipschitz quotients on consecutive samples
    double lip_rhs = base.c2_norm() * 0 + base.c1_norm() + lip_f;
    double n_sup = 0;
    for (const auto& s : res.samples) n_sup = std::max(n_sup, qpoint_norm(s.n_value));
    lip_rhs = base.c2_norm() * n_sup + base.c1_norm() + lip_f;
    for (std::size_t i = 1; i < res.samples.size(); ++i) {
        const auto& a = res.samples[i - 1];
        const auto& b = res.samples[i];
        if (a.n_value.q() != b.n_value.q()) continue;
        double dx = dist(base.chart(a.chart_point), base.chart(b.chart_point));
        if (dx < 1e-9) continue;
        double quotient = g_metric(a.n_value, b.n_value) / dx;
        if (lip_rhs > 1e-14 && quotient / lip_rhs > led.lip_fitted_c) {
            led.lip_fitted_c = quotient / lip_rhs;
            led.lip_worst_point = a.chart_point;
        }
    }

    // projected-offset estimate at points produced by the nearest-point
    // projection of (p, eta o f(p))
    for (std::size_t i = 0; i < res.samples.size(); i += 7) {
        const auto& s = res.samples[i];
        const VecD& x = s.chart_point;
        VecD eta_f(n, 0.0);
        for (int q2 = 0; q2 < f.q(); ++q2) eta_f = vec_add(eta_f, f.value(q2, x));
        eta_f = vec_scale(1.0 / f.q(), eta_f);
        VecD zeta = x;
        zeta.insert(zeta.end(), eta_f.begin(), eta_f.end());
        ProjectionResult pr;
        try {
            pr = base.nearest_point_projection(zeta);
        } catch (const std::exception&) {
            continue;
        }
        if (!base.domain().contains(pr.chart_point, -1e-6)) continue;
        auto fib = fiber_intersect_analytic(base, f, pr.chart_point);
        if (!fib.ok) continue;
        std::vector<VecD> offs;
        for (const auto& hit : fib.hits)
            for (int c = 0; c < hit.multiplicity; ++c)
                offs.push_back(vec_sub(hit.point, pr.foot));
        QPoint n_xi(base.ambient(), offs);
        double lhs = g_metric(n_xi, QPoint::constant(f.q(), pr.offset));
        // G(f(p), Q [[eta o f(p)]])
        double rhs = 0;
        for (int q2 = 0; q2 < f.q(); ++q2) {
            VecD d = vec_sub(f.value(q2, x), eta_f);
            rhs += dot(d, d);
        }
        rhs = two_sqrt_q * std::sqrt(rhs);
        if (lhs > rhs + 1e-10 * (1 + rhs)) led.cambio10_ok = false;
        double ratio = rhs > 1e-300 ? lhs / rhs : 0.0;
        if (ratio > led.cambio10_worst) {
            led.cambio10_worst = ratio;
            led.cambio10_worst_point = x;
        }
    }
    return res;
}

/// ---- exact tilted-plane reparametrization (piecewise-affine mode) ----

struct TiltedReparam {
    PAQMap g;                    // over the target u-coordinates
    PlaneFrame source_frame;
    PlaneFrame target_frame;
    double sup_g = 0;            // max ambient offset norm over vertices
    double lip_g = 0;            // selection-gradient norm of g
    double plane_distance = 0;   // |pi - pi_0|
    bool chain_equal = false;    // G_g == G_f restricted to the cylinder
    bool multiplicity_ok = true;
};

namespace reparam_detail {

/// Ambient graph current of a map over an arbitrary plane frame.
inline SimplicialCurrent frame_graph_current(const PAQMap& f, const PlaneFrame& frame) {
    SimplicialCurrent t(f.mesh.dim, frame.ambient());
    for (int s = 0; s < f.mesh.cell_count(); ++s) {
        const auto& sx = f.mesh.simplices[s];
        for (int j = 0; j < f.q; ++j) {
            std::vector<VecR> img;
            for (int l = 0; l < f.mesh.dim + 1; ++l)
                img.push_back(frame.point(f.mesh.vertices[sx[l]], f.sheets[s][j][l]));
            t.add_cell(std::move(img), 1);
        }
    }
    return t;
}

inline std::pair<VecR, Rat> canonical_line(const VecR& a, const VecR& b) {
    VecR coeff = {b[1] - a[1], a[0] - b[0]};
    Rat rhs = coeff[0] * a[0] + coeff[1] * a[1];
    Rat scale = coeff[0] != 0 ? coeff[0] : coeff[1];
    coeff[0] /= scale;
    coeff[1] /= scale;
    rhs /= scale;
    return {coeff, rhs};
}

}  // namespace reparam_detail

/// Reparametrizes a piecewise-affine Q-graph over `source_frame` as a
/// Q-graph over `target_frame`, restricted to the box |u_k| <= s of target
/// coordinates. The mesh of g is the arrangement of the projected graph
/// cells; the sheet values on each arrangement cell come from independent
/// fiber intersections, and the chain identity
///     G_g = G_f restricted to the cylinder
/// is then verified exactly against the clipped source current.
inline TiltedReparam reparam_between(const PAQMap& f, const PlaneFrame& source_frame,
                                     const PlaneFrame& target_frame, const Rat& s) {
    const int m = source_frame.m, n = source_frame.n;
    if (m != 2) throw std::invalid_argument("reparam_between: 2-dimensional domains only");
    TiltedReparam out;
    out.source_frame = source_frame;
    out.target_frame = target_frame;
    out.plane_distance = source_frame.projection_distance(target_frame);

    // project graph cells to target u-coordinates, collect arrangement lines
    std::set<std::pair<std::vector<Rat>, Rat>> lineset;
    std::vector<std::pair<VecR, Rat>> lines;
    auto add_line = [&](const VecR& a, const VecR& b) {
        if (a == b) return;
        auto ln = reparam_detail::canonical_line(a, b);
        if (lineset.insert({ln.first, ln.second}).second) lines.push_back(ln);
    };
    for (int cell = 0; cell < f.mesh.cell_count(); ++cell) {
        const auto& sx = f.mesh.simplices[cell];
        for (int j = 0; j < f.q; ++j) {
            std::vector<VecR> u(m + 1);
            for (int l = 0; l <= m; ++l) {
                VecR w = source_frame.point(f.mesh.vertices[sx[l]], f.sheets[cell][j][l]);
                u[l] = target_frame.coords(w).first;
            }
            add_line(u[0], u[1]);
            add_line(u[1], u[2]);
            add_line(u[0], u[2]);
        }
    }

    // arrangement inside the box [-s, s]^2
    std::vector<std::vector<VecR>> fragments = {
        {{-s, -s}, {s, -s}, {s, s}, {-s, s}}};
    for (const auto& [coeff, rhs] : lines) {
        std::vector<std::vector<VecR>> next;
        for (const auto& poly : fragments)
            for (auto& piece : overlay_detail::split_convex(poly, coeff, rhs))
                next.push_back(std::move(piece));
        fragments = std::move(next);
    }

    // build g: per fragment, fiber intersection at the centroid gives the
    // covering (simplex, sheet) pairs; each pair parametrizes affinely over
    // the fragment
    MeshBuilder mb(2, 2);
    std::vector<std::vector<std::vector<VecR>>> cell_sheets;  // per emitted triangle
    for (const auto& frag : fragments) {
        if (overlay_detail::area2_2d(frag) == 0) continue;
        VecR c = overlay_detail::centroid(frag);
        auto fib = fiber_intersect_pa(f, source_frame, target_frame, c);
        if (!fib.ok) {
            out.multiplicity_ok = false;
            continue;
        }
        // per source pair: affine map u -> z on this fragment via exact
        // solves at the fragment vertices
        std::vector<std::vector<VecR>> sheet_vertex_values;  // [strand][vertex]
        for (const auto& hit : fib.hits)
            for (const auto& [cell, j] : hit.sources) {
                std::vector<VecR> vals;
                for (const auto& uv : frag) {
                    // solve the fiber system restricted to this cell/sheet
                    const auto& sx = f.mesh.simplices[cell];
                    std::vector<VecR> w(m + 1);
                    for (int l = 0; l <= m; ++l)
                        w[l] = source_frame.point(f.mesh.vertices[sx[l]], f.sheets[cell][j][l]);
                    MatR sys(m + 1, m + 1);
                    VecR rhs(m + 1);
                    VecR base = target_frame.point(uv, VecR(n, Rat(0)));
                    for (int k = 0; k < m; ++k) {
                        for (int l = 0; l <= m; ++l) sys(k, l) = dot(w[l], target_frame.tangent[k]);
                        rhs[k] = dot(base, target_frame.tangent[k]);
                    }
                    for (int l = 0; l <= m; ++l) sys(m, l) = 1;
                    rhs[m] = 1;
                    auto lam = solve(sys, rhs);
                    if (!lam) throw std::runtime_error("reparam_between: singular strand system");
                    VecR q(source_frame.ambient(), Rat(0));
                    for (int l = 0; l <= m; ++l) q = vec_add(q, vec_scale((*lam)[l], w[l]));
                    vals.push_back(target_frame.coords(q).second);
                }
                sheet_vertex_values.push_back(std::move(vals));
            }
        if (static_cast<int>(sheet_vertex_values.size()) != f.q) {
            out.multiplicity_ok = false;
            continue;
        }
        // fan-triangulate the fragment
        for (std::size_t i = 1; i + 1 < frag.size(); ++i) {
            std::vector<VecR> tri = {frag[0], frag[i], frag[i + 1]};
            Rat x1 = tri[1][0] - tri[0][0], y1 = tri[1][1] - tri[0][1];
            Rat x2 = tri[2][0] - tri[0][0], y2 = tri[2][1] - tri[0][1];
            if (x1 * y2 - x2 * y1 == 0) continue;
            mb.add_simplex(tri);
            std::vector<std::vector<VecR>> tri_sheets;
            for (const auto& vals : sheet_vertex_values)
                tri_sheets.push_back({vals[0], vals[i], vals[i + 1]});
            cell_sheets.push_back(std::move(tri_sheets));
        }
    }
    out.g.mesh = mb.take();
    out.g.q = f.q;
    out.g.n = n;
    out.g.sheets = std::move(cell_sheets);

    // bounds: sup over vertices of the ambient offset, selection gradients
    for (int cell = 0; cell < out.g.mesh.cell_count(); ++cell)
        for (int j = 0; j < f.q; ++j) {
            for (int l = 0; l <= m; ++l) {
                VecR off(target_frame.ambient(), Rat(0));
                for (int l2 = 0; l2 < n; ++l2)
                    off = vec_add(off,
                                  vec_scale(out.g.sheets[cell][j][l][l2], target_frame.normal[l2]));
                out.sup_g = std::max(out.sup_g, norm(to_double(off)));
            }
            out.lip_g = std::max(out.lip_g, out.g.sheet_gradient_norm(cell, j));
        }

    // exact chain identity against the clipped source current
    if (out.multiplicity_ok && out.g.mesh.cell_count() > 0) {
        auto source_current = reparam_detail::frame_graph_current(f, source_frame);
        // cylinder |u_k(p)| <= s : coordinate functionals are rows of the
        // inverse frame matrix
        std::vector<HalfSpace> halves;
        {
            MatR sys(target_frame.ambient(), target_frame.ambient());
            for (int r = 0; r < target_frame.ambient(); ++r) {
                for (int k = 0; k < m; ++k) sys(r, k) = target_frame.tangent[k][r];
                for (int l = 0; l < n; ++l) sys(r, m + l) = target_frame.normal[l][r];
            }
            // row k of sys^{-1} gives u_k(p - origin)
            MatR inv(sys.rows, sys.cols);
            for (std::size_t c = 0; c < sys.cols; ++c) {
                VecR e(sys.rows, Rat(0));
                e[c] = 1;
                auto col = solve(sys, e);
                for (std::size_t r = 0; r < sys.rows; ++r) inv(r, c) = (*col)[r];
            }
            for (int k = 0; k < m; ++k) {
                VecR row = inv.row(k);
                Rat off = dot(row, target_frame.origin);
                halves.push_back(HalfSpace{row, off - s});                      // u_k >= -s
                halves.push_back(HalfSpace{vec_scale(Rat(-1), row), -off - s}); // u_k <= s
            }
        }
        auto clipped = clip_current(source_current, halves);
        auto g_current = reparam_detail::frame_graph_current(out.g, target_frame);
        out.chain_equal = currents_equal(clipped, g_current);
    }
    return out;
}

/// Specialization to a tilted plane pi = graph(B) against the standard
/// plane: f over pi_0, g over pi restricted to the box of half-width s.
inline TiltedReparam tilted_reparam(const PAQMap& f, const MatR& b, const Rat& s) {
    auto pi0 = PlaneFrame::standard(f.mesh.dim, f.n);
    auto pi = PlaneFrame::from_tilt(b);
    return reparam_between(f, pi0, pi, s);
}

}  // namespace qcurrents
