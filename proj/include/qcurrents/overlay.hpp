#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "qcurrents/current.hpp"
#include "qcurrents/linalg.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

/// Exact overlay machinery for currents of dimension <= 2: zero tests and
/// equality that are invariant under retriangulation, plus half-space
/// clipping. Cells are grouped by the canonical form of their affine hull
/// (RREF basis of the span + the base point with zeros at pivot
/// coordinates); inside a hull, pivot coordinates give exact 2D charts.

namespace overlay_detail {

struct HullKey {
    std::vector<std::size_t> pivots;
    std::vector<VecR> basis;  // RREF rows spanning the direction space
    VecR base;                // hull point with zeros at pivot coordinates

    bool operator<(const HullKey& o) const {
        return std::tie(pivots, basis, base) < std::tie(o.pivots, o.basis, o.base);
    }
};

inline HullKey hull_of(const std::vector<VecR>& verts, int dim, int ambient) {
    MatR b(dim, ambient);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < ambient; ++c) b(r, c) = verts[r + 1][c] - verts[0][c];
    auto pivots = rref(b);
    HullKey key;
    key.pivots = pivots;
    for (std::size_t r = 0; r < pivots.size(); ++r) key.basis.push_back(b.row(r));
    key.base = verts[0];
    for (std::size_t r = 0; r < pivots.size(); ++r) {
        Rat c = key.base[pivots[r]];
        if (c == 0) continue;
        for (int i = 0; i < ambient; ++i) key.base[i] -= c * key.basis[r][i];
    }
    return key;
}

inline VecR chart_coords(const HullKey& key, const VecR& x) {
    VecR u(key.pivots.size());
    for (std::size_t r = 0; r < key.pivots.size(); ++r) u[r] = x[key.pivots[r]];
    return u;
}

/// Splits a convex polygon (given in cyclic order, any ambient dimension of
/// coordinates) by the hyperplane coeff.x = rhs into the <= and >= pieces.
inline std::vector<std::vector<VecR>> split_convex(const std::vector<VecR>& poly,
                                                   const VecR& coeff, const Rat& rhs) {
    auto side = [&](const VecR& p) { return dot(coeff, p) - rhs; };
    std::vector<VecR> neg, pos;
    const std::size_t k = poly.size();
    for (std::size_t i = 0; i < k; ++i) {
        const VecR& a = poly[i];
        const VecR& b = poly[(i + 1) % k];
        Rat sa = side(a), sb = side(b);
        if (sa <= 0) neg.push_back(a);
        if (sa >= 0) pos.push_back(a);
        if ((sa < 0 && sb > 0) || (sa > 0 && sb < 0)) {
            Rat t = sa / (sa - sb);
            VecR mid(a.size());
            for (std::size_t c = 0; c < a.size(); ++c) mid[c] = a[c] + t * (b[c] - a[c]);
            neg.push_back(mid);
            pos.push_back(mid);
        }
    }
    std::vector<std::vector<VecR>> out;
    for (auto* piece : {&neg, &pos}) {
        std::vector<VecR> clean;
        for (const auto& v : *piece)
            if (clean.empty() || clean.back() != v) clean.push_back(v);
        while (clean.size() > 1 && clean.front() == clean.back()) clean.pop_back();
        if (clean.size() >= 3) out.push_back(std::move(clean));
    }
    return out;
}

inline Rat area2_2d(const std::vector<VecR>& poly) {
    Rat acc(0);
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        Rat x1 = poly[i][0] - poly[0][0], y1 = poly[i][1] - poly[0][1];
        Rat x2 = poly[i + 1][0] - poly[0][0], y2 = poly[i + 1][1] - poly[0][1];
        acc += x1 * y2 - x2 * y1;
    }
    return acc;
}

inline VecR centroid(const std::vector<VecR>& poly) {
    VecR c(poly[0].size(), Rat(0));
    for (const auto& v : poly) c = vec_add(c, v);
    Rat inv = Rat(1) / Rat(static_cast<int>(poly.size()));
    return vec_scale(inv, c);
}

/// Strictly-inside test for a 2D triangle with counterclockwise order.
inline bool point_in_triangle_2d(const std::vector<VecR>& tri, const VecR& p, bool strict) {
    for (int i = 0; i < 3; ++i) {
        const VecR& a = tri[i];
        const VecR& b = tri[(i + 1) % 3];
        Rat cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if (strict ? (cr <= 0) : (cr < 0)) return false;
    }
    return true;
}

struct PlaneTriangle {
    std::vector<VecR> tri2d;  // counterclockwise
    long long signed_mult;    // multiplicity times in-plane orientation sign
};

/// Canonical line through two 2D points: (coeff, rhs) scaled so the first
/// nonzero coefficient is 1.
inline std::pair<VecR, Rat> line_through(const VecR& a, const VecR& b) {
    VecR coeff = {b[1] - a[1], a[0] - b[0]};
    Rat rhs = coeff[0] * a[0] + coeff[1] * a[1];
    Rat scale = coeff[0] != 0 ? coeff[0] : coeff[1];
    coeff[0] /= scale;
    coeff[1] /= scale;
    rhs /= scale;
    return {coeff, rhs};
}

/// All triangles in one plane sum to the zero current?
inline bool plane_group_zero(std::vector<PlaneTriangle> tris) {
    std::set<std::pair<std::vector<Rat>, Rat>> lineset;
    std::vector<std::pair<VecR, Rat>> lines;
    for (const auto& t : tris)
        for (int i = 0; i < 3; ++i) {
            auto ln = line_through(t.tri2d[i], t.tri2d[(i + 1) % 3]);
            if (lineset.insert({ln.first, ln.second}).second) lines.push_back(ln);
        }
    for (const auto& t : tris) {
        std::vector<std::vector<VecR>> pieces = {t.tri2d};
        for (const auto& [coeff, rhs] : lines) {
            std::vector<std::vector<VecR>> next;
            for (const auto& p : pieces)
                for (auto& piece : split_convex(p, coeff, rhs)) next.push_back(std::move(piece));
            pieces = std::move(next);
        }
        for (const auto& piece : pieces) {
            if (area2_2d(piece) == 0) continue;
            VecR c = centroid(piece);
            long long total = 0;
            for (const auto& u : tris)
                if (point_in_triangle_2d(u.tri2d, c, true)) total += u.signed_mult;
            if (total != 0) return false;
        }
    }
    return true;
}

}  // namespace overlay_detail

/// Zero test for currents of dimension 0, 1 or 2, exact and independent of
/// the triangulation: the multiplicity function vanishes almost everywhere.
inline bool is_zero_current(const SimplicialCurrent& t) {
    using namespace overlay_detail;
    if (t.cells.empty()) return true;
    if (t.dim == 0) return false;  // canonical merge already cancelled equal points
    if (t.dim == 1) {
        // group by line, reduce to signed intervals in the chart coordinate
        std::map<HullKey, std::vector<std::tuple<Rat, Rat, long long>>> groups;
        for (const auto& [verts, mult] : t.cells) {
            auto key = hull_of(verts, 1, t.ambient);
            Rat a = chart_coords(key, verts[0])[0];
            Rat b = chart_coords(key, verts[1])[0];
            groups[key].emplace_back(a, b, mult);
        }
        for (const auto& [key, segs] : groups) {
            std::vector<Rat> cuts;
            for (const auto& [a, b, m] : segs) {
                cuts.push_back(a);
                cuts.push_back(b);
            }
            std::sort(cuts.begin(), cuts.end());
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
            for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
                Rat mid = (cuts[i] + cuts[i + 1]) / 2;
                long long total = 0;
                for (const auto& [a, b, m] : segs) {
                    if (a < b && a < mid && mid < b) total += m;
                    if (b < a && b < mid && mid < a) total -= m;
                }
                if (total != 0) return false;
            }
        }
        return true;
    }
    if (t.dim == 2) {
        std::map<HullKey, std::vector<PlaneTriangle>> groups;
        for (const auto& [verts, mult] : t.cells) {
            auto key = hull_of(verts, 2, t.ambient);
            std::vector<VecR> tri2d;
            for (const auto& v : verts) tri2d.push_back(chart_coords(key, v));
            Rat orient = (tri2d[1][0] - tri2d[0][0]) * (tri2d[2][1] - tri2d[0][1]) -
                         (tri2d[2][0] - tri2d[0][0]) * (tri2d[1][1] - tri2d[0][1]);
            long long sm = mult * (orient > 0 ? 1 : -1);
            if (orient < 0) std::swap(tri2d[1], tri2d[2]);
            groups[key].push_back(PlaneTriangle{std::move(tri2d), sm});
        }
        for (const auto& [key, tris] : groups)
            if (!plane_group_zero(tris)) return false;
        return true;
    }
    throw std::invalid_argument("is_zero_current: dimension > 2 not supported");
}

/// Equality as currents (retriangulation-invariant).
inline bool currents_equal(const SimplicialCurrent& a, const SimplicialCurrent& b) {
    if (a.dim != b.dim || a.ambient != b.ambient)
        throw std::invalid_argument("currents_equal: shape mismatch");
    if (a.same_cells(b)) return true;
    return is_zero_current(a - b);
}

/// Rational half-space coeff . x >= rhs.
struct HalfSpace {
    VecR coeff;
    Rat rhs;
};

/// Restriction of a current to an intersection of half-spaces; cells are
/// clipped exactly and re-triangulated with their orientation preserved.
inline SimplicialCurrent clip_current(const SimplicialCurrent& t,
                                      const std::vector<HalfSpace>& halves) {
    using namespace overlay_detail;
    SimplicialCurrent out(t.dim, t.ambient);
    for (const auto& [verts, mult] : t.cells) {
        if (t.dim == 1) {
            VecR a = verts[0], b = verts[1];
            Rat lo(0), hi(1);
            bool dead = false;
            for (const auto& h : halves) {
                Rat sa = dot(h.coeff, a) - h.rhs;
                Rat sb = dot(h.coeff, b) - h.rhs;
                Rat d = sb - sa;
                if (d == 0) {
                    if (sa < 0) dead = true;
                } else {
                    Rat tcut = -sa / d;
                    if (d > 0) lo = std::max(lo, tcut);
                    else hi = std::min(hi, tcut);
                }
                if (dead) break;
            }
            if (dead || !(lo < hi)) continue;
            auto at = [&](const Rat& s) {
                VecR p(a.size());
                for (std::size_t c = 0; c < a.size(); ++c) p[c] = a[c] + s * (b[c] - a[c]);
                return p;
            };
            out.add_cell({at(lo), at(hi)}, mult);
            continue;
        }
        if (t.dim != 2) throw std::invalid_argument("clip_current: dimension <= 2 only");
        std::vector<std::vector<VecR>> pieces = {std::vector<VecR>(verts.begin(), verts.end())};
        for (const auto& h : halves) {
            std::vector<std::vector<VecR>> next;
            for (const auto& p : pieces)
                for (auto& piece : split_convex(p, h.coeff, h.rhs)) {
                    VecR c = centroid(piece);
                    if (dot(h.coeff, c) - h.rhs >= 0) next.push_back(std::move(piece));
                }
            pieces = std::move(next);
        }
        for (const auto& piece : pieces)
            for (std::size_t i = 1; i + 1 < piece.size(); ++i)
                out.add_cell({piece[0], piece[i], piece[i + 1]}, mult);
    }
    return out;
}

/// Boundary commutation for the push-forward into the target space. When
/// no degenerate image cell was dropped the two chains agree cell by cell.
/// Degenerate images (always the case for targets of dimension below the
/// domain) carry no current, so there the comparison must be invariant
/// under retriangulation: the difference chain is overlay-tested for zero.
inline CommutationReport verify_boundary_commutation(const PAQMap& f) {
    auto t = push_forward(f);
    auto lhs = boundary(t);
    auto rhs = boundary_restriction_current(f);
    if (t.degenerate_dropped == 0 && rhs.degenerate_dropped == 0) return compare_cells(lhs, rhs);
    CommutationReport rep;
    rep.used_overlay = true;
    rep.exact = currents_equal(lhs, rhs);
    if (!rep.exact)
        for (const auto& [k, m] : (lhs - rhs).cells) rep.mismatches.emplace_back(k, m, 0);
    return rep;
}

/// No-cancellation predicate on raw push-forward cells: any two image
/// cells sharing an affine hull and overlapping with opposite in-plane
/// orientations witness cancellation. Dimension 2 (and trivially 0/1).
inline NoCancellationReport check_no_cancellation(const std::vector<ImageCell>& raw, int dim,
                                                  int ambient) {
    using namespace overlay_detail;
    NoCancellationReport rep;
    if (dim != 2) {
        if (dim == 1) {
            std::map<HullKey, std::vector<std::pair<std::size_t, std::pair<Rat, Rat>>>> groups;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                MatR e(ambient, 1);
                for (int c = 0; c < ambient; ++c) e(c, 0) = raw[i].verts[1][c] - raw[i].verts[0][c];
                if (rank(e) < 1) continue;
                auto key = hull_of(raw[i].verts, 1, ambient);
                Rat a = chart_coords(key, raw[i].verts[0])[0];
                Rat b = chart_coords(key, raw[i].verts[1])[0];
                groups[key].push_back({i, {a, b}});
            }
            for (const auto& [key, segs] : groups)
                for (std::size_t i = 0; i < segs.size(); ++i)
                    for (std::size_t j = i + 1; j < segs.size(); ++j) {
                        auto [a1, b1] = segs[i].second;
                        auto [a2, b2] = segs[j].second;
                        int s1 = a1 < b1 ? 1 : -1, s2 = a2 < b2 ? 1 : -1;
                        Rat lo = std::max(std::min(a1, b1), std::min(a2, b2));
                        Rat hi = std::min(std::max(a1, b1), std::max(a2, b2));
                        if (lo < hi && s1 * s2 < 0) {
                            rep.holds = false;
                            rep.violations.push_back({raw[segs[i].first], raw[segs[j].first]});
                        }
                    }
            return rep;
        }
        return rep;
    }
    std::map<HullKey, std::vector<std::pair<std::size_t, PlaneTriangle>>> groups;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        MatR e(ambient, 2);
        for (int j = 0; j < 2; ++j)
            for (int c = 0; c < ambient; ++c) e(c, j) = raw[i].verts[j + 1][c] - raw[i].verts[0][c];
        if (rank(e) < 2) continue;  // degenerate images carry no orientation
        auto key = hull_of(raw[i].verts, 2, ambient);
        std::vector<VecR> tri2d;
        for (const auto& v : raw[i].verts) tri2d.push_back(chart_coords(key, v));
        Rat orient = (tri2d[1][0] - tri2d[0][0]) * (tri2d[2][1] - tri2d[0][1]) -
                     (tri2d[2][0] - tri2d[0][0]) * (tri2d[1][1] - tri2d[0][1]);
        long long sm = orient > 0 ? 1 : -1;
        if (orient < 0) std::swap(tri2d[1], tri2d[2]);
        groups[key].push_back({i, PlaneTriangle{std::move(tri2d), sm}});
    }
    for (const auto& [key, tris] : groups)
        for (std::size_t i = 0; i < tris.size(); ++i)
            for (std::size_t j = i + 1; j < tris.size(); ++j) {
                if (tris[i].second.signed_mult * tris[j].second.signed_mult > 0) continue;
                // overlap test: clip one triangle by the other's edges
                std::vector<std::vector<VecR>> pieces = {tris[i].second.tri2d};
                const auto& other = tris[j].second.tri2d;
                bool overlap = false;
                for (int k = 0; k < 3 && !pieces.empty(); ++k) {
                    const VecR& a = other[k];
                    const VecR& b = other[(k + 1) % 3];
                    VecR coeff = {-(b[1] - a[1]), b[0] - a[0]};  // left normal of a->b
                    Rat rhs = coeff[0] * a[0] + coeff[1] * a[1];
                    std::vector<std::vector<VecR>> next;
                    for (const auto& p : pieces)
                        for (auto& piece : split_convex(p, coeff, rhs)) {
                            VecR c = centroid(piece);
                            Rat cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                            if (cr > 0 && area2_2d(piece) != 0) next.push_back(std::move(piece));
                        }
                    pieces = std::move(next);
                }
                for (const auto& p : pieces)
                    if (area2_2d(p) != 0) overlap = true;
                if (overlap) {
                    rep.holds = false;
                    rep.violations.push_back({raw[tris[i].first], raw[tris[j].first]});
                }
            }
    return rep;
}

}  // namespace qcurrents
