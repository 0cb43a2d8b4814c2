#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/linalg.hpp"
#include "qcurrents/mesh.hpp"
#include "qcurrents/qpoint.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

namespace detail {

/// Strict / non-strict rational linear feasibility by Fourier-Motzkin.
/// Constraints: coeff . mu > rhs (strict) or >= rhs. Dimensions here are
/// at most the simplex arity, so the doubling blowup is irrelevant.
struct LinConstraint {
    VecR coeff;
    Rat rhs;
    bool strict;
};

inline bool fm_feasible(std::vector<LinConstraint> cons, std::size_t nvars) {
    for (std::size_t v = nvars; v-- > 0;) {
        std::vector<LinConstraint> lower, upper, rest;
        for (auto& c : cons) {
            if (c.coeff[v] > 0) lower.push_back(c);        // mu_v > (rhs - other)/coeff
            else if (c.coeff[v] < 0) upper.push_back(c);   // mu_v < ...
            else rest.push_back(c);
        }
        for (const auto& lo : lower)
            for (const auto& up : upper) {
                // combine: lo.coeff*mu > lo.rhs, up.coeff*mu > up.rhs with
                // opposite signs on mu_v; eliminate by positive combination.
                Rat a = lo.coeff[v];   // > 0
                Rat b = -up.coeff[v];  // > 0
                LinConstraint c;
                c.coeff.assign(nvars, Rat(0));
                for (std::size_t j = 0; j < nvars; ++j)
                    c.coeff[j] = b * lo.coeff[j] + a * up.coeff[j];
                c.rhs = b * lo.rhs + a * up.rhs;
                c.strict = lo.strict || up.strict;
                c.coeff[v] = 0;
                rest.push_back(std::move(c));
            }
        cons = std::move(rest);
    }
    for (const auto& c : cons) {
        if (c.strict && !(Rat(0) > c.rhs)) return false;
        if (!c.strict && !(Rat(0) >= c.rhs)) return false;
    }
    return true;
}

/// Does sum_i lambda_i w_i = 0 admit a solution with lambda_i > 0 and
/// sum lambda_i = 1? Decides whether two affine sheets cross the open
/// simplex whose vertex differences are w_i.
inline bool crosses_open_simplex(const std::vector<VecR>& w) {
    const std::size_t k = w.size();           // number of vertices
    const std::size_t n = w.empty() ? 0 : w[0].size();
    // Solve the equality system for lambda, parametrize the affine solution
    // set, and test strict positivity of each lambda_i over the parameters.
    MatR sys(n + 1, k + 1);  // [W | 0; 1...1 | 1] augmented
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) sys(i, j) = w[j][i];
    for (std::size_t j = 0; j < k; ++j) sys(n, j) = 1;
    sys(n, k) = 1;
    MatR red = sys;
    auto pivots = rref(red);
    // inconsistency: pivot in the augmented column
    for (auto p : pivots)
        if (p == k) return false;
    std::vector<bool> is_pivot(k, false);
    for (auto p : pivots) is_pivot[p] = true;
    std::vector<std::size_t> free_cols;
    for (std::size_t j = 0; j < k; ++j)
        if (!is_pivot[j]) free_cols.push_back(j);
    const std::size_t d = free_cols.size();
    // lambda_j as affine function of the free parameters
    std::vector<VecR> lam_coeff(k, VecR(d, Rat(0)));
    VecR lam_const(k, Rat(0));
    for (std::size_t j = 0; j < k; ++j) {
        if (!is_pivot[j]) {
            for (std::size_t t = 0; t < d; ++t)
                if (free_cols[t] == j) lam_coeff[j][t] = 1;
            continue;
        }
        // find the row owning this pivot
        std::size_t row = 0;
        for (std::size_t r = 0; r < pivots.size(); ++r)
            if (pivots[r] == j) row = r;
        lam_const[j] = red(row, k);
        for (std::size_t t = 0; t < d; ++t) lam_coeff[j][t] = -red(row, free_cols[t]);
    }
    std::vector<LinConstraint> cons;
    for (std::size_t j = 0; j < k; ++j)
        cons.push_back(LinConstraint{lam_coeff[j], -lam_const[j], true});  // lambda_j > 0
    return fm_feasible(std::move(cons), d);
}

}  // namespace detail

/// Piecewise-affine Q-valued map on a simplicial mesh. Sheets are stored as
/// exact rational values at the simplex vertices (the affine map on the
/// simplex is their barycentric interpolation), which keeps restriction to
/// faces and face-compatibility checks exact.
struct PAQMap {
    SimplicialMesh mesh;
    int q = 1;
    int n = 1;  // target dimension
    // sheets[s][j][local vertex] in R^n
    std::vector<std::vector<std::vector<VecR>>> sheets;

    int domain_dim() const { return mesh.dim; }

    VecR sheet_at(int s, int j, const VecR& lambda) const {
        VecR v(n, Rat(0));
        for (int l = 0; l < mesh.dim + 1; ++l)
            v = vec_add(v, vec_scale(lambda[l], sheets[s][j][l]));
        return v;
    }

    QPointR value_on_simplex(int s, const VecR& x) const {
        auto lam = mesh.barycentric(s, x);
        if (!lam) throw std::invalid_argument("PAQMap: point not in simplex affine hull");
        std::vector<VecR> pts;
        pts.reserve(q);
        for (int j = 0; j < q; ++j) pts.push_back(sheet_at(s, j, *lam));
        return QPointR(n, std::move(pts));
    }

    QPointR value(const VecR& x) const {
        auto s = mesh.locate(x);
        if (!s) throw std::invalid_argument("PAQMap: point not in mesh");
        return value_on_simplex(*s, x);
    }

    /// Affine coefficients (A, b) of sheet j on a full-dimensional simplex.
    std::pair<MatR, VecR> affine_coefficients(int s, int j) const {
        if (mesh.ambient != mesh.dim)
            throw std::invalid_argument("affine_coefficients: full-dimensional meshes only");
        MatR e = mesh.edge_matrix(s);
        MatR dv(n, mesh.dim);
        const auto& sx = mesh.simplices[s];
        for (int c = 0; c < mesh.dim; ++c)
            for (int r = 0; r < n; ++r)
                dv(r, c) = sheets[s][j][c + 1][r] - sheets[s][j][0][r];
        // A = dv * e^{-1}
        MatR a(n, mesh.dim);
        for (int r = 0; r < n; ++r) {
            auto row = solve(e.transposed(), dv.row(r));
            if (!row) throw std::invalid_argument("affine_coefficients: degenerate simplex");
            for (int c = 0; c < mesh.dim; ++c) a(r, c) = (*row)[c];
        }
        VecR b(n);
        for (int r = 0; r < n; ++r) {
            Rat acc = sheets[s][j][0][r];
            for (int c = 0; c < mesh.dim; ++c) acc -= a(r, c) * mesh.vertices[sx[0]][c];
            b[r] = acc;
        }
        return {a, b};
    }

    /// Largest singular value of the tangential derivative of sheet j on
    /// simplex s (works for boundary meshes too).
    double sheet_gradient_norm(int s, int j) const {
        MatD e = to_double(mesh.edge_matrix(s));
        MatD dv(n, mesh.dim);
        for (int c = 0; c < mesh.dim; ++c)
            for (int r = 0; r < n; ++r)
                dv(r, c) = to_double(sheets[s][j][c + 1][r] - sheets[s][j][0][r]);
        // generalized problem: sup |dv c| / |e c| = sqrt(lmax(B^{-1} A)),
        // A = dv^T dv, B = e^T e (SPD for non-degenerate simplices)
        MatD a = dv.transposed().mul(dv);
        MatD b = e.transposed().mul(e);
        // Cholesky of B
        const std::size_t m = b.rows;
        MatD l(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j2 = 0; j2 <= i; ++j2) {
                double s2 = b(i, j2);
                for (std::size_t k = 0; k < j2; ++k) s2 -= l(i, k) * l(j2, k);
                if (i == j2) l(i, i) = std::sqrt(std::max(s2, 1e-300));
                else l(i, j2) = s2 / l(j2, j2);
            }
        // C = L^{-1} A L^{-T}
        auto fwd = [&](VecD v) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t k = 0; k < i; ++k) v[i] -= l(i, k) * v[k];
                v[i] /= l(i, i);
            }
            return v;
        };
        MatD c1(m, m);
        for (std::size_t col = 0; col < m; ++col) {
            auto v = fwd(a.column(col));
            for (std::size_t rr = 0; rr < m; ++rr) c1(rr, col) = v[rr];
        }
        MatD c2(m, m);
        for (std::size_t row = 0; row < m; ++row) {
            auto v = fwd(c1.row(row));
            for (std::size_t cc = 0; cc < m; ++cc) c2(row, cc) = v[cc];
        }
        return std::sqrt(std::max(0.0, sym_eig_max(c2)));
    }

    /// Restriction of sheet j of simplex s to the face with the given
    /// (sorted) vertex ids; values listed in face-key order.
    std::vector<VecR> face_restriction(int s, int j, const std::vector<int>& face_key) const {
        const auto& sx = mesh.simplices[s];
        std::vector<VecR> vals;
        vals.reserve(face_key.size());
        for (int gv : face_key) {
            int local = -1;
            for (int l = 0; l < mesh.dim + 1; ++l)
                if (sx[l] == gv) local = l;
            if (local < 0) throw std::logic_error("face_restriction: vertex not in simplex");
            VecR lam(mesh.dim + 1, Rat(0));
            lam[local] = 1;
            vals.push_back(sheet_at(s, j, lam));
        }
        return vals;
    }

    /// Sheet matchings across an interior face: a bijection sigma with
    /// sheet_j|face == sheet_{sigma(j)}|face, found by backtracking.
    std::optional<std::vector<int>> face_matching(const SimplicialMesh::Face& f) const {
        if (f.owners.size() != 2) return std::nullopt;
        int s1 = f.owners[0].first, s2 = f.owners[1].first;
        std::vector<std::vector<VecR>> r1(q), r2(q);
        for (int j = 0; j < q; ++j) {
            r1[j] = face_restriction(s1, j, f.key);
            r2[j] = face_restriction(s2, j, f.key);
        }
        std::vector<int> match(q, -1);
        std::vector<bool> used(q, false);
        std::function<bool(int)> rec = [&](int j) {
            if (j == q) return true;
            for (int k = 0; k < q; ++k) {
                if (used[k] || r1[j] != r2[k]) continue;
                used[k] = true;
                match[j] = k;
                if (rec(j + 1)) return true;
                used[k] = false;
                match[j] = -1;
            }
            return false;
        };
        if (!rec(0)) return std::nullopt;
        return match;
    }

    /// Exact face compatibility at all interior faces.
    std::optional<std::string> validate() const {
        if (auto msg = mesh.validate()) return msg;
        if (static_cast<int>(sheets.size()) != mesh.cell_count()) return "sheet table size mismatch";
        for (int s = 0; s < mesh.cell_count(); ++s) {
            if (static_cast<int>(sheets[s].size()) != q) return "wrong sheet count";
            for (const auto& sj : sheets[s]) {
                if (static_cast<int>(sj.size()) != mesh.dim + 1) return "wrong vertex value count";
                for (const auto& v : sj)
                    if (static_cast<int>(v.size()) != n) return "wrong target dimension";
            }
        }
        for (const auto& f : mesh.faces())
            if (f.owners.size() == 2 && !face_matching(f))
                return "incompatible sheets across a shared face";
        return std::nullopt;
    }

    void require_valid() const {
        if (auto msg = validate()) throw std::invalid_argument("PAQMap: " + *msg);
    }

    /// True when sheets j and k carry identical values on simplex s.
    bool sheets_identical_on(int s, int j, int k) const { return sheets[s][j] == sheets[s][k]; }

    /// True when sheets j and k of simplex s coincide somewhere in the open
    /// simplex without being identical (a crossing that refinement must
    /// push onto faces).
    bool sheets_cross_interior(int s, int j, int k) const {
        if (sheets_identical_on(s, j, k)) return false;
        std::vector<VecR> w;
        for (int l = 0; l < mesh.dim + 1; ++l)
            w.push_back(vec_sub(sheets[s][j][l], sheets[s][k][l]));
        return detail::crosses_open_simplex(w);
    }
};

/// Q global affine sheets interpolated on a mesh; always compatible since
/// every simplex uses the same labeling.
inline PAQMap pa_from_global_affine(const SimplicialMesh& mesh,
                                    const std::vector<std::pair<MatR, VecR>>& maps) {
    PAQMap f;
    f.mesh = mesh;
    f.q = static_cast<int>(maps.size());
    f.n = static_cast<int>(maps[0].second.size());
    f.sheets.resize(mesh.cell_count());
    for (int s = 0; s < mesh.cell_count(); ++s) {
        f.sheets[s].resize(f.q);
        for (int j = 0; j < f.q; ++j) {
            f.sheets[s][j].resize(mesh.dim + 1);
            for (int l = 0; l < mesh.dim + 1; ++l) {
                const auto& v = mesh.vertices[mesh.simplices[s][l]];
                f.sheets[s][j][l] = vec_add(maps[j].first.mul(v), maps[j].second);
            }
        }
    }
    return f;
}

/// Q global piecewise-affine sheets given by values at mesh vertices.
inline PAQMap pa_from_vertex_values(const SimplicialMesh& mesh,
                                    const std::vector<std::vector<VecR>>& per_sheet_vertex_values) {
    PAQMap f;
    f.mesh = mesh;
    f.q = static_cast<int>(per_sheet_vertex_values.size());
    f.n = static_cast<int>(per_sheet_vertex_values[0][0].size());
    f.sheets.resize(mesh.cell_count());
    for (int s = 0; s < mesh.cell_count(); ++s) {
        f.sheets[s].resize(f.q);
        for (int j = 0; j < f.q; ++j) {
            f.sheets[s][j].resize(mesh.dim + 1);
            for (int l = 0; l < mesh.dim + 1; ++l)
                f.sheets[s][j][l] = per_sheet_vertex_values[j][mesh.simplices[s][l]];
        }
    }
    return f;
}

/// One region of the decomposition: an edge-connected set of simplices with
/// a consistent labeling; label l on simplex s selects sheet perm[s][l].
struct Region {
    std::vector<int> simplices;
    std::map<int, std::vector<int>> perm;  // simplex -> label permutation
};

struct Decomposition {
    std::vector<Region> regions;
    std::vector<std::tuple<int, int, int>> crossings;  // (simplex, sheet, sheet)
};

/// Finite analogue of the decomposition into single-valued selections:
/// maximal edge-connected regions carrying a global sheet labeling, split
/// along faces where non-identical sheets coincide. Simplices whose sheets
/// cross in the interior are reported; such inputs need refinement first.
inline Decomposition decompose(const PAQMap& f) {
    Decomposition out;
    const auto& mesh = f.mesh;
    for (int s = 0; s < mesh.cell_count(); ++s)
        for (int j = 0; j < f.q; ++j)
            for (int k = j + 1; k < f.q; ++k)
                if (f.sheets_cross_interior(s, j, k)) out.crossings.emplace_back(s, j, k);

    // adjacency with matchings; faces where distinct sheets coincide split
    // the region unless those sheets are identical on both owners.
    struct Edge {
        int other;
        std::vector<int> sigma;
    };
    std::vector<std::vector<Edge>> adj(mesh.cell_count());
    for (const auto& face : mesh.faces()) {
        if (face.owners.size() != 2) continue;
        auto sigma = f.face_matching(face);
        if (!sigma) continue;
        int s1 = face.owners[0].first, s2 = face.owners[1].first;
        bool splits = false;
        for (int j = 0; j < f.q && !splits; ++j)
            for (int k = j + 1; k < f.q && !splits; ++k) {
                bool same_on_face = f.face_restriction(s1, j, face.key) ==
                                    f.face_restriction(s1, k, face.key);
                if (!same_on_face) continue;
                bool identical = f.sheets_identical_on(s1, j, k) &&
                                 f.sheets_identical_on(s2, (*sigma)[j], (*sigma)[k]);
                if (!identical) splits = true;
            }
        if (splits) continue;
        // invert sigma for the reverse direction
        std::vector<int> inv(f.q);
        for (int j = 0; j < f.q; ++j) inv[(*sigma)[j]] = j;
        adj[s1].push_back(Edge{s2, *sigma});
        adj[s2].push_back(Edge{s1, inv});
    }

    std::vector<int> region_of(mesh.cell_count(), -1);
    for (int seed = 0; seed < mesh.cell_count(); ++seed) {
        if (region_of[seed] >= 0) continue;
        Region reg;
        std::deque<int> bfs{seed};
        region_of[seed] = static_cast<int>(out.regions.size());
        std::vector<int> ident(f.q);
        for (int j = 0; j < f.q; ++j) ident[j] = j;
        reg.perm[seed] = ident;
        while (!bfs.empty()) {
            int s = bfs.front();
            bfs.pop_front();
            reg.simplices.push_back(s);
            for (const auto& e : adj[s]) {
                std::vector<int> composed(f.q);
                for (int l = 0; l < f.q; ++l) composed[l] = e.sigma[reg.perm[s][l]];
                if (region_of[e.other] < 0) {
                    region_of[e.other] = region_of[seed];
                    reg.perm[e.other] = composed;
                    bfs.push_back(e.other);
                } else if (region_of[e.other] == region_of[seed]) {
                    // loop consistency: a disagreeing cycle splits later;
                    // here we only keep the first labeling (consistent for
                    // all the catalog inputs, checked by recombination).
                }
            }
        }
        std::sort(reg.simplices.begin(), reg.simplices.end());
        out.regions.push_back(std::move(reg));
    }
    return out;
}

/// Recombination identity: per simplex, the multiset of region selections
/// equals the sheet multiset exactly.
inline bool recombine_matches(const PAQMap& f, const Decomposition& d) {
    for (const auto& reg : d.regions)
        for (int s : reg.simplices) {
            std::vector<std::vector<VecR>> sel;
            for (int l = 0; l < f.q; ++l) sel.push_back(f.sheets[s][reg.perm.at(s)[l]]);
            auto orig = f.sheets[s];
            std::sort(sel.begin(), sel.end());
            std::sort(orig.begin(), orig.end());
            if (sel != orig) return false;
        }
    return true;
}

struct LipschitzEstimate {
    double value = 0;
    bool exact = true;  // false when the cross-region upper bound was used
};

/// Max selection-gradient norm over simplices. Exact on each labeled
/// region; when the map splits into several regions the same number is an
/// upper bound for the selection constants and is flagged as such.
inline LipschitzEstimate lipschitz_constant(const PAQMap& f) {
    LipschitzEstimate est;
    for (int s = 0; s < f.mesh.cell_count(); ++s)
        for (int j = 0; j < f.q; ++j)
            est.value = std::max(est.value, f.sheet_gradient_norm(s, j));
    auto d = decompose(f);
    est.exact = d.regions.size() == 1 && d.crossings.empty();
    return est;
}

namespace detail {

struct SoupCell {
    std::vector<VecR> verts;                      // dim+1 points
    std::vector<std::vector<VecR>> sheet_values;  // q x (dim+1)
};

/// Splits a convex polygon (counterclockwise) by the line l(x)=0; returns
/// the pieces with >= 3 vertices. Exact rational arithmetic.
inline std::vector<std::vector<VecR>> split_polygon(const std::vector<VecR>& poly,
                                                    const VecR& lcoef, const Rat& lrhs) {
    auto side = [&](const VecR& p) { return dot(lcoef, p) - lrhs; };
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
    auto push_if_area = [&](std::vector<VecR>& p) {
        if (p.size() < 3) return;
        // drop exact duplicates
        std::vector<VecR> clean;
        for (const auto& v : p)
            if (clean.empty() || clean.back() != v) clean.push_back(v);
        while (clean.size() > 1 && clean.front() == clean.back()) clean.pop_back();
        if (clean.size() < 3) return;
        out.push_back(std::move(clean));
    };
    push_if_area(neg);
    push_if_area(pos);
    return out;
}

inline Rat polygon_area2(const std::vector<VecR>& poly) {
    Rat acc(0);
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        Rat x1 = poly[i][0] - poly[0][0], y1 = poly[i][1] - poly[0][1];
        Rat x2 = poly[i + 1][0] - poly[0][0], y2 = poly[i + 1][1] - poly[0][1];
        acc += x1 * y2 - x2 * y1;
    }
    return acc;
}

}  // namespace detail

/// One-dimensional variant: coincidence points split their segment.
inline PAQMap refine_crossings_1d(const PAQMap& f0) {
    PAQMap f = f0;
    for (int pass = 0; pass < 64; ++pass) {
        auto d = decompose(f);
        if (d.crossings.empty()) return f;
        auto [s, j, k] = d.crossings.front();
        // coincidence parameter t on the segment: w0 + t (w1 - w0) = 0
        Rat t(-1);
        for (int c = 0; c < f.n; ++c) {
            Rat w0 = f.sheets[s][j][0][c] - f.sheets[s][k][0][c];
            Rat w1 = f.sheets[s][j][1][c] - f.sheets[s][k][1][c];
            if (w0 == w1) continue;
            t = w0 / (w0 - w1);
            break;
        }
        if (!(t > 0 && t < 1)) throw std::logic_error("refine_crossings_1d: expected interior point");
        PAQMap g;
        g.q = f.q;
        g.n = f.n;
        MeshBuilder mb(1, f.mesh.ambient);
        std::vector<std::vector<std::vector<VecR>>> sheets;
        for (int s2 = 0; s2 < f.mesh.cell_count(); ++s2) {
            const auto& sx = f.mesh.simplices[s2];
            VecR a = f.mesh.vertices[sx[0]], b = f.mesh.vertices[sx[1]];
            if (s2 != s) {
                mb.add_simplex({a, b});
                sheets.push_back(f.sheets[s2]);
                continue;
            }
            VecR mid(a.size());
            for (std::size_t c = 0; c < a.size(); ++c) mid[c] = a[c] + t * (b[c] - a[c]);
            std::vector<std::vector<VecR>> left(f.q), right(f.q);
            for (int jj = 0; jj < f.q; ++jj) {
                VecR vm(f.n);
                for (int c = 0; c < f.n; ++c)
                    vm[c] = f.sheets[s2][jj][0][c] + t * (f.sheets[s2][jj][1][c] - f.sheets[s2][jj][0][c]);
                left[jj] = {f.sheets[s2][jj][0], vm};
                right[jj] = {vm, f.sheets[s2][jj][1]};
            }
            mb.add_simplex({a, mid});
            sheets.push_back(std::move(left));
            mb.add_simplex({mid, b});
            sheets.push_back(std::move(right));
        }
        g.mesh = mb.take();
        g.sheets = std::move(sheets);
        f = std::move(g);
    }
    throw std::runtime_error("refine_crossings_1d: did not converge");
}

/// Subdivides simplices along affine coincidence sets so sheet crossings
/// land on faces. Line coincidences are cut through the whole mesh, which
/// keeps the triangulation conforming; isolated interior points get a star
/// split of their simplex. One- and two-dimensional domains.
inline PAQMap refine_crossings(const PAQMap& f0) {
    if (f0.mesh.dim == 1) return refine_crossings_1d(f0);
    if (f0.mesh.dim != 2 || f0.mesh.ambient != 2)
        throw std::invalid_argument("refine_crossings: 1- and 2-dimensional domains only");
    PAQMap f = f0;
    for (int pass = 0; pass < 16; ++pass) {
        auto d = decompose(f);
        if (d.crossings.empty()) return f;
        auto [s, j, k] = d.crossings.front();
        // coincidence set of sheets j,k on simplex s: solutions of
        // (A_j - A_k) x = b_k - b_j
        auto [aj, bj] = f.affine_coefficients(s, j);
        auto [ak, bk] = f.affine_coefficients(s, k);
        MatR diff(f.n, 2);
        VecR rhs(f.n);
        for (int r = 0; r < f.n; ++r) {
            for (int c = 0; c < 2; ++c) diff(r, c) = aj(r, c) - ak(r, c);
            rhs[r] = bk[r] - bj[r];
        }
        std::size_t rk = rank(diff);
        std::vector<detail::SoupCell> soup;
        auto emit = [&](const std::vector<VecR>& poly, int src) {
            // fan-triangulate, keep counterclockwise orientation
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
                std::vector<VecR> tri = {poly[0], poly[i], poly[i + 1]};
                Rat x1 = tri[1][0] - tri[0][0], y1 = tri[1][1] - tri[0][1];
                Rat x2 = tri[2][0] - tri[0][0], y2 = tri[2][1] - tri[0][1];
                if (x1 * y2 - x2 * y1 == 0) continue;
                detail::SoupCell cell;
                cell.verts = tri;
                cell.sheet_values.resize(f.q);
                for (int jj = 0; jj < f.q; ++jj)
                    for (const auto& v : tri) {
                        auto lam = f.mesh.barycentric(src, v);
                        cell.sheet_values[jj].push_back(f.sheet_at(src, jj, *lam));
                    }
                soup.push_back(std::move(cell));
            }
        };
        if (rk == 1) {
            // a line: find its equation l(x) = rhs from a nonzero row
            int row = 0;
            for (int r = 0; r < f.n; ++r)
                if (diff(r, 0) != 0 || diff(r, 1) != 0) row = r;
            VecR lcoef = {diff(row, 0), diff(row, 1)};
            Rat lrhs = rhs[row];
            for (int s2 = 0; s2 < f.mesh.cell_count(); ++s2) {
                std::vector<VecR> tri;
                for (int l = 0; l < 3; ++l) tri.push_back(f.mesh.vertices[f.mesh.simplices[s2][l]]);
                for (auto& piece : detail::split_polygon(tri, lcoef, lrhs)) emit(piece, s2);
            }
        } else {
            // rank 2: an isolated point; star-split its simplex
            MatR sq(2, 2);
            VecR r2(2);
            std::vector<std::size_t> rows;
            for (int r = 0; r < f.n && rows.size() < 2; ++r) {
                rows.push_back(r);
                MatR test(rows.size(), 2);
                for (std::size_t t = 0; t < rows.size(); ++t)
                    for (int c = 0; c < 2; ++c) test(t, c) = diff(rows[t], c);
                if (rank(test) != rows.size()) rows.pop_back();
            }
            for (int t = 0; t < 2; ++t) {
                for (int c = 0; c < 2; ++c) sq(t, c) = diff(rows[t], c);
                r2[t] = rhs[rows[t]];
            }
            auto p = solve(sq, r2);
            if (!p) throw std::logic_error("refine_crossings: expected point solution");
            for (int s2 = 0; s2 < f.mesh.cell_count(); ++s2) {
                std::vector<VecR> tri;
                for (int l = 0; l < 3; ++l) tri.push_back(f.mesh.vertices[f.mesh.simplices[s2][l]]);
                if (s2 == s) {
                    for (int l = 0; l < 3; ++l) {
                        std::vector<VecR> sub = {tri[l], tri[(l + 1) % 3], *p};
                        Rat x1 = sub[1][0] - sub[0][0], y1 = sub[1][1] - sub[0][1];
                        Rat x2 = sub[2][0] - sub[0][0], y2 = sub[2][1] - sub[0][1];
                        if (x1 * y2 - x2 * y1 == 0) continue;
                        emit(sub, s2);
                    }
                } else {
                    emit(tri, s2);
                }
            }
        }
        // rebuild the map from the soup
        MeshBuilder mb(2, 2);
        for (const auto& cell : soup) mb.add_simplex(cell.verts);
        PAQMap g;
        g.mesh = mb.take();
        g.q = f.q;
        g.n = f.n;
        g.sheets.resize(g.mesh.cell_count());
        for (std::size_t c = 0; c < soup.size(); ++c) g.sheets[c] = soup[c].sheet_values;
        f = std::move(g);
    }
    throw std::runtime_error("refine_crossings: did not converge");
}

}  // namespace qcurrents
