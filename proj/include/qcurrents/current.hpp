#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/linalg.hpp"
#include "qcurrents/mesh.hpp"
#include "qcurrents/paqmap.hpp"
#include "qcurrents/polynomial.hpp"
#include "qcurrents/quadrature.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

/// Integer rectifiable current carried by finitely many oriented rational
/// m-simplices. Cells are stored under a canonical key (vertices sorted
/// lexicographically) with the orientation folded into the sign of the
/// integer multiplicity, so chain identities hold bit-exactly: merging,
/// boundary and cancellation never touch floating point.
struct SimplicialCurrent {
    int dim = 0;
    int ambient = 0;
    std::map<std::vector<VecR>, long long> cells;
    long long degenerate_dropped = 0;

    SimplicialCurrent() = default;
    SimplicialCurrent(int d, int amb) : dim(d), ambient(amb) {}

    bool empty() const { return cells.empty(); }
    std::size_t cell_count() const { return cells.size(); }

    /// Adds an oriented cell given by vertices in order; canonicalizes and
    /// merges. Degenerate cells (affinely dependent vertices) carry no mass
    /// and are dropped.
    void add_cell(std::vector<VecR> verts, long long mult) {
        if (mult == 0) return;
        if (static_cast<int>(verts.size()) != dim + 1)
            throw std::invalid_argument("add_cell: wrong arity");
        int parity = sort_parity(verts);
        if (parity == 0) {
            ++degenerate_dropped;  // repeated vertex
            return;
        }
        std::sort(verts.begin(), verts.end());
        if (dim > 0) {
            MatR e(ambient, dim);
            for (int j = 0; j < dim; ++j)
                for (int i = 0; i < ambient; ++i) e(i, j) = verts[j + 1][i] - verts[0][i];
            if (rank(e) < static_cast<std::size_t>(dim)) {
                ++degenerate_dropped;
                return;
            }
        }
        auto it = cells.find(verts);
        long long add = mult * parity;
        if (it == cells.end()) {
            cells.emplace(std::move(verts), add);
        } else {
            it->second += add;
            if (it->second == 0) cells.erase(it);
        }
    }

    SimplicialCurrent operator+(const SimplicialCurrent& o) const {
        SimplicialCurrent r = *this;
        for (const auto& [k, m] : o.cells) {
            auto it = r.cells.find(k);
            if (it == r.cells.end()) r.cells.emplace(k, m);
            else {
                it->second += m;
                if (it->second == 0) r.cells.erase(it);
            }
        }
        return r;
    }

    SimplicialCurrent operator-() const {
        SimplicialCurrent r = *this;
        for (auto& [k, m] : r.cells) m = -m;
        return r;
    }

    SimplicialCurrent operator-(const SimplicialCurrent& o) const { return *this + (-o); }

    bool same_cells(const SimplicialCurrent& o) const { return cells == o.cells; }

    double cell_volume(const std::vector<VecR>& verts) const {
        if (dim == 0) return 1.0;
        MatD e(ambient, dim);
        for (int j = 0; j < dim; ++j)
            for (int i = 0; i < ambient; ++i) e(i, j) = to_double(verts[j + 1][i] - verts[0][i]);
        return gram_volume(e) / factorial(dim);
    }

    /// Mass: sum of |multiplicity| * volume.
    double mass() const {
        double acc = 0;
        for (const auto& [verts, mult] : cells)
            acc += std::abs(static_cast<double>(mult)) * cell_volume(verts);
        return acc;
    }
};

/// Alternating-sign face extraction; interior faces cancel exactly in the
/// canonical-key merge. Faces of non-degenerate cells are non-degenerate.
inline SimplicialCurrent boundary(const SimplicialCurrent& t) {
    if (t.dim < 1) throw std::invalid_argument("boundary: dimension must be >= 1");
    SimplicialCurrent b(t.dim - 1, t.ambient);
    for (const auto& [verts, mult] : t.cells) {
        for (int i = 0; i <= t.dim; ++i) {
            std::vector<VecR> face;
            face.reserve(t.dim);
            for (int j = 0; j <= t.dim; ++j)
                if (j != i) face.push_back(verts[j]);
            // verts are sorted, so each face is already canonical
            auto it = b.cells.find(face);
            long long add = (i % 2 ? -mult : mult);
            if (it == b.cells.end()) b.cells.emplace(std::move(face), add);
            else {
                it->second += add;
                if (it->second == 0) b.cells.erase(it);
            }
        }
    }
    return b;
}

/// Raw (pre-merge) image cell of a push-forward, for diagnostics such as
/// the no-cancellation predicate.
struct ImageCell {
    std::vector<VecR> verts;  // in domain-vertex order
    int source_simplex = 0;
    int source_sheet = 0;
};

/// Push-forward of the oriented mesh through each affine sheet: one image
/// simplex per (simplex, sheet) with multiplicity +1 in the listed
/// orientation; cells merge by canonical key with signed multiplicities.
inline SimplicialCurrent push_forward(const PAQMap& f, std::vector<ImageCell>* raw = nullptr) {
    SimplicialCurrent t(f.mesh.dim, f.n);
    for (int s = 0; s < f.mesh.cell_count(); ++s)
        for (int j = 0; j < f.q; ++j) {
            std::vector<VecR> img;
            img.reserve(f.mesh.dim + 1);
            for (int l = 0; l < f.mesh.dim + 1; ++l) img.push_back(f.sheets[s][j][l]);
            if (raw) raw->push_back(ImageCell{img, s, j});
            t.add_cell(std::move(img), 1);
        }
    return t;
}

/// Current carried by the graph x -> sum_i [[(x, f_i(x))]], oriented so the
/// domain orientation projects positively.
inline SimplicialCurrent graph_current(const PAQMap& f, std::vector<ImageCell>* raw = nullptr) {
    SimplicialCurrent t(f.mesh.dim, f.mesh.ambient + f.n);
    for (int s = 0; s < f.mesh.cell_count(); ++s) {
        const auto& sx = f.mesh.simplices[s];
        for (int j = 0; j < f.q; ++j) {
            std::vector<VecR> img;
            img.reserve(f.mesh.dim + 1);
            for (int l = 0; l < f.mesh.dim + 1; ++l) {
                VecR p = f.mesh.vertices[sx[l]];
                const VecR& v = f.sheets[s][j][l];
                p.insert(p.end(), v.begin(), v.end());
                img.push_back(std::move(p));
            }
            if (raw) raw->push_back(ImageCell{img, s, j});
            t.add_cell(std::move(img), 1);
        }
    }
    return t;
}

/// Push-forward of the restriction of f to the marked boundary faces, with
/// the induced orientation; the right-hand side of the commutation check.
inline SimplicialCurrent boundary_restriction_current(const PAQMap& f) {
    SimplicialCurrent t(f.mesh.dim - 1, f.n);
    for (const auto& face : f.mesh.boundary_faces()) {
        auto [s, sign] = face.owners[0];
        for (int j = 0; j < f.q; ++j)
            t.add_cell(f.face_restriction(s, j, face.key), sign);
    }
    return t;
}

/// Same for the graph map x -> (x, f(x)).
inline SimplicialCurrent graph_boundary_restriction_current(const PAQMap& f) {
    SimplicialCurrent t(f.mesh.dim - 1, f.mesh.ambient + f.n);
    for (const auto& face : f.mesh.boundary_faces()) {
        auto [s, sign] = face.owners[0];
        for (int j = 0; j < f.q; ++j) {
            auto vals = f.face_restriction(s, j, face.key);
            std::vector<VecR> img;
            for (std::size_t l = 0; l < face.key.size(); ++l) {
                VecR p = f.mesh.vertices[face.key[l]];
                p.insert(p.end(), vals[l].begin(), vals[l].end());
                img.push_back(std::move(p));
            }
            t.add_cell(std::move(img), sign);
        }
    }
    return t;
}

struct CommutationReport {
    bool exact = false;
    bool used_overlay = false;  // degenerate image cells forced a
                                // retriangulation-invariant comparison
    // canonical cells where the two sides disagree: key -> (lhs mult, rhs mult)
    std::vector<std::tuple<std::vector<VecR>, long long, long long>> mismatches;

    std::string describe() const {
        if (exact) return used_overlay ? "exact: true (overlay)" : "exact: true";
        std::ostringstream os;
        os << "exact: false, mismatched cells: " << mismatches.size();
        return os.str();
    }
};

inline CommutationReport compare_cells(const SimplicialCurrent& lhs, const SimplicialCurrent& rhs) {
    CommutationReport rep;
    auto it1 = lhs.cells.begin();
    auto it2 = rhs.cells.begin();
    while (it1 != lhs.cells.end() || it2 != rhs.cells.end()) {
        if (it2 == rhs.cells.end() || (it1 != lhs.cells.end() && it1->first < it2->first)) {
            rep.mismatches.emplace_back(it1->first, it1->second, 0);
            ++it1;
        } else if (it1 == lhs.cells.end() || it2->first < it1->first) {
            rep.mismatches.emplace_back(it2->first, 0, it2->second);
            ++it2;
        } else {
            if (it1->second != it2->second)
                rep.mismatches.emplace_back(it1->first, it1->second, it2->second);
            ++it1;
            ++it2;
        }
    }
    rep.exact = rep.mismatches.empty();
    return rep;
}

/// Boundary commutation for the graph current: graph cells of a valid mesh
/// are never degenerate, so the two chains must agree cell by cell.
inline CommutationReport verify_graph_boundary_commutation(const PAQMap& f) {
    return compare_cells(boundary(graph_current(f)), graph_boundary_restriction_current(f));
}

/// m-form on R^N with polynomial coefficients, one per increasing
/// multi-index.
struct PolynomialForm {
    int ambient = 0;
    int degree = 0;  // all components, one per increasing index tuple
    std::map<std::vector<std::size_t>, Polynomial> comps;

    static PolynomialForm make(int ambient) { return PolynomialForm{ambient, 0, {}}; }

    void set(std::vector<std::size_t> idx, Polynomial p) {
        if (!std::is_sorted(idx.begin(), idx.end()))
            throw std::invalid_argument("PolynomialForm: indices must be increasing");
        degree = std::max(degree, p.degree());
        comps[std::move(idx)] = std::move(p);
    }
};

/// Integral of the form over the current: sum over cells of
/// mult * integral of <omega, tau> by exact-degree simplex quadrature.
inline double evaluate(const SimplicialCurrent& t, const PolynomialForm& omega) {
    if (omega.ambient != t.ambient) throw std::invalid_argument("evaluate: ambient mismatch");
    const auto& rule = simplex_rule(t.dim, omega.degree);
    double acc = 0;
    for (const auto& [verts, mult] : t.cells) {
        MatD e(t.ambient, t.dim);
        for (int j = 0; j < t.dim; ++j)
            for (int i = 0; i < t.ambient; ++i) e(i, j) = to_double(verts[j + 1][i] - verts[0][i]);
        VecD v0 = to_double(verts[0]);
        for (const auto& [idx, poly] : omega.comps) {
            MatD ei(t.dim, t.dim);
            for (int r = 0; r < t.dim; ++r)
                for (int c = 0; c < t.dim; ++c) ei(r, c) = e(idx[r], c);
            double d = det(ei);
            if (d == 0) continue;
            double integral = 0;
            for (const auto& qn : rule) {
                VecD x = v0;
                for (int i = 0; i < t.ambient; ++i)
                    for (int c = 0; c < t.dim; ++c) x[i] += e(i, c) * qn.x[c];
                integral += qn.w * poly.eval(x);
            }
            acc += mult * d * integral;
        }
    }
    return acc;
}

/// Right-hand side of the area formula: integral over the domain of
/// sum_j h(F_j(x)) J F_j(x), exact-degree quadrature per simplex. With
/// h == 1 this is the total-variation upper bound for the mass.
inline double area_formula_mass(const PAQMap& f, const Polynomial* h = nullptr) {
    if (f.mesh.ambient != f.mesh.dim)
        throw std::invalid_argument("area_formula_mass: full-dimensional domains only");
    const int m = f.mesh.dim;
    int hdeg = h ? h->degree() : 0;
    const auto& rule = simplex_rule(m, hdeg);
    double acc = 0;
    for (int s = 0; s < f.mesh.cell_count(); ++s) {
        MatD e = to_double(f.mesh.edge_matrix(s));
        double dete = std::abs(det(e));
        for (int j = 0; j < f.q; ++j) {
            // jacobian of the affine sheet: columns are value differences
            MatD dv(f.n, m);
            for (int c = 0; c < m; ++c)
                for (int r = 0; r < f.n; ++r)
                    dv(r, c) = to_double(f.sheets[s][j][c + 1][r] - f.sheets[s][j][0][r]);
            // derivative wrt domain coordinates: dv * e^{-1}; jacobian factor
            // J = sqrt(det(A^T A)) with A = dv e^{-1}
            MatD einv(m, m);
            {
                MatD id = MatD::identity(m);
                for (int c = 0; c < m; ++c) {
                    auto col = solve(e, id.column(c));
                    if (!col) throw std::invalid_argument("area_formula_mass: degenerate simplex");
                    for (int r = 0; r < m; ++r) einv(r, c) = (*col)[r];
                }
            }
            MatD a = dv.mul(einv);
            double jac = gram_volume(a);
            if (!h) {
                acc += jac * dete / factorial(m);
                continue;
            }
            double integral = 0;
            VecD v0 = to_double(f.mesh.vertices[f.mesh.simplices[s][0]]);
            MatD ed = e;
            for (const auto& qn : rule) {
                // x = v0 + E lambda; value = sheet(v0) + dv lambda
                VecD val(f.n);
                for (int r = 0; r < f.n; ++r) {
                    val[r] = to_double(f.sheets[s][j][0][r]);
                    for (int c = 0; c < m; ++c) val[r] += dv(r, c) * qn.x[c];
                }
                integral += qn.w * h->eval(val);
            }
            acc += jac * dete * integral;
        }
    }
    return acc;
}

struct NoCancellationReport {
    bool holds = true;
    // pairs of raw image cells with conflicting orientations on an overlap
    std::vector<std::pair<ImageCell, ImageCell>> violations;
};

/// Cone-like extension of boundary data u on the loop around x0 to the
/// full square: the radial map scaled by the sup-norm distance, realized
/// exactly as the simplicial join with vertex value 0 at the center. The
/// boundary segments must not straddle cube corners (loops built per side
/// satisfy this), so the join coincides with the radial formula.
inline PAQMap cone_extend(const PAQMap& u, const VecR& center) {
    if (u.mesh.dim != 1) throw std::invalid_argument("cone_extend: boundary data must be 1-dimensional");
    PAQMap g;
    g.mesh = cone_mesh(u.mesh, center);
    g.q = u.q;
    g.n = u.n;
    g.sheets.resize(g.mesh.cell_count());
    VecR zero(u.n, Rat(0));
    for (int s = 0; s < u.mesh.cell_count(); ++s) {
        g.sheets[s].resize(g.q);
        for (int j = 0; j < g.q; ++j)
            g.sheets[s][j] = {zero, u.sheets[s][j][0], u.sheets[s][j][1]};
    }
    return g;
}

}  // namespace qcurrents
