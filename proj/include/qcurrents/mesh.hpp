#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/linalg.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

/// Parity sign of the permutation sorting `v` (+1 even, -1 odd);
/// 0 when two entries coincide.
template <class T>
int sort_parity(std::vector<T> v) {
    int sign = 1;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            if (v[j] < v[i]) {
                std::swap(v[i], v[j]);
                sign = -sign;
            } else if (v[j] == v[i]) {
                return 0;
            }
        }
    return sign;
}

/// Oriented simplicial complex with exact rational vertex coordinates.
/// `dim` is the simplex dimension m; `ambient` may exceed m (boundary
/// meshes live in the coordinates of the enclosing space). Every interior
/// face must be shared by exactly two simplices with opposite induced
/// orientations.
struct SimplicialMesh {
    int dim = 0;
    int ambient = 0;
    std::vector<VecR> vertices;
    std::vector<std::vector<int>> simplices;  // dim+1 vertex indices, oriented

    int cell_count() const { return static_cast<int>(simplices.size()); }

    VecR vertex(int i) const { return vertices[i]; }

    /// Edge matrix (ambient x dim) of simplex s: columns v_i - v_0.
    MatR edge_matrix(int s) const {
        const auto& sx = simplices[s];
        MatR e(ambient, dim);
        for (int j = 0; j < dim; ++j)
            for (int i = 0; i < ambient; ++i)
                e(i, j) = vertices[sx[j + 1]][i] - vertices[sx[0]][i];
        return e;
    }

    bool simplex_degenerate(int s) const { return rank(edge_matrix(s)) < static_cast<std::size_t>(dim); }

    /// Barycentric coordinates of x in simplex s (exact). Empty if x is not
    /// in the affine hull (only possible when ambient > dim).
    std::optional<VecR> barycentric(int s, const VecR& x) const {
        const auto& sx = simplices[s];
        MatR a(ambient + 1, dim + 1);
        VecR rhs(ambient + 1);
        for (int j = 0; j <= dim; ++j) {
            for (int i = 0; i < ambient; ++i) a(i, j) = vertices[sx[j]][i];
            a(ambient, j) = 1;
        }
        for (int i = 0; i < ambient; ++i) rhs[i] = x[i];
        rhs[ambient] = 1;
        if (ambient == dim) {
            MatR sq(dim + 1, dim + 1);
            VecR r2(dim + 1);
            for (int i = 0; i <= dim; ++i) {
                for (int j = 0; j <= dim; ++j) sq(i, j) = a(i, j);
                r2[i] = rhs[i];
            }
            return solve(sq, r2);
        }
        // Overdetermined: solve the square subsystem given by dim+1
        // independent rows, then verify the rest.
        MatR sq(dim + 1, dim + 1);
        VecR r2(dim + 1);
        std::vector<int> rows;
        {
            MatR probe(0, 0);
            // pick rows greedily to reach full rank
            std::vector<std::vector<Rat>> chosen;
            for (int i = 0; i <= ambient && static_cast<int>(rows.size()) <= dim; ++i) {
                std::vector<Rat> cand(dim + 1);
                for (int j = 0; j <= dim; ++j) cand[j] = a(i, j);
                chosen.push_back(cand);
                MatR test(chosen.size(), dim + 1);
                for (std::size_t r = 0; r < chosen.size(); ++r)
                    for (int j = 0; j <= dim; ++j) test(r, j) = chosen[r][j];
                if (rank(test) == chosen.size()) rows.push_back(i);
                else chosen.pop_back();
            }
        }
        if (static_cast<int>(rows.size()) != dim + 1) return std::nullopt;
        for (int i = 0; i <= dim; ++i) {
            for (int j = 0; j <= dim; ++j) sq(i, j) = a(rows[i], j);
            r2[i] = rhs[rows[i]];
        }
        auto lam = solve(sq, r2);
        if (!lam) return std::nullopt;
        // verify remaining equations
        for (int i = 0; i <= ambient; ++i) {
            Rat acc(0);
            for (int j = 0; j <= dim; ++j) acc += a(i, j) * (*lam)[j];
            if (acc != rhs[i]) return std::nullopt;
        }
        return lam;
    }

    bool contains(int s, const VecR& x) const {
        auto lam = barycentric(s, x);
        if (!lam) return false;
        for (const auto& l : *lam)
            if (l < 0) return false;
        return true;
    }

    /// Locates a simplex containing x (first match).
    std::optional<int> locate(const VecR& x) const {
        for (int s = 0; s < cell_count(); ++s)
            if (contains(s, x)) return s;
        return std::nullopt;
    }

    struct Face {
        std::vector<int> key;                      // sorted vertex indices
        std::vector<std::pair<int, int>> owners;   // (simplex, induced sign)
    };

    /// All (dim-1)-faces with induced orientation signs. The induced face
    /// opposite local vertex i carries sign (-1)^i times the parity of the
    /// sort that canonicalizes the remaining tuple.
    std::vector<Face> faces() const {
        std::map<std::vector<int>, std::vector<std::pair<int, int>>> acc;
        for (int s = 0; s < cell_count(); ++s) {
            const auto& sx = simplices[s];
            for (int i = 0; i <= dim; ++i) {
                std::vector<int> f;
                for (int j = 0; j <= dim; ++j)
                    if (j != i) f.push_back(sx[j]);
                int sign = (i % 2 ? -1 : 1) * sort_parity(f);
                std::sort(f.begin(), f.end());
                acc[f].emplace_back(s, sign);
            }
        }
        std::vector<Face> out;
        out.reserve(acc.size());
        for (auto& [k, o] : acc) out.push_back(Face{k, std::move(o)});
        return out;
    }

    /// Boundary faces: owned by exactly one simplex.
    std::vector<Face> boundary_faces() const {
        std::vector<Face> out;
        for (auto& f : faces())
            if (f.owners.size() == 1) out.push_back(f);
        return out;
    }

    /// Checks non-degeneracy and interior-face orientation consistency.
    /// Returns an explanatory message on failure.
    std::optional<std::string> validate() const {
        for (auto& v : vertices)
            if (static_cast<int>(v.size()) != ambient) return "vertex with wrong ambient dimension";
        for (int s = 0; s < cell_count(); ++s) {
            if (static_cast<int>(simplices[s].size()) != dim + 1) return "simplex with wrong arity";
            if (simplex_degenerate(s)) return "degenerate simplex " + std::to_string(s);
        }
        for (auto& f : faces()) {
            if (f.owners.size() > 2) return "face shared by more than two simplices";
            if (f.owners.size() == 2 && f.owners[0].second + f.owners[1].second != 0)
                return "interior face with non-opposite induced orientations";
        }
        return std::nullopt;
    }

    void require_valid() const {
        if (auto msg = validate()) throw std::invalid_argument("mesh: " + *msg);
    }
};

/// Exact vertex dedup builder for meshes assembled from cell soups.
class MeshBuilder {
public:
    MeshBuilder(int dim, int ambient) : mesh_{dim, ambient, {}, {}} {}

    int add_vertex(const VecR& v) {
        auto it = index_.find(v);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(mesh_.vertices.size());
        mesh_.vertices.push_back(v);
        index_[v] = id;
        return id;
    }

    void add_simplex(const std::vector<VecR>& verts) {
        std::vector<int> ids;
        ids.reserve(verts.size());
        for (const auto& v : verts) ids.push_back(add_vertex(v));
        mesh_.simplices.push_back(std::move(ids));
    }

    SimplicialMesh take() { return std::move(mesh_); }

private:
    SimplicialMesh mesh_;
    std::map<VecR, int> index_;
};

/// k x k grid on the rational box [x0,x1] x [y0,y1], two triangles per
/// cell, counterclockwise.
inline SimplicialMesh box_mesh_2d(const Rat& x0, const Rat& y0, const Rat& x1, const Rat& y1,
                                  int k) {
    SimplicialMesh m;
    m.dim = 2;
    m.ambient = 2;
    Rat dx = (x1 - x0) / k, dy = (y1 - y0) / k;
    for (int j = 0; j <= k; ++j)
        for (int i = 0; i <= k; ++i) m.vertices.push_back({x0 + dx * i, y0 + dy * j});
    auto id = [k](int i, int j) { return j * (k + 1) + i; };
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) {
            m.simplices.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.simplices.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return m;
}

inline SimplicialMesh unit_square_mesh(int k = 1) {
    return box_mesh_2d(Rat(0), Rat(0), Rat(1), Rat(1), k);
}

/// k segments on [a,b], oriented left to right.
inline SimplicialMesh interval_mesh(const Rat& a, const Rat& b, int k) {
    SimplicialMesh m;
    m.dim = 1;
    m.ambient = 1;
    Rat d = (b - a) / k;
    for (int i = 0; i <= k; ++i) m.vertices.push_back({a + d * i});
    for (int i = 0; i < k; ++i) m.simplices.push_back({i, i + 1});
    return m;
}

/// Counterclockwise boundary loop of the square [cx-r,cx+r] x [cy-r,cy+r],
/// k segments per side; a 1-dimensional mesh in the plane.
inline SimplicialMesh square_boundary_loop(const Rat& cx, const Rat& cy, const Rat& r, int k) {
    SimplicialMesh m;
    m.dim = 1;
    m.ambient = 2;
    std::vector<VecR> corners = {{cx - r, cy - r}, {cx + r, cy - r}, {cx + r, cy + r}, {cx - r, cy + r}};
    for (int side = 0; side < 4; ++side) {
        const auto& a = corners[side];
        const auto& b = corners[(side + 1) % 4];
        for (int i = 0; i < k; ++i) {
            Rat t(i, k);
            m.vertices.push_back({a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t});
        }
    }
    int nv = static_cast<int>(m.vertices.size());
    for (int i = 0; i < nv; ++i) m.simplices.push_back({i, (i + 1) % nv});
    return m;
}

/// Cone over a 1-dimensional boundary mesh from a center point: triangles
/// (center, a, b) for each segment (a, b). For a counterclockwise loop
/// around the center this is positively oriented and its mesh boundary is
/// exactly the original loop.
inline SimplicialMesh cone_mesh(const SimplicialMesh& boundary, const VecR& center) {
    if (boundary.dim != 1) throw std::invalid_argument("cone_mesh: boundary must be 1-dimensional");
    SimplicialMesh m;
    m.dim = 2;
    m.ambient = boundary.ambient;
    m.vertices = boundary.vertices;
    m.vertices.push_back(center);
    int c = static_cast<int>(m.vertices.size()) - 1;
    for (const auto& s : boundary.simplices) m.simplices.push_back({c, s[0], s[1]});
    return m;
}

/// Rational affine change of variables x -> A x + b.
struct AffineChange {
    MatR a;
    VecR b;
    VecR apply(const VecR& x) const { return vec_add(a.mul(x), b); }
};

/// Pullback mesh: vertices mapped through the inverse change, vertex order
/// kept. The simplices carry the pullback orientation (negative relative
/// to the standard one when the change reverses orientation), which is the
/// orientation under which push-forwards are invariant.
inline SimplicialMesh pullback_mesh(const SimplicialMesh& mesh, const AffineChange& phi) {
    SimplicialMesh out = mesh;
    MatR inv(phi.a.rows, phi.a.cols);
    for (std::size_t j = 0; j < phi.a.cols; ++j) {
        VecR e(phi.a.rows, Rat(0));
        e[j] = 1;
        auto col = solve(phi.a, e);
        if (!col) throw std::invalid_argument("pullback_mesh: singular change of variables");
        for (std::size_t i = 0; i < phi.a.rows; ++i) inv(i, j) = (*col)[i];
    }
    for (auto& v : out.vertices) v = inv.mul(vec_sub(v, phi.b));
    return out;
}

}  // namespace qcurrents
