#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/expr.hpp"
#include "qcurrents/mesh.hpp"
#include "qcurrents/paqmap.hpp"
#include "qcurrents/quadrature.hpp"

namespace qcurrents {

/// Q smooth sheets f_i: Omega in R^m -> R^n in closed form, with symbolic
/// first and second derivatives. The inputs for every quadrature-based
/// functional; the test catalog is polynomials up to degree four and
/// products with sin/cos.
class AnalyticSheetBundle {
public:
    AnalyticSheetBundle(int m, int n, Domain domain,
                        std::vector<std::vector<ExprPtr>> sheets)
        : m_(m), n_(n), domain_(std::move(domain)), sheets_(std::move(sheets)) {
        for (const auto& s : sheets_)
            if (static_cast<int>(s.size()) != n_)
                throw std::invalid_argument("AnalyticSheetBundle: sheet arity mismatch");
        build_derivatives();
    }

    static AnalyticSheetBundle parse(int m, int n, Domain domain,
                                     const std::vector<std::vector<std::string>>& sheet_exprs) {
        auto vars = chart_vars(m);
        std::vector<std::vector<ExprPtr>> sheets;
        for (const auto& comps : sheet_exprs) {
            std::vector<ExprPtr> sheet;
            for (const auto& src : comps) sheet.push_back(parse_expr(src, vars));
            sheets.push_back(std::move(sheet));
        }
        return AnalyticSheetBundle(m, n, std::move(domain), std::move(sheets));
    }

    int m() const { return m_; }
    int n() const { return n_; }
    int q() const { return static_cast<int>(sheets_.size()); }
    const Domain& domain() const { return domain_; }
    const std::vector<std::vector<ExprPtr>>& sheets() const { return sheets_; }

    VecD value(int i, const VecD& x) const {
        VecD v(n_);
        for (int c = 0; c < n_; ++c) v[c] = sheets_[i][c]->eval(x);
        return v;
    }

    QPoint value(const VecD& x) const {
        std::vector<VecD> pts;
        for (int i = 0; i < q(); ++i) pts.push_back(value(i, x));
        return QPoint(n_, std::move(pts));
    }

    /// Jacobian Df_i (n x m).
    MatD jacobian(int i, const VecD& x) const {
        MatD j(n_, m_);
        for (int c = 0; c < n_; ++c)
            for (int k = 0; k < m_; ++k) j(c, k) = d1_[i][c][k]->eval(x);
        return j;
    }

    /// Second derivatives d^2 f_i[c] / dx_k dx_l.
    double second(int i, int c, int k, int l, const VecD& x) const {
        return d2_[i][c][k][l]->eval(x);
    }

    std::optional<VecR> value_exact(int i, const VecR& x) const {
        VecR v(n_);
        for (int c = 0; c < n_; ++c) {
            auto r = sheets_[i][c]->eval_exact(x);
            if (!r) return std::nullopt;
            v[c] = *r;
        }
        return v;
    }

    double mean_gradient_norm_sq(const VecD& x) const {
        double acc = 0;
        for (int i = 0; i < q(); ++i) {
            MatD j = jacobian(i, x);
            acc += frobenius(j) * frobenius(j);
        }
        return acc;
    }

    /// Max deviation between symbolic first derivatives and central finite
    /// differences over the sample points (consistency check).
    double derivative_consistency(const std::vector<VecD>& samples, double h = 1e-5) const {
        double worst = 0;
        for (const auto& x : samples)
            for (int i = 0; i < q(); ++i)
                for (int k = 0; k < m_; ++k) {
                    VecD xp = x, xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    for (int c = 0; c < n_; ++c) {
                        double fd = (sheets_[i][c]->eval(xp) - sheets_[i][c]->eval(xm)) / (2 * h);
                        worst = std::max(worst, std::abs(fd - d1_[i][c][k]->eval(x)));
                    }
                }
        return worst;
    }

private:
    void build_derivatives() {
        d1_.resize(q());
        d2_.resize(q());
        for (int i = 0; i < q(); ++i) {
            d1_[i].resize(n_);
            d2_[i].resize(n_);
            for (int c = 0; c < n_; ++c) {
                d1_[i][c].resize(m_);
                d2_[i][c].assign(m_, std::vector<ExprPtr>(m_));
                for (int k = 0; k < m_; ++k) d1_[i][c][k] = sheets_[i][c]->derivative(k);
                for (int k = 0; k < m_; ++k)
                    for (int l = 0; l < m_; ++l) d2_[i][c][k][l] = d1_[i][c][k]->derivative(l);
            }
        }
    }

    int m_, n_;
    Domain domain_;
    std::vector<std::vector<ExprPtr>> sheets_;
    std::vector<std::vector<std::vector<ExprPtr>>> d1_;
    std::vector<std::vector<std::vector<std::vector<ExprPtr>>>> d2_;
};

struct VertexCollision {
    int vertex;
    int sheet_a, sheet_b;
};

/// Vertex interpolation of each sheet on the mesh, labeled by sheet index;
/// face compatibility holds by construction. Polynomial sheets with
/// rational coefficients interpolate exactly; otherwise vertex values are
/// the (exact dyadic) rationalization of the double evaluation.
///
/// When `reject_collisions` is set, a vertex where two distinct sheets
/// collide while diverging on an incident simplex is reported as an
/// ambiguous matching and the call fails with a refinement hint.
inline PAQMap sample_to_pa(const AnalyticSheetBundle& f, const SimplicialMesh& mesh,
                           bool reject_collisions = false,
                           std::vector<VertexCollision>* collisions_out = nullptr) {
    if (mesh.ambient != f.m())
        throw std::invalid_argument("sample_to_pa: mesh ambient dimension mismatch");
    std::vector<std::vector<VecR>> vertex_values(f.q());
    for (int i = 0; i < f.q(); ++i) {
        vertex_values[i].reserve(mesh.vertices.size());
        for (const auto& v : mesh.vertices) {
            auto exact = f.value_exact(i, v);
            if (exact) {
                vertex_values[i].push_back(*exact);
            } else {
                VecD vd = to_double(v);
                VecD val = f.value(i, vd);
                VecR vr(val.size());
                for (std::size_t c = 0; c < val.size(); ++c) vr[c] = rat_from_double(val[c]);
                vertex_values[i].push_back(std::move(vr));
            }
        }
    }

    std::vector<VertexCollision> collisions;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
        for (int i = 0; i < f.q(); ++i)
            for (int j = i + 1; j < f.q(); ++j) {
                if (vertex_values[i][v] != vertex_values[j][v]) continue;
                // diverging on an incident simplex?
                bool diverges = false;
                for (int s = 0; s < mesh.cell_count() && !diverges; ++s) {
                    const auto& sx = mesh.simplices[s];
                    if (std::find(sx.begin(), sx.end(), static_cast<int>(v)) == sx.end()) continue;
                    for (int l = 0; l < mesh.dim + 1; ++l)
                        if (vertex_values[i][sx[l]] != vertex_values[j][sx[l]]) diverges = true;
                }
                if (diverges) collisions.push_back({static_cast<int>(v), i, j});
            }
    if (collisions_out) *collisions_out = collisions;
    if (reject_collisions && !collisions.empty()) {
        auto c = collisions.front();
        throw std::invalid_argument(
            "sample_to_pa: sheets " + std::to_string(c.sheet_a) + " and " +
            std::to_string(c.sheet_b) + " collide at vertex " + std::to_string(c.vertex) +
            " but diverge nearby; refine the mesh so the coincidence set is resolved");
    }
    return pa_from_vertex_values(mesh, vertex_values);
}

}  // namespace qcurrents
