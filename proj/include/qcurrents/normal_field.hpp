#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/expr.hpp"
#include "qcurrents/linalg.hpp"
#include "qcurrents/manifold.hpp"

namespace qcurrents {

/// Q normal-valued sheets over a base manifold, given as closed-form
/// coefficients against the trivializing frame nu_1..nu_n:
///   N_i(Phi(x)) = sum_j c_ij(x) nu_j(x),  F_i(x) = Phi(x) + N_i.
/// Orthogonality to the tangent space holds by construction; derivatives
/// of the frame field enter through central differences (step 1e-5).
class NormalQField {
public:
    NormalQField(std::shared_ptr<const BaseManifold> base,
                 std::vector<std::vector<ExprPtr>> coeffs, double scale = 1.0)
        : base_(std::move(base)), coeffs_(std::move(coeffs)), scale_(scale) {
        for (const auto& sheet : coeffs_)
            if (static_cast<int>(sheet.size()) != base_->n())
                throw std::invalid_argument("NormalQField: coefficient arity mismatch");
        build_derivatives();
    }

    static NormalQField parse(std::shared_ptr<const BaseManifold> base,
                              const std::vector<std::vector<std::string>>& coeff_exprs,
                              double scale = 1.0) {
        auto vars = chart_vars(base->m());
        std::vector<std::vector<ExprPtr>> coeffs;
        for (const auto& sheet : coeff_exprs) {
            std::vector<ExprPtr> c;
            for (const auto& src : sheet) c.push_back(parse_expr(src, vars));
            coeffs.push_back(std::move(c));
        }
        return NormalQField(std::move(base), std::move(coeffs), scale);
    }

    const BaseManifold& base() const { return *base_; }
    std::shared_ptr<const BaseManifold> base_ptr() const { return base_; }
    int q() const { return static_cast<int>(coeffs_.size()); }
    double scale() const { return scale_; }

    NormalQField scaled(double eps) const { return NormalQField(base_, coeffs_, eps); }

    /// Frame coefficient values c_ij(x) (scaled).
    VecD coefficients(int i, const VecD& x) const {
        VecD c(base_->n());
        for (int j = 0; j < base_->n(); ++j) c[j] = scale_ * coeffs_[i][j]->eval(x);
        return c;
    }

    VecD coefficient_derivative(int i, int k, const VecD& x) const {
        VecD c(base_->n());
        for (int j = 0; j < base_->n(); ++j) c[j] = scale_ * d1_[i][j][k]->eval(x);
        return c;
    }

    /// Everything the quadrature integrands need at one chart point.
    struct PointSample {
        TangentNormalFrame frame;
        CurvatureData curv;
        double area_element = 1;                  // J_Phi
        std::vector<VecD> values;                 // N_i in ambient coords
        std::vector<std::vector<VecD>> dn;        // dn[i][a] = DN_i . xi_a
        std::vector<std::vector<VecD>> chart_dn;  // chart_dn[i][k] = d_k (N_i o Phi)
        std::vector<double> norm_dn_sq;           // |DN_i|^2
        double dn_sq_total = 0;                   // |DN|^2 = sum_i |DN_i|^2
        VecD eta_n;                               // mean of the values
        double h_dot_eta = 0;                     // <H, eta o N>
    };

    PointSample sample(const VecD& x, double fd_step = 1e-5) const {
        PointSample ps;
        ps.frame = base_->frames(x);
        ps.curv = base_->curvature(x);
        ps.area_element = base_->area_element(x);
        const int m = base_->m(), n = base_->n(), amb = base_->ambient();

        // frame derivatives d_k nu_j by central differences
        std::vector<std::vector<VecD>> dnu(m);  // [k][j]
        for (int k = 0; k < m; ++k) {
            VecD xp = x, xm = x;
            xp[k] += fd_step;
            xm[k] -= fd_step;
            auto fp = base_->frames(xp);
            auto fm = base_->frames(xm);
            dnu[k].resize(n);
            for (int j = 0; j < n; ++j)
                dnu[k][j] = vec_scale(1.0 / (2 * fd_step), vec_sub(fp.normal[j], fm.normal[j]));
        }

        ps.values.resize(q());
        ps.dn.assign(q(), std::vector<VecD>(m));
        ps.chart_dn.assign(q(), std::vector<VecD>(m));
        ps.norm_dn_sq.assign(q(), 0.0);
        ps.eta_n.assign(amb, 0.0);
        for (int i = 0; i < q(); ++i) {
            VecD c = coefficients(i, x);
            VecD val(amb, 0.0);
            for (int j = 0; j < n; ++j) val = vec_add(val, vec_scale(c[j], ps.frame.normal[j]));
            ps.values[i] = val;
            ps.eta_n = vec_add(ps.eta_n, val);
            // chart derivatives of N_i o Phi
            std::vector<VecD> chart_d(m);
            for (int k = 0; k < m; ++k) {
                VecD dc = coefficient_derivative(i, k, x);
                VecD d(amb, 0.0);
                for (int j = 0; j < n; ++j) {
                    d = vec_add(d, vec_scale(dc[j], ps.frame.normal[j]));
                    d = vec_add(d, vec_scale(c[j], dnu[k][j]));
                }
                chart_d[k] = d;
            }
            ps.chart_dn[i] = chart_d;
            for (int a = 0; a < m; ++a) {
                VecD col(amb, 0.0);
                for (int k = 0; k < m; ++k)
                    col = vec_add(col, vec_scale(ps.frame.chart_coeff[a][k], chart_d[k]));
                ps.dn[i][a] = col;
                ps.norm_dn_sq[i] += dot(col, col);
            }
            ps.dn_sq_total += ps.norm_dn_sq[i];
        }
        ps.eta_n = vec_scale(1.0 / q(), ps.eta_n);
        ps.h_dot_eta = dot(ps.curv.mean_curvature, ps.eta_n);
        return ps;
    }

    /// Ambient graph point F_i(x) = Phi(x) + N_i.
    VecD graph_point(int i, const VecD& x) const {
        auto fr = base_->frames(x);
        VecD c = coefficients(i, x);
        VecD p = base_->chart(x);
        for (int j = 0; j < base_->n(); ++j) p = vec_add(p, vec_scale(c[j], fr.normal[j]));
        return p;
    }

private:
    void build_derivatives() {
        d1_.resize(q());
        for (int i = 0; i < q(); ++i) {
            d1_[i].resize(base_->n());
            for (int j = 0; j < base_->n(); ++j) {
                d1_[i][j].resize(base_->m());
                for (int k = 0; k < base_->m(); ++k) d1_[i][j][k] = coeffs_[i][j]->derivative(k);
            }
        }
    }

    std::shared_ptr<const BaseManifold> base_;
    std::vector<std::vector<ExprPtr>> coeffs_;
    double scale_;
    std::vector<std::vector<std::vector<ExprPtr>>> d1_;
};

}  // namespace qcurrents
