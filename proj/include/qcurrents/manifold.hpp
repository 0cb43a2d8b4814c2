#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/expr.hpp"
#include "qcurrents/linalg.hpp"
#include "qcurrents/quadrature.hpp"

namespace qcurrents {

struct TangentNormalFrame {
    // orthonormal tangent vectors of the graph at Phi(x), as columns
    std::vector<VecD> tangent;  // m vectors in R^{m+n}
    std::vector<VecD> normal;   // n vectors in R^{m+n}
    // chart coefficients: tangent[a] = sum_k chart_coeff[a][k] d_k Phi
    std::vector<VecD> chart_coeff;
};

struct CurvatureData {
    // A(t_a, t_b) as normal-valued bilinear form on the orthonormal frame
    std::vector<std::vector<VecD>> second_fundamental;  // [a][b] -> R^{m+n}
    VecD mean_curvature;                                // H = sum_a A(t_a,t_a)
    double norm_A = 0;
    double norm_H = 0;
};

struct ProjectionResult {
    VecD foot;        // p in M
    VecD offset;      // q = z - p, orthogonal to T_p M
    VecD chart_point; // x with Phi(x) = foot
    int iterations = 0;
};

/// Graph manifold M = { (x, phi(x)) : x in Omega } for a closed-form
/// phi: Omega in R^m -> R^n with symbolic derivatives up to third order.
/// Frames follow the standard trivialization: tangent frame from
/// Gram-Schmidt on the chart derivatives, normal frame from Gram-Schmidt
/// on the projections of the last n coordinate vectors.
class BaseManifold {
public:
    BaseManifold(int m, int n, Domain domain, std::vector<ExprPtr> phi,
                 double smallness = 0.1)
        : m_(m), n_(n), domain_(std::move(domain)), phi_(std::move(phi)), smallness_(smallness) {
        if (static_cast<int>(phi_.size()) != n_)
            throw std::invalid_argument("BaseManifold: phi arity mismatch");
        build_derivatives();
        estimate_norms();
    }

    static BaseManifold parse(int m, int n, Domain domain,
                              const std::vector<std::string>& phi_exprs, double smallness = 0.1) {
        auto vars = chart_vars(m);
        std::vector<ExprPtr> phi;
        for (const auto& src : phi_exprs) phi.push_back(parse_expr(src, vars));
        return BaseManifold(m, n, std::move(domain), std::move(phi), smallness);
    }

    int m() const { return m_; }
    int n() const { return n_; }
    int ambient() const { return m_ + n_; }
    const Domain& domain() const { return domain_; }

    double c0_norm() const { return c0_; }
    double c1_norm() const { return c1_; }
    double c2_norm() const { return c2_; }
    double c3_norm() const { return c3_; }
    double smallness_threshold() const { return smallness_; }
    bool satisfies_smallness() const { return c1_ <= smallness_; }

    /// Tubular thickness: min(0.5 / |D^2 phi|_C0, cap).
    double tubular_thickness(double cap = 0.5) const {
        if (c2_ < 1e-14) return cap;
        return std::min(0.5 / c2_, cap);
    }

    VecD phi(const VecD& x) const {
        VecD v(n_);
        for (int c = 0; c < n_; ++c) v[c] = phi_[c]->eval(x);
        return v;
    }

    /// Chart Phi(x) = (x, phi(x)).
    VecD chart(const VecD& x) const {
        VecD p = x;
        VecD v = phi(x);
        p.insert(p.end(), v.begin(), v.end());
        return p;
    }

    /// d_k Phi(x) = (e_k, d_k phi).
    VecD chart_derivative(const VecD& x, int k) const {
        VecD d(ambient(), 0.0);
        d[k] = 1.0;
        for (int c = 0; c < n_; ++c) d[m_ + c] = d1_[c][k]->eval(x);
        return d;
    }

    /// Jacobian n x m of phi.
    MatD phi_jacobian(const VecD& x) const {
        MatD j(n_, m_);
        for (int c = 0; c < n_; ++c)
            for (int k = 0; k < m_; ++k) j(c, k) = d1_[c][k]->eval(x);
        return j;
    }

    double phi_second(int c, int k, int l, const VecD& x) const { return d2_[c][k][l]->eval(x); }

    /// Area element J_Phi = sqrt(det(I + Dphi^T Dphi)).
    double area_element(const VecD& x) const {
        MatD j = phi_jacobian(x);
        MatD g = MatD::identity(m_);
        for (int a = 0; a < m_; ++a)
            for (int b = 0; b < m_; ++b)
                for (int c = 0; c < n_; ++c) g(a, b) += j(c, a) * j(c, b);
        return std::sqrt(std::max(0.0, det(g)));
    }

    /// H^m(M) by quadrature in the chart.
    double hausdorff_measure(int order = 32) const {
        auto rule = domain_rule(domain_, order);
        double acc = 0;
        for (const auto& qn : rule) acc += qn.w * area_element(qn.x);
        return acc;
    }

    /// Orthonormal tangent/normal frame at x (Gram-Schmidt; the pivot
    /// magnitude of a breakdown is reported in the exception).
    TangentNormalFrame frames(const VecD& x) const {
        TangentNormalFrame fr;
        // tangent: Gram-Schmidt on chart derivatives, tracking chart coeffs
        std::vector<VecD> raw;
        for (int k = 0; k < m_; ++k) raw.push_back(chart_derivative(x, k));
        std::vector<VecD> coeff(m_, VecD(m_, 0.0));
        for (int k = 0; k < m_; ++k) coeff[k][k] = 1.0;
        for (int a = 0; a < m_; ++a) {
            VecD v = raw[a];
            VecD c = coeff[a];
            for (int b = 0; b < a; ++b) {
                double proj = dot(v, fr.tangent[b]);
                v = vec_sub(v, vec_scale(proj, fr.tangent[b]));
                c = vec_sub(c, vec_scale(proj, fr.chart_coeff[b]));
            }
            double len = norm(v);
            if (len < 1e-12)
                throw std::runtime_error("frames: tangent Gram-Schmidt breakdown, pivot " +
                                         std::to_string(len));
            fr.tangent.push_back(vec_scale(1.0 / len, v));
            fr.chart_coeff.push_back(vec_scale(1.0 / len, c));
        }
        // normal: project e_{m+j} off the tangent space, then Gram-Schmidt
        for (int j = 0; j < n_; ++j) {
            VecD v(ambient(), 0.0);
            v[m_ + j] = 1.0;
            for (const auto& t : fr.tangent) v = vec_sub(v, vec_scale(dot(v, t), t));
            for (const auto& nu : fr.normal) v = vec_sub(v, vec_scale(dot(v, nu), nu));
            double len = norm(v);
            if (len < 1e-12)
                throw std::runtime_error("frames: normal Gram-Schmidt breakdown, pivot " +
                                         std::to_string(len));
            fr.normal.push_back(vec_scale(1.0 / len, v));
        }
        return fr;
    }

    /// Second fundamental form and mean curvature at x, from D^2 phi and
    /// the orthonormal frame.
    CurvatureData curvature(const VecD& x) const {
        auto fr = frames(x);
        CurvatureData cd;
        cd.second_fundamental.assign(m_, std::vector<VecD>(m_));
        cd.mean_curvature.assign(ambient(), 0.0);
        for (int a = 0; a < m_; ++a)
            for (int b = 0; b < m_; ++b) {
                // D^2 Phi(u_a, u_b) = (0, D^2 phi(u_a, u_b)); take the
                // normal component
                VecD w(ambient(), 0.0);
                for (int c = 0; c < n_; ++c) {
                    double acc = 0;
                    for (int k = 0; k < m_; ++k)
                        for (int l = 0; l < m_; ++l)
                            acc += fr.chart_coeff[a][k] * fr.chart_coeff[b][l] *
                                   d2_[c][k][l]->eval(x);
                    w[m_ + c] = acc;
                }
                VecD nor(ambient(), 0.0);
                for (const auto& nu : fr.normal) nor = vec_add(nor, vec_scale(dot(w, nu), nu));
                cd.second_fundamental[a][b] = nor;
            }
        double a2 = 0;
        for (int a = 0; a < m_; ++a) {
            cd.mean_curvature = vec_add(cd.mean_curvature, cd.second_fundamental[a][a]);
            for (int b = 0; b < m_; ++b) a2 += dot(cd.second_fundamental[a][b], cd.second_fundamental[a][b]);
        }
        cd.norm_A = std::sqrt(a2);
        cd.norm_H = norm(cd.mean_curvature);
        return cd;
    }

    /// Nearest-point projection by Newton iteration on the first-order
    /// conditions <d_k Phi, z - Phi(x)> = 0, with perturbed extra seeds;
    /// disagreeing converged feet flag an ambiguity.
    ProjectionResult nearest_point_projection(const VecD& z, double tol = 1e-12) const {
        VecD seed(z.begin(), z.begin() + m_);
        std::vector<VecD> seeds{seed};
        double delta = 0.1 * (1.0 + norm(seed));
        for (int k = 0; k < m_; ++k)
            for (double s : {delta, -delta}) {
                VecD p = seed;
                p[k] += s;
                seeds.push_back(p);
            }
        std::optional<ProjectionResult> best;
        double best_dist = std::numeric_limits<double>::infinity();
        std::vector<ProjectionResult> converged;
        for (const auto& s0 : seeds) {
            auto res = newton_project(z, s0, tol);
            if (!res) continue;
            converged.push_back(*res);
            double d = dist(z, res->foot);
            if (d < best_dist) {
                best_dist = d;
                best = *res;
            }
        }
        if (!best) throw std::runtime_error("nearest_point_projection: Newton did not converge");
        for (const auto& r : converged)
            if (dist(r.chart_point, best->chart_point) > 1e-8 &&
                std::abs(dist(z, r.foot) - best_dist) < 1e-10)
                throw std::runtime_error("nearest_point_projection: ambiguous foot points");
        // orthogonality audit
        auto fr = frames(best->chart_point);
        for (const auto& t : fr.tangent)
            if (std::abs(dot(best->offset, t)) > 1e-10)
                throw std::runtime_error("nearest_point_projection: offset not orthogonal");
        return *best;
    }

    /// Max finite-difference norm of the normal-frame derivative over a
    /// sampling grid (step 1e-5); the trivialization estimate compares it
    /// against |D^2 phi|_C0.
    double frame_derivative_bound(int grid = 9, double step = 1e-5) const {
        Box bb = domain_.bounding_box();
        double worst = 0;
        std::vector<int> idx(m_, 0);
        while (true) {
            VecD x(m_);
            for (int k = 0; k < m_; ++k) {
                double t = grid == 1 ? 0.5 : static_cast<double>(idx[k]) / (grid - 1);
                x[k] = bb.lo[k] + t * (bb.hi[k] - bb.lo[k]);
                x[k] = std::min(bb.hi[k] - step, std::max(bb.lo[k] + step, x[k]));
            }
            if (domain_.contains(x, -step)) {
                for (int k = 0; k < m_; ++k) {
                    VecD xp = x, xm = x;
                    xp[k] += step;
                    xm[k] -= step;
                    auto fp = frames(xp), fm = frames(xm);
                    for (int j = 0; j < n_; ++j) {
                        VecD d = vec_scale(1.0 / (2 * step), vec_sub(fp.normal[j], fm.normal[j]));
                        worst = std::max(worst, norm(d));
                    }
                }
            }
            int k = 0;
            while (k < m_ && ++idx[k] == grid) idx[k++] = 0;
            if (k == m_) break;
        }
        return worst;
    }

private:
    std::optional<ProjectionResult> newton_project(const VecD& z, VecD x, double tol) const {
        for (int it = 0; it < 50; ++it) {
            VecD p = chart(x);
            VecD r = vec_sub(z, p);
            VecD g(m_);
            MatD jg(m_, m_);
            for (int k = 0; k < m_; ++k) {
                g[k] = dot(chart_derivative(x, k), r);
                for (int l = 0; l < m_; ++l) {
                    // d_l g_k = <d^2_{kl} Phi, r> - <d_k Phi, d_l Phi>
                    double acc = -dot(chart_derivative(x, k), chart_derivative(x, l));
                    for (int c = 0; c < n_; ++c) acc += d2_[c][k][l]->eval(x) * r[m_ + c];
                    jg(k, l) = acc;
                }
            }
            auto step = solve(jg, g);
            if (!step) return std::nullopt;
            double step_norm = 0;
            for (int k = 0; k < m_; ++k) {
                x[k] -= (*step)[k];
                step_norm = std::max(step_norm, std::abs((*step)[k]));
            }
            if (step_norm < tol) {
                ProjectionResult res;
                res.chart_point = x;
                res.foot = chart(x);
                res.offset = vec_sub(z, res.foot);
                res.iterations = it + 1;
                return res;
            }
        }
        return std::nullopt;
    }

    void build_derivatives() {
        d1_.resize(n_);
        d2_.resize(n_);
        d3_.resize(n_);
        for (int c = 0; c < n_; ++c) {
            d1_[c].resize(m_);
            d2_[c].assign(m_, std::vector<ExprPtr>(m_));
            d3_[c].assign(m_, std::vector<std::vector<ExprPtr>>(m_, std::vector<ExprPtr>(m_)));
            for (int k = 0; k < m_; ++k) d1_[c][k] = phi_[c]->derivative(k);
            for (int k = 0; k < m_; ++k)
                for (int l = 0; l < m_; ++l) {
                    d2_[c][k][l] = d1_[c][k]->derivative(l);
                    for (int r = 0; r < m_; ++r) d3_[c][k][l][r] = d2_[c][k][l]->derivative(r);
                }
        }
    }

    /// C^k norm estimates by dense grid sampling (33 points per axis).
    void estimate_norms() {
        const int grid = 33;
        Box bb = domain_.bounding_box();
        std::vector<int> idx(m_, 0);
        while (true) {
            VecD x(m_);
            for (int k = 0; k < m_; ++k) {
                double t = static_cast<double>(idx[k]) / (grid - 1);
                x[k] = bb.lo[k] + t * (bb.hi[k] - bb.lo[k]);
            }
            if (domain_.contains(x, 1e-12)) {
                double v0 = 0, v1 = 0, v2 = 0, v3 = 0;
                for (int c = 0; c < n_; ++c) {
                    v0 += phi_[c]->eval(x) * phi_[c]->eval(x);
                    for (int k = 0; k < m_; ++k) {
                        double d = d1_[c][k]->eval(x);
                        v1 += d * d;
                        for (int l = 0; l < m_; ++l) {
                            double dd = d2_[c][k][l]->eval(x);
                            v2 += dd * dd;
                            for (int r = 0; r < m_; ++r) {
                                double ddd = d3_[c][k][l][r]->eval(x);
                                v3 += ddd * ddd;
                            }
                        }
                    }
                }
                c0_ = std::max(c0_, std::sqrt(v0));
                c1_ = std::max(c1_, std::sqrt(v1));
                c2_ = std::max(c2_, std::sqrt(v2));
                c3_ = std::max(c3_, std::sqrt(v3));
            }
            int k = 0;
            while (k < m_ && ++idx[k] == grid) idx[k++] = 0;
            if (k == m_) break;
        }
    }

    int m_, n_;
    Domain domain_;
    std::vector<ExprPtr> phi_;
    double smallness_;
    double c0_ = 0, c1_ = 0, c2_ = 0, c3_ = 0;
    std::vector<std::vector<ExprPtr>> d1_;
    std::vector<std::vector<std::vector<ExprPtr>>> d2_;
    std::vector<std::vector<std::vector<std::vector<ExprPtr>>>> d3_;
};

}  // namespace qcurrents
