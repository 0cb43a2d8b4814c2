#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/analytic.hpp"
#include "qcurrents/linalg.hpp"
#include "qcurrents/normal_field.hpp"
#include "qcurrents/quadrature.hpp"

namespace qcurrents {

struct SlopeFit {
    double slope = 0;
    double r2 = 0;
};

/// Least-squares slope of log|y| against log x.
inline SlopeFit fit_loglog(const VecD& xs, const VecD& ys) {
    VecD lx, ly;
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

/// Named main terms, the quadrature oracle, the residual against the main
/// terms, and the error-bound right-hand side with its fitted constant.
struct ExpansionReport {
    std::vector<std::pair<std::string, double>> mains;
    double oracle = 0;
    double main_total = 0;
    double residual = 0;
    double bound_rhs = 0;
    double fitted_c = 0;  // |residual| / bound_rhs when the bound is nonzero
    double refinement_delta = 0;  // oracle change when quadrature nodes double
    std::map<std::string, double> extras;

    void finalize() {
        main_total = 0;
        for (const auto& [k, v] : mains) main_total += v;
        residual = oracle - main_total;
        fitted_c = bound_rhs > 1e-300 ? std::abs(residual) / bound_rhs : 0.0;
    }
};

struct SweepEntry {
    double eps = 0;
    ExpansionReport report;
};

struct SweepResult {
    std::vector<SweepEntry> entries;
    SlopeFit residual_fit;
    double fitted_c_max = 0;
    double fitted_c_ratio = 1;  // max/min over entries with a usable bound

    void finalize() {
        VecD xs, ys;
        double cmin = 1e300, cmax = 0;
        for (const auto& e : entries) {
            xs.push_back(e.eps);
            ys.push_back(e.report.residual);
            if (e.report.bound_rhs > 1e-14) {
                cmin = std::min(cmin, e.report.fitted_c);
                cmax = std::max(cmax, e.report.fitted_c);
            }
        }
        residual_fit = fit_loglog(xs, ys);
        fitted_c_max = cmax;
        fitted_c_ratio = (cmax > 0 && cmin < 1e300 && cmin > 0) ? cmax / cmin : 1.0;
    }
};

inline SweepResult run_sweep(const std::function<ExpansionReport(double)>& make,
                             const VecD& epsilons) {
    SweepResult sw;
    for (double e : epsilons) sw.entries.push_back(SweepEntry{e, make(e)});
    sw.finalize();
    return sw;
}

/// Q-sheeted parametrized surface over a chart domain: per sheet, ambient
/// value and chart Jacobian at a point. The common currency for masses,
/// weighted integrals and first variations.
struct ParamSurface {
    int m = 0, ambient = 0, q = 1;
    Domain domain;
    // eval(sheet, x, value, jacobian(ambient x m))
    std::function<void(int, const VecD&, VecD&, MatD&)> eval;
};

inline double sheet_area_element(const MatD& jac) {
    MatD g = jac.transposed().mul(jac);
    return std::sqrt(std::max(0.0, det(g)));
}

/// Total mass sum_i H^m(sheet_i) by tensor quadrature in the chart.
inline double parametrized_mass(const ParamSurface& s, int order) {
    auto rule = domain_rule(s.domain, order);
    double acc = 0;
    VecD val;
    MatD jac;
    for (const auto& qn : rule)
        for (int i = 0; i < s.q; ++i) {
            s.eval(i, qn.x, val, jac);
            acc += qn.w * sheet_area_element(jac);
        }
    return acc;
}

/// integral of g d||T|| for g evaluated at the ambient points.
inline double parametrized_weighted_mass(const ParamSurface& s, int order,
                                         const std::function<double(const VecD&)>& g) {
    auto rule = domain_rule(s.domain, order);
    double acc = 0;
    VecD val;
    MatD jac;
    for (const auto& qn : rule)
        for (int i = 0; i < s.q; ++i) {
            s.eval(i, qn.x, val, jac);
            acc += qn.w * g(val) * sheet_area_element(jac);
        }
    return acc;
}

/// The exact graph surface of a normal field: G_i(x) = Phi(x) + N_i.
inline ParamSurface field_surface(const NormalQField& field, double frame_fd_step = 1e-5) {
    ParamSurface s;
    const auto& base = field.base();
    s.m = base.m();
    s.ambient = base.ambient();
    s.q = field.q();
    s.domain = base.domain();
    auto base_ptr = field.base_ptr();
    auto fld = std::make_shared<NormalQField>(field);
    s.eval = [fld, base_ptr, frame_fd_step](int i, const VecD& x, VecD& val, MatD& jac) {
        auto ps = fld->sample(x, frame_fd_step);
        const int m = base_ptr->m(), amb = base_ptr->ambient();
        val = vec_add(base_ptr->chart(x), ps.values[i]);
        jac = MatD(amb, m);
        for (int k = 0; k < m; ++k) {
            VecD col = vec_add(base_ptr->chart_derivative(x, k), ps.chart_dn[i][k]);
            for (int r = 0; r < amb; ++r) jac(r, k) = col[r];
        }
    };
    return s;
}

/// Mass oracle: integral over M of sum_i |DF_i# xi| (area formula in the
/// chart). Doubling the quadrature order certifies convergence.
inline double exact_mass(const NormalQField& field, int order = 32,
                         double* refinement_delta = nullptr) {
    auto s = field_surface(field);
    double v = parametrized_mass(s, order);
    if (refinement_delta) *refinement_delta = parametrized_mass(s, 2 * order) - v;
    return v;
}

namespace detail_var {

/// Aggregate pointwise norms |N|, |DN| and curvature data for bound
/// right-hand sides.
struct BoundData {
    double n_norm = 0;      // sqrt(sum_i |N_i|^2)
    double dn_norm = 0;     // sqrt(sum_i |DN_i|^2)
    double a_norm = 0;      // |A|
};

inline BoundData bound_data(const NormalQField::PointSample& ps) {
    BoundData b;
    double n2 = 0;
    for (const auto& v : ps.values) n2 += dot(v, v);
    b.n_norm = std::sqrt(n2);
    b.dn_norm = std::sqrt(ps.dn_sq_total);
    b.a_norm = ps.curv.norm_A;
    return b;
}

}  // namespace detail_var

/// Mass expansion: M(T_F) = Q H^m(M) - Q int <H, eta o N> + 1/2 int |DN|^2
/// + residual, with |residual| <= C int(|A|^2|N|^2 + |A||N||DN|^2 + |DN|^4).
inline ExpansionReport mass_expansion(const NormalQField& field, int order = 32) {
    ExpansionReport rep;
    const auto& base = field.base();
    auto rule = domain_rule(base.domain(), order);
    double area = 0, h_term = 0, dirichlet = 0, bound = 0;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        area += w;
        h_term += w * ps.h_dot_eta;
        dirichlet += w * ps.dn_sq_total;
        auto b = detail_var::bound_data(ps);
        bound += w * (b.a_norm * b.a_norm * b.n_norm * b.n_norm +
                      b.a_norm * b.n_norm * b.dn_norm * b.dn_norm +
                      b.dn_norm * b.dn_norm * b.dn_norm * b.dn_norm);
    }
    rep.mains = {{"Q_area", field.q() * area},
                 {"mean_curvature_pairing", -field.q() * h_term},
                 {"dirichlet_half", 0.5 * dirichlet}};
    rep.oracle = exact_mass(field, order, &rep.refinement_delta);
    rep.bound_rhs = bound;
    rep.finalize();
    return rep;
}

/// Weighted mass, general weight h on the ambient space:
/// |int h d||T_F|| - int_M sum_i h o F_i| bounded by the curvature terms.
inline ExpansionReport weighted_mass_ambient(const NormalQField& field, const ExprField& h,
                                             int order = 32) {
    ExpansionReport rep;
    const auto& base = field.base();
    auto surf = field_surface(field);
    rep.oracle = parametrized_weighted_mass(surf, order,
                                            [&](const VecD& p) { return h.comps[0]->eval(p); });
    auto rule = domain_rule(base.domain(), order);
    double main = 0, bound = 0, hsup = 0;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        auto b = detail_var::bound_data(ps);
        double habs_sum = 0;
        for (int i = 0; i < field.q(); ++i) {
            VecD p = vec_add(base.chart(qn.x), ps.values[i]);
            double hv = h.comps[0]->eval(p);
            main += w * hv;
            habs_sum += std::abs(hv) * norm(ps.values[i]);
            hsup = std::max(hsup, std::abs(hv));
        }
        bound += w * (b.a_norm * habs_sum);
        // the |h|_inf part is accumulated after the sup is known; store the
        // measure-weighted factor
        rep.extras["_pending_dn"] += w * (b.dn_norm * b.dn_norm + b.a_norm * b.n_norm * b.n_norm);
    }
    bound += hsup * rep.extras["_pending_dn"];
    rep.extras.erase("_pending_dn");
    rep.extras["h_sup_estimate"] = hsup;
    rep.mains = {{"sum_h_on_sheets", main}};
    rep.bound_rhs = bound;
    rep.finalize();
    return rep;
}

/// Weighted mass for fiber-constant weights h = g o p: the sharper bound
/// int (|A|^2|N|^2 + |DN|^4) |g|. The main term integrates
/// g (Q - Q<H,eta o N> + |DN|^2/2), which is the per-sheet expansion summed
/// over sheets.
inline ExpansionReport weighted_mass_fiber(const NormalQField& field, const ExprPtr& g_chart,
                                           int order = 32) {
    ExpansionReport rep;
    const auto& base = field.base();
    auto surf = field_surface(field);
    auto base_ptr = field.base_ptr();
    // h(p) = g(p_chart(p)): evaluate through the nearest-point projection
    rep.oracle = parametrized_weighted_mass(surf, order, [&](const VecD& p) {
        auto pr = base_ptr->nearest_point_projection(p);
        return g_chart->eval(pr.chart_point);
    });
    auto rule = domain_rule(base.domain(), order);
    double main = 0, bound = 0;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        double g = g_chart->eval(qn.x);
        auto b = detail_var::bound_data(ps);
        main += w * g * (field.q() - field.q() * ps.h_dot_eta + 0.5 * ps.dn_sq_total);
        bound += w * std::abs(g) *
                 (b.a_norm * b.a_norm * b.n_norm * b.n_norm +
                  b.dn_norm * b.dn_norm * b.dn_norm * b.dn_norm);
    }
    rep.mains = {{"g_expansion", main}};
    rep.bound_rhs = bound;
    rep.finalize();
    return rep;
}

/// Components of v_1 ^ ... ^ v_m over increasing index tuples.
inline VecD wedge_components(const std::vector<VecD>& vecs,
                             const std::vector<std::vector<std::size_t>>& combos) {
    const std::size_t m = vecs.size();
    VecD out(combos.size());
    for (std::size_t c = 0; c < combos.size(); ++c) {
        MatD sub(m, m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t k = 0; k < m; ++k) sub(r, k) = vecs[k][combos[c][r]];
        out[c] = det(sub);
    }
    return out;
}

/// Curvilinear excess: int |T_F - M o p|^2 d||T_F|| = int |DN|^2 up to
/// C int (|A|^2 |N|^2 + |DN|^4).
inline ExpansionReport curvilinear_excess(const NormalQField& field, int order = 32) {
    ExpansionReport rep;
    const auto& base = field.base();
    auto combos = combinations(base.ambient(), base.m());
    auto rule = domain_rule(base.domain(), order);
    double lhs = 0, dirichlet = 0, bound = 0;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        auto mvec = wedge_components(ps.frame.tangent, combos);  // unit by orthonormality
        for (int i = 0; i < field.q(); ++i) {
            std::vector<VecD> cols(base.m());
            for (int a = 0; a < base.m(); ++a)
                cols[a] = vec_add(ps.frame.tangent[a], ps.dn[i][a]);
            VecD zeta = wedge_components(cols, combos);
            double zlen = norm(zeta);
            VecD unit = vec_scale(1.0 / zlen, zeta);
            lhs += w * dist(unit, mvec) * dist(unit, mvec) * zlen;
        }
        dirichlet += w * ps.dn_sq_total;
        auto b = detail_var::bound_data(ps);
        bound += w * (b.a_norm * b.a_norm * b.n_norm * b.n_norm +
                      b.dn_norm * b.dn_norm * b.dn_norm * b.dn_norm);
    }
    rep.oracle = lhs;
    rep.mains = {{"dirichlet", dirichlet}};
    rep.bound_rhs = bound;
    rep.finalize();
    return rep;
}

/// Cylindrical excess over B_s: A is the average of D(eta o f), tau the
/// plane of the linear map A; the excess of G_f against tau equals the
/// squared matching distance of Df to Q[[A]] up to C int |Df|^4.
inline ExpansionReport cylindrical_excess(const AnalyticSheetBundle& f, double s, int order = 32) {
    ExpansionReport rep;
    const int m = f.m(), n = f.n();
    Domain ball = Domain::make_ball(VecD(m, 0.0), s);
    auto rule = domain_rule(ball, order);
    double vol = 0;
    MatD a_avg(n, m);
    for (const auto& qn : rule) {
        vol += qn.w;
        for (int i = 0; i < f.q(); ++i) {
            MatD j = f.jacobian(i, qn.x);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) a_avg(r, c) += qn.w * j(r, c) / f.q();
        }
    }
    for (auto& v : a_avg.a) v /= vol;

    auto combos = combinations(m + n, m);
    std::vector<VecD> tau_cols(m);
    for (int a = 0; a < m; ++a) {
        VecD col(m + n, 0.0);
        col[a] = 1.0;
        for (int r = 0; r < n; ++r) col[m + r] = a_avg(r, a);
        tau_cols[a] = col;
    }
    VecD tau = wedge_components(tau_cols, combos);
    tau = vec_scale(1.0 / norm(tau), tau);

    double lhs = 0, rhs = 0, bound = 0;
    for (const auto& qn : rule) {
        for (int i = 0; i < f.q(); ++i) {
            MatD j = f.jacobian(i, qn.x);
            std::vector<VecD> cols(m);
            for (int a = 0; a < m; ++a) {
                VecD col(m + n, 0.0);
                col[a] = 1.0;
                for (int r = 0; r < n; ++r) col[m + r] = j(r, a);
                cols[a] = col;
            }
            VecD w = wedge_components(cols, combos);
            double wlen = norm(w);
            VecD unit = vec_scale(1.0 / wlen, w);
            lhs += qn.w * dist(unit, tau) * dist(unit, tau) * wlen;
            double diff2 = 0, j2 = 0;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) {
                    diff2 += (j(r, c) - a_avg(r, c)) * (j(r, c) - a_avg(r, c));
                    j2 += j(r, c) * j(r, c);
                }
            rhs += qn.w * diff2;
            bound += qn.w * j2 * j2;
        }
    }
    rep.oracle = lhs;
    rep.mains = {{"matching_distance_sq", rhs}};
    rep.bound_rhs = bound;
    rep.extras["tilt_norm"] = frobenius(a_avg);
    rep.finalize();
    return rep;
}

/// First-variation oracle: central differences of the deformed mass with
/// two Richardson levels across h in {1e-2, 5e-3, 2.5e-3}, cross-checked
/// against the divergence-formula value.
struct VariationResult {
    double fd_delta = 0;
    double divergence_delta = 0;
    double fd_noise = 0;
    double rel_gap = 0;
    bool agree = false;
};

inline VariationResult fd_variation(const std::function<double(double)>& mass_of_eps,
                                    double divergence_value, double rel_tol = 1e-6) {
    const double h1 = 1e-2, h2 = 5e-3, h3 = 2.5e-3;
    auto central = [&](double h) { return (mass_of_eps(h) - mass_of_eps(-h)) / (2 * h); };
    double d1 = central(h1), d2 = central(h2), d3 = central(h3);
    double r1 = (4 * d2 - d1) / 3;
    double r2 = (4 * d3 - d2) / 3;
    VariationResult res;
    res.fd_delta = (16 * r2 - r1) / 15;
    res.fd_noise = std::abs(r2 - r1);
    res.divergence_delta = divergence_value;
    double scale = std::max({1.0, std::abs(res.fd_delta), std::abs(res.divergence_delta)});
    res.rel_gap = std::abs(res.fd_delta - res.divergence_delta) / scale;
    res.agree = res.rel_gap <= rel_tol;
    return res;
}

/// integral of div_T X d||T|| over the parametrized surface. DX is either
/// analytic (matrix at a point) or a directional finite difference of X.
inline double divergence_value(const ParamSurface& s,
                               const std::function<VecD(const VecD&)>& x_field,
                               const std::function<std::optional<MatD>(const VecD&)>& dx_analytic,
                               int order, double fd_step = 1e-5) {
    auto rule = domain_rule(s.domain, order);
    double acc = 0;
    VecD val;
    MatD jac;
    for (const auto& qn : rule)
        for (int i = 0; i < s.q; ++i) {
            s.eval(i, qn.x, val, jac);
            // orthonormal tangent basis of the sheet
            std::vector<VecD> t;
            for (int c = 0; c < s.m; ++c) {
                VecD v = jac.column(c);
                for (const auto& u : t) v = vec_sub(v, vec_scale(dot(v, u), u));
                double len = norm(v);
                if (len < 1e-14) throw std::runtime_error("divergence_value: degenerate sheet");
                t.push_back(vec_scale(1.0 / len, v));
            }
            double div = 0;
            auto dx = dx_analytic(val);
            for (const auto& ta : t) {
                VecD deriv;
                if (dx) {
                    deriv = dx->mul(ta);
                } else {
                    VecD pp = vec_add(val, vec_scale(fd_step, ta));
                    VecD pm = vec_sub(val, vec_scale(fd_step, ta));
                    deriv = vec_scale(1.0 / (2 * fd_step), vec_sub(x_field(pp), x_field(pm)));
                }
                div += dot(deriv, ta);
            }
            acc += qn.w * div * sheet_area_element(jac);
        }
    return acc;
}

/// Deformation field catalog for first variations. Vertical fields
/// chi(x,y) = (0, zeta(x,y)) deform graphs fiberwise; normal-scaling
/// fields X(p) = phi(p(p)) (p - p(p)) drive outer variations; tangent
/// lifts X(p) = Y(p(p)) drive inner ones (Y given as a chart velocity).
/// The projection-based variants must be compactly supported inside the
/// declared chart domain; vertical fields need no support condition.
struct VectorFieldSpec {
    enum class Kind { Vertical, NormalScaling, TangentLift };
    Kind kind = Kind::Vertical;
    ExprField data;

    static VectorFieldSpec vertical(ExprField zeta) {
        return VectorFieldSpec{Kind::Vertical, std::move(zeta)};
    }
    static VectorFieldSpec normal_scaling(ExprField phi) {
        return VectorFieldSpec{Kind::NormalScaling, std::move(phi)};
    }
    static VectorFieldSpec tangent_lift(ExprField y) {
        return VectorFieldSpec{Kind::TangentLift, std::move(y)};
    }

    /// Max deviation between the symbolic Jacobian and central differences
    /// over the sample points.
    double derivative_consistency(const std::vector<VecD>& samples, double h = 1e-5) const {
        double worst = 0;
        for (const auto& x : samples) {
            MatD j = data.jacobian(x);
            for (int v = 0; v < data.nvars; ++v) {
                VecD xp = x, xm = x;
                xp[v] += h;
                xm[v] -= h;
                VecD fp = data.value(xp), fm = data.value(xm);
                for (int c = 0; c < data.dim(); ++c)
                    worst = std::max(worst,
                                     std::abs((fp[c] - fm[c]) / (2 * h) - j(c, v)));
            }
        }
        return worst;
    }
};

/// Compact support audit: |X| at the domain boundary samples.
inline double boundary_sup(const ExprField& field, const Domain& domain, int samples = 64) {
    double worst = 0;
    Box bb = domain.bounding_box();
    const int m = bb.dim();
    if (domain.kind == Domain::Kind::BallKind && m == 2) {
        for (int i = 0; i < samples; ++i) {
            double th = 2 * M_PI * i / samples;
            VecD x = {domain.center[0] + domain.radius * std::cos(th),
                      domain.center[1] + domain.radius * std::sin(th)};
            worst = std::max(worst, norm(field.value(x)));
        }
        return worst;
    }
    // box (or 1-d ball = interval): walk the faces
    for (int k = 0; k < m; ++k)
        for (double side : {0.0, 1.0}) {
            for (int i = 0; i <= samples; ++i) {
                VecD x(m);
                for (int l = 0; l < m; ++l) {
                    double t = (l == (k + 1) % m && m > 1)
                                   ? static_cast<double>(i) / samples
                                   : 0.5;
                    x[l] = bb.lo[l] + t * (bb.hi[l] - bb.lo[l]);
                }
                x[k] = side == 0.0 ? bb.lo[k] : bb.hi[k];
                worst = std::max(worst, norm(field.value(x)));
            }
        }
    return worst;
}

/// Validates a field spec against the chart domain: support for the
/// projection-based variants, derivative consistency for all. Returns an
/// explanatory message on failure.
inline std::optional<std::string> validate_field_spec(const VectorFieldSpec& spec,
                                                      const Domain& chart_domain,
                                                      double support_tol = 1e-10) {
    if (spec.kind != VectorFieldSpec::Kind::Vertical) {
        double sup = boundary_sup(spec.data, chart_domain);
        if (sup > support_tol)
            return "field not compactly supported: boundary sup " + std::to_string(sup);
    }
    std::vector<VecD> samples;
    Box bb = chart_domain.bounding_box();
    for (int i = 1; i < 4; ++i) {
        VecD x(spec.data.nvars, 0.0);
        for (int v = 0; v < spec.data.nvars && v < bb.dim(); ++v)
            x[v] = bb.lo[v] + (bb.hi[v] - bb.lo[v]) * i / 4.0;
        samples.push_back(x);
    }
    double dc = spec.derivative_consistency(samples);
    if (dc > 1e-6) return "derivative inconsistency " + std::to_string(dc);
    return std::nullopt;
}

/// Graph variation: vertical field chi(x,y) = (0, zeta(x,y)).
/// delta G_f(chi) = int sum_i (D_x zeta + D_y zeta Df_i) : Df_i up to
/// C int |D zeta| |Df|^3.
inline ExpansionReport graph_variation(const AnalyticSheetBundle& f, const ExprField& zeta,
                                       int order = 32) {
    const int m = f.m(), n = f.n();
    if (zeta.dim() != n || zeta.nvars != m + n)
        throw std::invalid_argument("graph_variation: zeta must map (x,y) to R^n");
    ExpansionReport rep;

    auto deformed = [&](double eps) {
        ParamSurface s;
        s.m = m;
        s.ambient = m + n;
        s.q = f.q();
        s.domain = f.domain();
        s.eval = [&f, &zeta, eps, m, n](int i, const VecD& x, VecD& val, MatD& jac) {
            VecD y = f.value(i, x);
            VecD xy = x;
            xy.insert(xy.end(), y.begin(), y.end());
            VecD z = zeta.value(xy);
            MatD dz = zeta.jacobian(xy);  // n x (m+n)
            MatD df = f.jacobian(i, x);   // n x m
            val.assign(m + n, 0.0);
            for (int k = 0; k < m; ++k) val[k] = x[k];
            for (int c = 0; c < n; ++c) val[m + c] = y[c] + eps * z[c];
            jac = MatD(m + n, m);
            for (int k = 0; k < m; ++k) jac(k, k) = 1.0;
            for (int c = 0; c < n; ++c)
                for (int k = 0; k < m; ++k) {
                    double dzd = dz(c, k);
                    for (int l = 0; l < n; ++l) dzd += dz(c, m + l) * df(l, k);
                    jac(m + c, k) = df(c, k) + eps * dzd;
                }
        };
        return s;
    };

    auto rule = domain_rule(f.domain(), order);
    double main = 0, bound = 0;
    for (const auto& qn : rule)
        for (int i = 0; i < f.q(); ++i) {
            VecD y = f.value(i, qn.x);
            VecD xy = qn.x;
            xy.insert(xy.end(), y.begin(), y.end());
            MatD dz = zeta.jacobian(xy);
            MatD df = f.jacobian(i, qn.x);
            double term = 0;
            for (int c = 0; c < n; ++c)
                for (int k = 0; k < m; ++k) {
                    double dzd = dz(c, k);
                    for (int l = 0; l < n; ++l) dzd += dz(c, m + l) * df(l, k);
                    term += dzd * df(c, k);
                }
            main += qn.w * term;
            double dfn = frobenius(df);
            bound += qn.w * frobenius(dz) * dfn * dfn * dfn;
        }

    auto undeformed = deformed(0.0);
    double div = divergence_value(
        undeformed,
        [&](const VecD& p) {
            VecD z = zeta.value(p);
            VecD x(m + n, 0.0);
            for (int c = 0; c < n; ++c) x[m + c] = z[c];
            return x;
        },
        [&](const VecD& p) -> std::optional<MatD> {
            MatD dz = zeta.jacobian(p);
            MatD dx(m + n, m + n);
            for (int c = 0; c < n; ++c)
                for (int k = 0; k < m + n; ++k) dx(m + c, k) = dz(c, k);
            return dx;
        },
        order);
    auto var = fd_variation([&](double e) { return parametrized_mass(deformed(e), order); }, div);

    rep.oracle = var.fd_delta;
    rep.mains = {{"graph_variation_main", main}};
    rep.bound_rhs = bound;
    rep.extras["divergence_delta"] = var.divergence_delta;
    rep.extras["fd_noise"] = var.fd_noise;
    rep.extras["fd_div_rel_gap"] = var.rel_gap;
    rep.extras["fd_div_agree"] = var.agree ? 1.0 : 0.0;
    rep.finalize();
    return rep;
}

/// Outer variation: X(p) = phi(p(p)) (p - p(p)). The deformation scales
/// the sheets by (1 + eps phi).
inline ExpansionReport outer_variation(const NormalQField& field, const ExprField& phi_test,
                                       int order = 32) {
    const auto& base = field.base();
    const int m = base.m(), amb = base.ambient();
    if (phi_test.dim() != 1 || phi_test.nvars != m)
        throw std::invalid_argument("outer_variation: phi must be scalar on the chart");
    ExpansionReport rep;

    auto deformed_surface = [&](double eps) {
        ParamSurface s = field_surface(field);
        auto base_surf = s.eval;
        auto base_ptr = field.base_ptr();
        s.eval = [base_surf, base_ptr, &field, &phi_test, eps, m, amb](int i, const VecD& x,
                                                                       VecD& val, MatD& jac) {
            auto ps = field.sample(x);
            double ph = phi_test.comps[0]->eval(x);
            MatD dph = phi_test.jacobian(x);
            double fac = 1.0 + eps * ph;
            val = vec_add(base_ptr->chart(x), vec_scale(fac, ps.values[i]));
            jac = MatD(amb, m);
            for (int k = 0; k < m; ++k) {
                VecD col = base_ptr->chart_derivative(x, k);
                col = vec_add(col, vec_scale(fac, ps.chart_dn[i][k]));
                col = vec_add(col, vec_scale(eps * dph(0, k), ps.values[i]));
                for (int r = 0; r < amb; ++r) jac(r, k) = col[r];
            }
        };
        return s;
    };

    auto rule = domain_rule(base.domain(), order);
    double main = 0, err1 = 0, bound = 0;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        double ph = phi_test.comps[0]->eval(qn.x);
        MatD dph = phi_test.jacobian(qn.x);
        // M-gradient of phi in the orthonormal frame
        VecD dphi_frame(m, 0.0);
        for (int a = 0; a < m; ++a)
            for (int k = 0; k < m; ++k)
                dphi_frame[a] += ps.frame.chart_coeff[a][k] * dph(0, k);
        double term = ph * ps.dn_sq_total;
        for (int i = 0; i < field.q(); ++i)
            for (int a = 0; a < m; ++a)
                term += dot(ps.values[i], ps.dn[i][a]) * dphi_frame[a];
        main += w * term;
        err1 += w * ph * ps.h_dot_eta;
        auto b = detail_var::bound_data(ps);
        double dphi_norm = norm(dphi_frame);
        bound += w * (std::abs(ph) * b.a_norm * b.a_norm * b.n_norm * b.n_norm +
                      std::abs(ph) * (b.dn_norm * b.dn_norm * b.n_norm * b.a_norm +
                                      b.dn_norm * b.dn_norm * b.dn_norm * b.dn_norm) +
                      dphi_norm * (b.dn_norm * b.dn_norm * b.dn_norm * b.n_norm +
                                   b.dn_norm * b.n_norm * b.n_norm * b.a_norm));
    }
    err1 *= -field.q();

    auto base_ptr = field.base_ptr();
    double div = divergence_value(
        field_surface(field),
        [base_ptr, &phi_test](const VecD& p) {
            auto pr = base_ptr->nearest_point_projection(p);
            return vec_scale(phi_test.comps[0]->eval(pr.chart_point), pr.offset);
        },
        [](const VecD&) -> std::optional<MatD> { return std::nullopt; }, order);
    auto var = fd_variation(
        [&](double e) { return parametrized_mass(deformed_surface(e), order); }, div);

    rep.oracle = var.fd_delta;
    rep.mains = {{"outer_main", main}, {"err1_mean_curvature", err1}};
    rep.bound_rhs = bound;
    rep.extras["divergence_delta"] = var.divergence_delta;
    rep.extras["fd_noise"] = var.fd_noise;
    rep.extras["fd_div_rel_gap"] = var.rel_gap;
    rep.extras["fd_div_agree"] = var.agree ? 1.0 : 0.0;
    rep.finalize();
    return rep;
}

/// Inner variation: X(p) = Y(p(p)) for a tangent field Y given in chart
/// velocity form Y(Phi(x)) = DPhi(x) y(x). The deformation composes the
/// normal sheets with the inverse chart isotopy psi_eps(x) = x + eps y(x).
inline ExpansionReport inner_variation(const NormalQField& field, const ExprField& y_chart,
                                       int order = 32) {
    const auto& base = field.base();
    const int m = base.m(), n = base.n(), amb = base.ambient();
    if (y_chart.dim() != m || y_chart.nvars != m)
        throw std::invalid_argument("inner_variation: y must be a chart vector field");
    ExpansionReport rep;
    auto base_ptr = field.base_ptr();

    // ambient tangent field and its frame derivatives at a chart point
    auto tangent_data = [&](const VecD& x, const NormalQField::PointSample& ps, VecD& y_amb,
                            std::vector<VecD>& dy_frame) {
        VecD y = y_chart.value(x);
        MatD dy = y_chart.jacobian(x);
        y_amb.assign(amb, 0.0);
        for (int l = 0; l < m; ++l)
            y_amb = vec_add(y_amb, vec_scale(y[l], base.chart_derivative(x, l)));
        // chart derivatives d_k (Y o Phi)
        std::vector<VecD> chart_dy(m, VecD(amb, 0.0));
        for (int k = 0; k < m; ++k) {
            for (int l = 0; l < m; ++l) {
                chart_dy[k] = vec_add(chart_dy[k],
                                      vec_scale(dy(l, k), base.chart_derivative(x, l)));
                VecD second(amb, 0.0);
                for (int c = 0; c < n; ++c) second[m + c] = base.phi_second(c, l, k, x);
                chart_dy[k] = vec_add(chart_dy[k], vec_scale(y[l], second));
            }
        }
        dy_frame.assign(m, VecD(amb, 0.0));
        for (int a = 0; a < m; ++a)
            for (int k = 0; k < m; ++k)
                dy_frame[a] =
                    vec_add(dy_frame[a], vec_scale(ps.frame.chart_coeff[a][k], chart_dy[k]));
    };

    auto rule = domain_rule(base.domain(), order);
    double main = 0, err1 = 0, bound = 0;
    const double fd = 1e-5;
    for (const auto& qn : rule) {
        auto ps = field.sample(qn.x);
        double w = qn.w * ps.area_element;
        VecD y_amb;
        std::vector<VecD> dy_frame;
        tangent_data(qn.x, ps, y_amb, dy_frame);
        MatD wmat(m, m);  // W_ab = <D_{xi_a} Y, xi_b>
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) wmat(a, b) = dot(dy_frame[a], ps.frame.tangent[b]);
        double div_y = 0;
        for (int a = 0; a < m; ++a) div_y += wmat(a, a);
        double term = 0.5 * ps.dn_sq_total * div_y;
        for (int i = 0; i < field.q(); ++i)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    term -= wmat(a, b) * dot(ps.dn[i][a], ps.dn[i][b]);
        main += w * term;

        // D_Y H by finite differences of H along the chart velocity
        VecD yc = y_chart.value(qn.x);
        VecD xp = vec_add(qn.x, vec_scale(fd, yc));
        VecD xm = vec_sub(qn.x, vec_scale(fd, yc));
        VecD dyh = vec_scale(1.0 / (2 * fd), vec_sub(base.curvature(xp).mean_curvature,
                                                     base.curvature(xm).mean_curvature));
        err1 += w * (ps.h_dot_eta * div_y + dot(dyh, ps.eta_n));

        auto b = detail_var::bound_data(ps);
        double ynorm = norm(y_amb);
        double dynorm = 0;
        for (const auto& d : dy_frame) dynorm += dot(d, d);
        dynorm = std::sqrt(dynorm);
        bound += w * (b.a_norm * b.a_norm * (dynorm * b.n_norm * b.n_norm +
                                             ynorm * b.n_norm * b.dn_norm) +
                      ynorm * b.a_norm * b.dn_norm * b.dn_norm * (b.n_norm + b.dn_norm) +
                      dynorm * (b.a_norm * b.n_norm * b.n_norm * b.dn_norm +
                                b.dn_norm * b.dn_norm * b.dn_norm * b.dn_norm));
    }
    err1 *= -field.q();

    // deformed mass: sheets composed with psi_eps^{-1}
    auto deformed_mass = [&](double eps) {
        ParamSurface s;
        s.m = m;
        s.ambient = amb;
        s.q = field.q();
        s.domain = base.domain();
        s.eval = [&, eps](int i, const VecD& x, VecD& val, MatD& jac) {
            // invert psi_eps by Newton: xt + eps y(xt) = x
            VecD xt = x;
            for (int it = 0; it < 50; ++it) {
                VecD r = vec_sub(vec_add(xt, vec_scale(eps, y_chart.value(xt))), x);
                MatD j = y_chart.jacobian(xt);
                MatD sys = MatD::identity(m);
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b) sys(a, b) += eps * j(a, b);
                auto step = solve(sys, r);
                if (!step) throw std::runtime_error("inner_variation: isotopy inversion failed");
                double sn = 0;
                for (int k = 0; k < m; ++k) {
                    xt[k] -= (*step)[k];
                    sn = std::max(sn, std::abs((*step)[k]));
                }
                if (sn < 1e-14) break;
            }
            auto ps = field.sample(xt);
            val = vec_add(base.chart(x), ps.values[i]);
            // D xt = (I + eps Dy(xt))^{-1}
            MatD j = y_chart.jacobian(xt);
            MatD sys = MatD::identity(m);
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) sys(a, b) += eps * j(a, b);
            MatD dxt(m, m);
            for (int c = 0; c < m; ++c) {
                VecD e(m, 0.0);
                e[c] = 1.0;
                auto col = solve(sys, e);
                for (int r = 0; r < m; ++r) dxt(r, c) = (*col)[r];
            }
            jac = MatD(amb, m);
            for (int k = 0; k < m; ++k) {
                VecD col = base.chart_derivative(x, k);
                for (int l = 0; l < m; ++l)
                    col = vec_add(col, vec_scale(dxt(l, k), ps.chart_dn[i][l]));
                for (int r = 0; r < amb; ++r) jac(r, k) = col[r];
            }
        };
        return parametrized_mass(s, order);
    };

    double div = divergence_value(
        field_surface(field),
        [base_ptr, &y_chart, m](const VecD& p) {
            auto pr = base_ptr->nearest_point_projection(p);
            VecD y = y_chart.value(pr.chart_point);
            VecD y_amb(p.size(), 0.0);
            for (int l = 0; l < m; ++l)
                y_amb = vec_add(y_amb,
                                vec_scale(y[l], base_ptr->chart_derivative(pr.chart_point, l)));
            return y_amb;
        },
        [](const VecD&) -> std::optional<MatD> { return std::nullopt; }, order);
    auto var = fd_variation(deformed_mass, div);

    rep.oracle = var.fd_delta;
    rep.mains = {{"inner_main", main}, {"err1_mean_curvature", err1}};
    rep.bound_rhs = bound;
    rep.extras["divergence_delta"] = var.divergence_delta;
    rep.extras["fd_noise"] = var.fd_noise;
    rep.extras["fd_div_rel_gap"] = var.rel_gap;
    rep.extras["fd_div_agree"] = var.agree ? 1.0 : 0.0;
    rep.finalize();
    return rep;
}

}  // namespace qcurrents
