#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/expr.hpp"
#include "qcurrents/linalg.hpp"

namespace qcurrents {

/// Multivariate polynomial with double coefficients, stored sparsely by
/// exponent tuple. Used for test-form coefficients where the integration
/// degree must be known so simplex quadrature can be run at exact degree.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(int nvars) : nvars_(nvars) {}

    static Polynomial constant(int nvars, double c) {
        Polynomial p(nvars);
        if (c != 0) p.terms_[std::vector<int>(nvars, 0)] = c;
        return p;
    }
    static Polynomial variable(int nvars, int idx) {
        Polynomial p(nvars);
        std::vector<int> e(nvars, 0);
        e[idx] = 1;
        p.terms_[e] = 1.0;
        return p;
    }

    int nvars() const { return nvars_; }
    const std::map<std::vector<int>, double>& terms() const { return terms_; }

    int degree() const {
        int d = 0;
        for (const auto& [e, c] : terms_) {
            int s = 0;
            for (int k : e) s += k;
            d = std::max(d, s);
        }
        return d;
    }

    double eval(const VecD& x) const {
        double acc = 0;
        for (const auto& [e, c] : terms_) {
            double t = c;
            for (int i = 0; i < nvars_; ++i)
                for (int k = 0; k < e[i]; ++k) t *= x[i];
            acc += t;
        }
        return acc;
    }

    Polynomial operator+(const Polynomial& o) const {
        Polynomial r = *this;
        for (const auto& [e, c] : o.terms_) r.add_term(e, c);
        return r;
    }
    Polynomial operator-(const Polynomial& o) const {
        Polynomial r = *this;
        for (const auto& [e, c] : o.terms_) r.add_term(e, -c);
        return r;
    }
    Polynomial operator*(const Polynomial& o) const {
        Polynomial r(nvars_);
        for (const auto& [e1, c1] : terms_)
            for (const auto& [e2, c2] : o.terms_) {
                std::vector<int> e(nvars_);
                for (int i = 0; i < nvars_; ++i) e[i] = e1[i] + e2[i];
                r.add_term(e, c1 * c2);
            }
        return r;
    }

    void add_term(const std::vector<int>& e, double c) {
        auto it = terms_.find(e);
        if (it == terms_.end()) {
            if (c != 0) terms_[e] = c;
        } else {
            it->second += c;
            if (it->second == 0) terms_.erase(it);
        }
    }

private:
    int nvars_ = 0;
    std::map<std::vector<int>, double> terms_;
};

/// Expands a sin/cos-free expression into a Polynomial; empty otherwise.
inline std::optional<Polynomial> expr_to_polynomial(const ExprPtr& e, int nvars) {
    using K = Expr::Kind;
    switch (e->kind) {
        case K::Const: return Polynomial::constant(nvars, to_double(e->cval));
        case K::Var:
            if (e->var >= nvars) return std::nullopt;
            return Polynomial::variable(nvars, e->var);
        case K::Add: {
            auto u = expr_to_polynomial(e->a, nvars), v = expr_to_polynomial(e->b, nvars);
            if (!u || !v) return std::nullopt;
            return *u + *v;
        }
        case K::Sub: {
            auto u = expr_to_polynomial(e->a, nvars), v = expr_to_polynomial(e->b, nvars);
            if (!u || !v) return std::nullopt;
            return *u - *v;
        }
        case K::Mul: {
            auto u = expr_to_polynomial(e->a, nvars), v = expr_to_polynomial(e->b, nvars);
            if (!u || !v) return std::nullopt;
            return *u * *v;
        }
        case K::Neg: {
            auto u = expr_to_polynomial(e->a, nvars);
            if (!u) return std::nullopt;
            return Polynomial::constant(nvars, -1) * *u;
        }
        case K::Pow: {
            auto u = expr_to_polynomial(e->a, nvars);
            if (!u) return std::nullopt;
            Polynomial r = Polynomial::constant(nvars, 1);
            for (int i = 0; i < e->expo; ++i) r = r * *u;
            return r;
        }
        case K::Sin:
        case K::Cos: return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace qcurrents
