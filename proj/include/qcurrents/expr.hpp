#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcurrents/linalg.hpp"
#include "qcurrents/rational.hpp"

namespace qcurrents {

/// Closed-form scalar expression in named variables. The grammar is the
/// minimal catalog used throughout: variables, rational literals, + - * ^,
/// sin, cos (division only by constant literals). Derivatives are symbolic,
/// so analytic fields carry exact derivative expressions of any order.
class Expr {
public:
    enum class Kind { Const, Var, Add, Sub, Mul, Neg, Pow, Sin, Cos };
    using Ptr = std::shared_ptr<const Expr>;

    Kind kind;
    Rat cval;       // Const
    int var = -1;   // Var
    int expo = 0;   // Pow
    Ptr a, b;

    static Ptr constant(Rat v) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Const;
        e->cval = std::move(v);
        return e;
    }
    static Ptr variable(int idx) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Var;
        e->var = idx;
        return e;
    }
    static Ptr add(Ptr x, Ptr y) {
        if (is_zero(x)) return y;
        if (is_zero(y)) return x;
        if (x->kind == Kind::Const && y->kind == Kind::Const) return constant(x->cval + y->cval);
        return node(Kind::Add, x, y);
    }
    static Ptr sub(Ptr x, Ptr y) {
        if (is_zero(y)) return x;
        if (x->kind == Kind::Const && y->kind == Kind::Const) return constant(x->cval - y->cval);
        if (is_zero(x)) return neg(y);
        return node(Kind::Sub, x, y);
    }
    static Ptr mul(Ptr x, Ptr y) {
        if (is_zero(x) || is_zero(y)) return constant(Rat(0));
        if (is_one(x)) return y;
        if (is_one(y)) return x;
        if (x->kind == Kind::Const && y->kind == Kind::Const) return constant(x->cval * y->cval);
        return node(Kind::Mul, x, y);
    }
    static Ptr neg(Ptr x) {
        if (x->kind == Kind::Const) return constant(-x->cval);
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Neg;
        e->a = x;
        return e;
    }
    static Ptr pow(Ptr x, int k) {
        if (k < 0) throw std::invalid_argument("expr: negative exponent");
        if (k == 0) return constant(Rat(1));
        if (k == 1) return x;
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Pow;
        e->a = x;
        e->expo = k;
        return e;
    }
    static Ptr sin(Ptr x) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Sin;
        e->a = x;
        return e;
    }
    static Ptr cos(Ptr x) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Cos;
        e->a = x;
        return e;
    }

    double eval(const VecD& x) const {
        switch (kind) {
            case Kind::Const: return to_double(cval);
            case Kind::Var: return x.at(var);
            case Kind::Add: return a->eval(x) + b->eval(x);
            case Kind::Sub: return a->eval(x) - b->eval(x);
            case Kind::Mul: return a->eval(x) * b->eval(x);
            case Kind::Neg: return -a->eval(x);
            case Kind::Pow: return std::pow(a->eval(x), expo);
            case Kind::Sin: return std::sin(a->eval(x));
            case Kind::Cos: return std::cos(a->eval(x));
        }
        return 0;
    }

    /// Exact evaluation; empty on sin/cos subtrees.
    std::optional<Rat> eval_exact(const VecR& x) const {
        switch (kind) {
            case Kind::Const: return cval;
            case Kind::Var: return x.at(var);
            case Kind::Add: {
                auto u = a->eval_exact(x), v = b->eval_exact(x);
                if (!u || !v) return std::nullopt;
                return *u + *v;
            }
            case Kind::Sub: {
                auto u = a->eval_exact(x), v = b->eval_exact(x);
                if (!u || !v) return std::nullopt;
                return *u - *v;
            }
            case Kind::Mul: {
                auto u = a->eval_exact(x), v = b->eval_exact(x);
                if (!u || !v) return std::nullopt;
                return *u * *v;
            }
            case Kind::Neg: {
                auto u = a->eval_exact(x);
                if (!u) return std::nullopt;
                return -*u;
            }
            case Kind::Pow: {
                auto u = a->eval_exact(x);
                if (!u) return std::nullopt;
                Rat r(1);
                for (int i = 0; i < expo; ++i) r *= *u;
                return r;
            }
            case Kind::Sin:
            case Kind::Cos: return std::nullopt;
        }
        return std::nullopt;
    }

    Ptr derivative(int v) const {
        switch (kind) {
            case Kind::Const: return constant(Rat(0));
            case Kind::Var: return constant(Rat(var == v ? 1 : 0));
            case Kind::Add: return add(a->derivative(v), b->derivative(v));
            case Kind::Sub: return sub(a->derivative(v), b->derivative(v));
            case Kind::Mul:
                return add(mul(a->derivative(v), b), mul(a, b->derivative(v)));
            case Kind::Neg: return neg(a->derivative(v));
            case Kind::Pow:
                return mul(mul(constant(Rat(expo)), pow(a, expo - 1)), a->derivative(v));
            case Kind::Sin: return mul(cos(a), a->derivative(v));
            case Kind::Cos: return neg(mul(sin(a), a->derivative(v)));
        }
        return constant(Rat(0));
    }

    /// Total polynomial degree; empty when sin/cos present.
    std::optional<int> poly_degree() const {
        switch (kind) {
            case Kind::Const: return cval == 0 ? 0 : 0;
            case Kind::Var: return 1;
            case Kind::Add:
            case Kind::Sub: {
                auto u = a->poly_degree(), v = b->poly_degree();
                if (!u || !v) return std::nullopt;
                return std::max(*u, *v);
            }
            case Kind::Mul: {
                auto u = a->poly_degree(), v = b->poly_degree();
                if (!u || !v) return std::nullopt;
                return *u + *v;
            }
            case Kind::Neg: return a->poly_degree();
            case Kind::Pow: {
                auto u = a->poly_degree();
                if (!u) return std::nullopt;
                return *u * expo;
            }
            case Kind::Sin:
            case Kind::Cos: return std::nullopt;
        }
        return std::nullopt;
    }

private:
    static Ptr node(Kind k, Ptr x, Ptr y) {
        auto e = std::make_shared<Expr>();
        e->kind = k;
        e->a = std::move(x);
        e->b = std::move(y);
        return e;
    }
    static bool is_zero(const Ptr& e) { return e->kind == Kind::Const && e->cval == 0; }
    static bool is_one(const Ptr& e) { return e->kind == Kind::Const && e->cval == 1; }
};

using ExprPtr = Expr::Ptr;

namespace detail {

class ExprParser {
public:
    ExprParser(std::string src, std::vector<std::string> vars)
        : src_(std::move(src)), vars_(std::move(vars)) {}

    ExprPtr parse() {
        auto e = parse_sum();
        skip_ws();
        if (pos_ != src_.size())
            throw std::invalid_argument("expr parse: trailing input at '" + rest() + "'");
        return e;
    }

private:
    ExprPtr parse_sum() {
        auto e = parse_term();
        while (true) {
            skip_ws();
            if (peek() == '+') { ++pos_; e = Expr::add(e, parse_term()); }
            else if (peek() == '-') { ++pos_; e = Expr::sub(e, parse_term()); }
            else return e;
        }
    }

    ExprPtr parse_term() {
        auto e = parse_factor();
        while (true) {
            skip_ws();
            if (peek() == '*') { ++pos_; e = Expr::mul(e, parse_factor()); }
            else if (peek() == '/') {
                ++pos_;
                auto d = parse_factor();
                if (d->kind != Expr::Kind::Const || d->cval == 0)
                    throw std::invalid_argument("expr parse: '/' only by nonzero constants");
                e = Expr::mul(e, Expr::constant(Rat(1) / d->cval));
            } else return e;
        }
    }

    ExprPtr parse_factor() {
        auto e = parse_unary();
        skip_ws();
        if (peek() == '^') {
            ++pos_;
            skip_ws();
            std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (start == pos_) throw std::invalid_argument("expr parse: '^' needs integer exponent");
            e = Expr::pow(e, std::stoi(src_.substr(start, pos_ - start)));
        }
        return e;
    }

    ExprPtr parse_unary() {
        skip_ws();
        if (peek() == '-') { ++pos_; return Expr::neg(parse_unary()); }
        if (peek() == '+') { ++pos_; return parse_unary(); }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        skip_ws();
        char c = peek();
        if (c == '(') {
            ++pos_;
            auto e = parse_sum();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            std::string name = src_.substr(start, pos_ - start);
            if (name == "sin" || name == "cos") {
                expect('(');
                auto e = parse_sum();
                expect(')');
                return name == "sin" ? Expr::sin(e) : Expr::cos(e);
            }
            if (name == "pi") return Expr::constant(rat_from_double(M_PI));
            for (std::size_t i = 0; i < vars_.size(); ++i)
                if (vars_[i] == name) return Expr::variable(static_cast<int>(i));
            throw std::invalid_argument("expr parse: unknown symbol '" + name + "'");
        }
        throw std::invalid_argument("expr parse: unexpected input at '" + rest() + "'");
    }

    ExprPtr parse_number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
            ++pos_;
        return Expr::constant(rat_parse(src_.substr(start, pos_ - start)));
    }

    char peek() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c)
            throw std::invalid_argument(std::string("expr parse: expected '") + c + "' at '" + rest() + "'");
        ++pos_;
    }
    std::string rest() const { return src_.substr(std::min(pos_, src_.size())); }

    std::string src_;
    std::vector<std::string> vars_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline ExprPtr parse_expr(const std::string& src, const std::vector<std::string>& vars) {
    return detail::ExprParser(src, vars).parse();
}

/// Vector-valued closed-form field with its symbolic Jacobian.
struct ExprField {
    int nvars = 0;
    std::vector<ExprPtr> comps;
    std::vector<std::vector<ExprPtr>> jac;  // [comp][var]

    static ExprField make(int nvars, std::vector<ExprPtr> comps) {
        ExprField f;
        f.nvars = nvars;
        f.comps = std::move(comps);
        f.jac.resize(f.comps.size());
        for (std::size_t c = 0; c < f.comps.size(); ++c) {
            f.jac[c].resize(nvars);
            for (int v = 0; v < nvars; ++v) f.jac[c][v] = f.comps[c]->derivative(v);
        }
        return f;
    }

    static ExprField parse(const std::vector<std::string>& sources,
                           const std::vector<std::string>& vars) {
        std::vector<ExprPtr> comps;
        for (const auto& src : sources) comps.push_back(parse_expr(src, vars));
        return make(static_cast<int>(vars.size()), std::move(comps));
    }

    int dim() const { return static_cast<int>(comps.size()); }

    VecD value(const VecD& x) const {
        VecD v(comps.size());
        for (std::size_t c = 0; c < comps.size(); ++c) v[c] = comps[c]->eval(x);
        return v;
    }

    MatD jacobian(const VecD& x) const {
        MatD j(comps.size(), nvars);
        for (std::size_t c = 0; c < comps.size(); ++c)
            for (int v = 0; v < nvars; ++v) j(c, v) = jac[c][v]->eval(x);
        return j;
    }
};

/// Variable names x1..xm (the chart coordinates).
inline std::vector<std::string> chart_vars(int m) {
    std::vector<std::string> v;
    for (int i = 1; i <= m; ++i) v.push_back("x" + std::to_string(i));
    return v;
}

/// Variable names x1..xm,y1..yn for fields on Omega x R^n.
inline std::vector<std::string> graph_vars(int m, int n) {
    auto v = chart_vars(m);
    for (int i = 1; i <= n; ++i) v.push_back("y" + std::to_string(i));
    return v;
}

}  // namespace qcurrents
