#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qcurrents {

/// Exact rational scalar used for all chain-level data (mesh coordinates,
/// sheet coefficients, cell keys). Floating point appears only inside
/// volume and quadrature evaluation.
using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rat& r) { return r.convert_to<double>(); }

/// Exact conversion: every finite double is a dyadic rational.
inline Rat rat_from_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("rat_from_double: non-finite");
    if (x == 0.0) return Rat(0);
    int exp = 0;
    double mant = std::frexp(x, &exp);  // x = mant * 2^exp, |mant| in [0.5,1)
    // 53 bits of mantissa
    auto scaled = static_cast<long long>(std::ldexp(mant, 53));
    exp -= 53;
    Rat r(scaled);
    if (exp >= 0) {
        r *= Rat(BigInt(1) << exp);
    } else {
        r /= Rat(BigInt(1) << (-exp));
    }
    return r;
}

/// Parses "p/q", "p", or a decimal literal like "-0.25" (exact).
inline Rat rat_parse(const std::string& s) {
    auto slash = s.find('/');
    if (slash != std::string::npos) {
        BigInt num(s.substr(0, slash));
        BigInt den(s.substr(slash + 1));
        if (den == 0) throw std::invalid_argument("rat_parse: zero denominator in " + s);
        return Rat(num, den);
    }
    auto dot = s.find('.');
    if (dot == std::string::npos) return Rat(BigInt(s));
    std::string digits = s.substr(0, dot) + s.substr(dot + 1);
    std::size_t frac_len = s.size() - dot - 1;
    if (digits.empty() || digits == "-" || digits == "+")
        throw std::invalid_argument("rat_parse: bad literal " + s);
    BigInt num(digits);
    BigInt den = 1;
    for (std::size_t i = 0; i < frac_len; ++i) den *= 10;
    return Rat(num, den);
}

/// "p/q" when the denominator is nontrivial, "p" otherwise.
inline std::string rat_str(const Rat& r) {
    if (denominator(r) == 1) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

}  // namespace qcurrents
