#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcurrents/current.hpp"
#include "qcurrents/mesh.hpp"
#include "qcurrents/paqmap.hpp"
#include "qcurrents/qpoint.hpp"
#include "qcurrents/quadrature.hpp"
#include "qcurrents/variational.hpp"

namespace qcurrents {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void config_require(bool cond, const std::string& message) {
    if (!cond) throw ConfigError(message);
}

inline json rat_to_json(const Rat& r) { return rat_str(r); }

inline Rat rat_from_json(const json& j) {
    if (j.is_string()) return rat_parse(j.get<std::string>());
    if (j.is_number_integer()) return Rat(j.get<long long>());
    if (j.is_number_float()) return rat_from_double(j.get<double>());
    throw ConfigError("expected a rational (string or number), got " + j.dump());
}

inline json vecr_to_json(const VecR& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(rat_to_json(x));
    return a;
}

inline VecR vecr_from_json(const json& j) {
    config_require(j.is_array(), "expected an array of rationals");
    VecR v;
    for (const auto& x : j) v.push_back(rat_from_json(x));
    return v;
}

/// QPoint: array of arrays; exact coordinates as "num/den" strings.
inline json qpoint_to_json(const QPointR& s) {
    json a = json::array();
    for (const auto& p : s.points()) a.push_back(vecr_to_json(p));
    return a;
}

inline json qpoint_to_json(const QPoint& s) {
    json a = json::array();
    for (const auto& p : s.points()) {
        json row = json::array();
        for (double x : p) row.push_back(x);
        a.push_back(row);
    }
    return a;
}

inline QPointR qpoint_from_json(const json& j) {
    config_require(j.is_array() && !j.empty(), "QPoint: expected a non-empty array of points");
    std::vector<VecR> pts;
    for (const auto& p : j) pts.push_back(vecr_from_json(p));
    const int n = static_cast<int>(pts[0].size());
    return QPointR(n, std::move(pts));
}

/// Mesh + map file format: vertices, simplices, sheets (rational strings).
inline json paqmap_to_json(const PAQMap& f) {
    json j;
    j["m"] = f.mesh.dim;
    j["ambient"] = f.mesh.ambient;
    j["n"] = f.n;
    j["Q"] = f.q;
    j["vertices"] = json::array();
    for (const auto& v : f.mesh.vertices) j["vertices"].push_back(vecr_to_json(v));
    j["simplices"] = f.mesh.simplices;
    json sheets = json::array();
    for (const auto& per_simplex : f.sheets) {
        json row = json::array();
        for (const auto& sheet : per_simplex) {
            json vals = json::array();
            for (const auto& v : sheet) vals.push_back(vecr_to_json(v));
            row.push_back(vals);
        }
        sheets.push_back(row);
    }
    j["sheets"] = sheets;
    return j;
}

inline PAQMap paqmap_from_json(const json& j) {
    for (const char* key : {"m", "n", "Q", "vertices", "simplices", "sheets"})
        config_require(j.contains(key), std::string("map: missing field '") + key + "'");
    PAQMap f;
    f.mesh.dim = j["m"].get<int>();
    f.mesh.ambient = j.contains("ambient") ? j["ambient"].get<int>() : f.mesh.dim;
    f.n = j["n"].get<int>();
    f.q = j["Q"].get<int>();
    config_require(f.q >= 1, "map: Q must be positive");
    for (const auto& v : j["vertices"]) f.mesh.vertices.push_back(vecr_from_json(v));
    for (const auto& s : j["simplices"]) {
        config_require(s.is_array() && static_cast<int>(s.size()) == f.mesh.dim + 1,
                       "map: simplex arity mismatch");
        f.mesh.simplices.push_back(s.get<std::vector<int>>());
    }
    for (const auto& row : j["sheets"]) {
        std::vector<std::vector<VecR>> per_simplex;
        config_require(static_cast<int>(row.size()) == f.q, "map: sheet count mismatch");
        for (const auto& sheet : row) {
            std::vector<VecR> vals;
            for (const auto& v : sheet) vals.push_back(vecr_from_json(v));
            per_simplex.push_back(std::move(vals));
        }
        f.sheets.push_back(std::move(per_simplex));
    }
    if (auto msg = f.validate()) throw ConfigError("map: " + *msg);
    return f;
}

/// Current serialization: cells with rational coordinates plus integer
/// multiplicities.
inline json current_to_json(const SimplicialCurrent& t) {
    json j;
    j["dimension"] = t.dim;
    j["ambient"] = t.ambient;
    j["cells"] = json::array();
    for (const auto& [verts, mult] : t.cells) {
        json cell;
        cell["vertices"] = json::array();
        for (const auto& v : verts) cell["vertices"].push_back(vecr_to_json(v));
        cell["multiplicity"] = mult;
        j["cells"].push_back(cell);
    }
    return j;
}

inline SimplicialCurrent current_from_json(const json& j) {
    for (const char* key : {"dimension", "ambient", "cells"})
        config_require(j.contains(key), std::string("current: missing field '") + key + "'");
    SimplicialCurrent t(j["dimension"].get<int>(), j["ambient"].get<int>());
    for (const auto& cell : j["cells"]) {
        std::vector<VecR> verts;
        for (const auto& v : cell["vertices"]) verts.push_back(vecr_from_json(v));
        t.add_cell(std::move(verts), cell["multiplicity"].get<long long>());
    }
    return t;
}

inline json domain_to_json(const Domain& d) {
    json j;
    if (d.kind == Domain::Kind::BoxKind) {
        j["type"] = "box";
        j["lo"] = d.box.lo;
        j["hi"] = d.box.hi;
    } else {
        j["type"] = "ball";
        j["center"] = d.center;
        j["radius"] = d.radius;
    }
    return j;
}

inline Domain domain_from_json(const json& j) {
    config_require(j.contains("type"), "domain: missing 'type'");
    std::string type = j["type"].get<std::string>();
    if (type == "box") {
        config_require(j.contains("lo") && j.contains("hi"), "domain: box needs lo/hi");
        Box b;
        b.lo = j["lo"].get<VecD>();
        b.hi = j["hi"].get<VecD>();
        config_require(b.lo.size() == b.hi.size(), "domain: lo/hi size mismatch");
        for (std::size_t i = 0; i < b.lo.size(); ++i)
            config_require(b.lo[i] < b.hi[i], "domain: lo must be below hi");
        return Domain::make_box(b);
    }
    if (type == "ball") {
        config_require(j.contains("center") && j.contains("radius"), "domain: ball needs center/radius");
        return Domain::make_ball(j["center"].get<VecD>(), j["radius"].get<double>());
    }
    throw ConfigError("domain: unknown type '" + type + "'");
}

inline json report_to_json(const ExpansionReport& r) {
    json j;
    j["mains"] = json::object();
    for (const auto& [k, v] : r.mains) j["mains"][k] = v;
    j["oracle"] = r.oracle;
    j["main_total"] = r.main_total;
    j["residual"] = r.residual;
    j["bound_rhs"] = r.bound_rhs;
    j["fitted_c"] = r.fitted_c;
    j["refinement_delta"] = r.refinement_delta;
    for (const auto& [k, v] : r.extras) j["extras"][k] = v;
    return j;
}

inline json sweep_to_json(const SweepResult& s) {
    json j;
    j["entries"] = json::array();
    for (const auto& e : s.entries) {
        json row;
        row["eps"] = e.eps;
        row["report"] = report_to_json(e.report);
        j["entries"].push_back(row);
    }
    j["slope"] = s.residual_fit.slope;
    j["r2"] = s.residual_fit.r2;
    j["fitted_c_max"] = s.fitted_c_max;
    j["fitted_c_ratio"] = s.fitted_c_ratio;
    return j;
}

/// Deterministic CSV for the epsilon sweep (plot-ready).
inline std::string sweep_to_csv(const SweepResult& s) {
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "eps,oracle,main_total,residual,bound_rhs,fitted_c\n";
    for (const auto& e : s.entries)
        os << fmt(e.eps) << ',' << fmt(e.report.oracle) << ',' << fmt(e.report.main_total) << ','
           << fmt(e.report.residual) << ',' << fmt(e.report.bound_rhs) << ','
           << fmt(e.report.fitted_c) << '\n';
    return os.str();
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

/// Field-wise comparison of two reports with per-field tolerances:
/// numeric leaves must match within abs/rel `tol`, except fitted-constant
/// fields which may drift by a factor `fitted_ratio`.
struct BaselineDiff {
    std::vector<std::string> lines;
    bool clean() const { return lines.empty(); }
};

inline void baseline_walk(const json& a, const json& b, const std::string& path, double tol,
                          double fitted_ratio, BaselineDiff& diff) {
    if (a.is_object() && b.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) {
                diff.lines.push_back(path + "/" + it.key() + ": missing in baseline");
                continue;
            }
            baseline_walk(it.value(), b[it.key()], path + "/" + it.key(), tol, fitted_ratio, diff);
        }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key()))
                diff.lines.push_back(path + "/" + it.key() + ": missing in report");
        return;
    }
    if (a.is_array() && b.is_array()) {
        if (a.size() != b.size()) {
            diff.lines.push_back(path + ": array length " + std::to_string(a.size()) + " vs " +
                                 std::to_string(b.size()));
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i)
            baseline_walk(a[i], b[i], path + "[" + std::to_string(i) + "]", tol, fitted_ratio,
                          diff);
        return;
    }
    if (a.is_number() && b.is_number()) {
        double x = a.get<double>(), y = b.get<double>();
        bool fitted = path.find("fitted_c") != std::string::npos;
        if (fitted) {
            double lo = std::min(std::abs(x), std::abs(y));
            double hi = std::max(std::abs(x), std::abs(y));
            if (hi > tol && lo > 0 && hi / lo > fitted_ratio)
                diff.lines.push_back(path + ": fitted constant drift " + std::to_string(x) +
                                     " vs " + std::to_string(y));
            else if (hi > tol && lo == 0)
                diff.lines.push_back(path + ": fitted constant appeared/vanished");
            return;
        }
        double d = std::abs(x - y);
        double scale = std::max(std::abs(x), std::abs(y));
        if (d > tol && d > tol * scale)
            diff.lines.push_back(path + ": " + std::to_string(x) + " vs " + std::to_string(y));
        return;
    }
    if (a != b) diff.lines.push_back(path + ": " + a.dump() + " vs " + b.dump());
}

inline BaselineDiff baseline_check(const json& report, const json& baseline, double tol = 1e-9,
                                   double fitted_ratio = 2.0) {
    BaselineDiff diff;
    baseline_walk(report, baseline, "", tol, fitted_ratio, diff);
    return diff;
}

}  // namespace qcurrents
