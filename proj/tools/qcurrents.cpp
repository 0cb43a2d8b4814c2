// qcurrents: experiment runner and report emitter for Q-valued maps and
// their induced simplicial currents.
//
// Subcommands: push-forward, boundary, verify-commutation, expand, excess,
// vary, reparam, baseline. Structured results go to JSON, epsilon sweeps
// additionally to CSV; reruns with the same config and seed are
// byte-identical.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "qcurrents/analytic.hpp"
#include "qcurrents/current.hpp"
#include "qcurrents/json_io.hpp"
#include "qcurrents/manifold.hpp"
#include "qcurrents/normal_field.hpp"
#include "qcurrents/overlay.hpp"
#include "qcurrents/parallel.hpp"
#include "qcurrents/reparam.hpp"
#include "qcurrents/rng.hpp"
#include "qcurrents/variational.hpp"

using namespace qcurrents;

namespace {

struct GlobalOpts {
    std::string out;
    long long seed = -1;       // -1: take the config's seed
    int quad_order = 0;        // 0: take the config's order (default 32)
    int threads = 0;
};

std::string replace_extension(const std::string& path, const std::string& ext) {
    auto dot = path.find_last_of('.');
    auto slash = path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + ext;
    return path.substr(0, dot) + ext;
}

std::shared_ptr<BaseManifold> manifold_from_json(const json& j) {
    for (const char* key : {"m", "n", "phi", "domain"})
        config_require(j.contains(key), std::string("manifold: missing '") + key + "'");
    int m = j["m"].get<int>(), n = j["n"].get<int>();
    config_require(m >= 1 && n >= 1, "manifold: dimensions must be positive");
    auto phi = j["phi"].get<std::vector<std::string>>();
    config_require(static_cast<int>(phi.size()) == n, "manifold: phi needs n components");
    double smallness = j.value("smallness", 0.1);
    return std::make_shared<BaseManifold>(
        BaseManifold::parse(m, n, domain_from_json(j["domain"]), phi, smallness));
}

AnalyticSheetBundle bundle_from_json(const json& j) {
    for (const char* key : {"m", "n", "sheets", "domain"})
        config_require(j.contains(key), std::string("bundle: missing '") + key + "'");
    int m = j["m"].get<int>(), n = j["n"].get<int>();
    auto sheets = j["sheets"].get<std::vector<std::vector<std::string>>>();
    config_require(!sheets.empty(), "bundle: needs at least one sheet");
    for (const auto& s : sheets)
        config_require(static_cast<int>(s.size()) == n, "bundle: sheet arity mismatch");
    return AnalyticSheetBundle::parse(m, n, domain_from_json(j["domain"]), sheets);
}

NormalQField field_from_json(std::shared_ptr<const BaseManifold> base, const json& j) {
    config_require(j.contains("sheets"), "field: missing 'sheets'");
    auto sheets = j["sheets"].get<std::vector<std::vector<std::string>>>();
    config_require(!sheets.empty(), "field: needs at least one sheet");
    return NormalQField::parse(std::move(base), sheets);
}

VecD epsilons_from_json(const json& cfg) {
    config_require(cfg.contains("epsilons"), "config: missing 'epsilons'");
    VecD eps = cfg["epsilons"].get<VecD>();
    config_require(eps.size() >= 2, "config: epsilon grid needs at least two entries");
    for (std::size_t i = 1; i < eps.size(); ++i)
        config_require(eps[i] < eps[i - 1], "config: epsilon grid must be strictly decreasing");
    for (double e : eps) config_require(e > 0, "config: epsilons must be positive");
    return eps;
}

struct CheckSet {
    json entries = json::object();
    bool pass = true;

    void add(const std::string& name, double value, double threshold, bool ok) {
        entries[name] = {{"value", value}, {"threshold", threshold}, {"pass", ok}};
        pass = pass && ok;
    }
    void add_flag(const std::string& name, bool ok) {
        entries[name] = {{"pass", ok}};
        pass = pass && ok;
    }
};

void attach_sweep_checks(CheckSet& checks, const SweepResult& sweep, const json& cfg,
                         bool flat, double default_slope_min) {
    json opts = cfg.value("checks", json::object());
    if (flat) {
        double slope_min = opts.value("slope_min", default_slope_min);
        double r2_min = opts.value("r2_min", 0.99);
        checks.add("slope", sweep.residual_fit.slope, slope_min,
                   sweep.residual_fit.slope >= slope_min);
        checks.add("r2", sweep.residual_fit.r2, r2_min, sweep.residual_fit.r2 >= r2_min);
    } else {
        double c_max = opts.value("fitted_c_max", 100.0);
        double ratio_max = opts.value("fitted_c_ratio_max", 2.0);
        checks.add("fitted_c_max", sweep.fitted_c_max, c_max, sweep.fitted_c_max <= c_max);
        checks.add("fitted_c_ratio", sweep.fitted_c_ratio, ratio_max,
                   sweep.fitted_c_ratio <= ratio_max);
    }
}

void attach_agreement_checks(CheckSet& checks, const SweepResult& sweep) {
    bool all = true;
    double worst = 0;
    for (const auto& e : sweep.entries) {
        auto it = e.report.extras.find("fd_div_agree");
        if (it != e.report.extras.end() && it->second != 1.0) all = false;
        auto gap = e.report.extras.find("fd_div_rel_gap");
        if (gap != e.report.extras.end()) worst = std::max(worst, gap->second);
    }
    checks.add("fd_divergence_agreement", worst, 1e-6, all);
}

json run_expansion(const json& cfg, const GlobalOpts& opts) {
    auto base = manifold_from_json(cfg.at("manifold"));
    auto field = field_from_json(base, cfg.at("field"));
    VecD eps = epsilons_from_json(cfg);
    int order = opts.quad_order > 0 ? opts.quad_order : cfg.value("quad_order", 32);
    bool flat = base->c2_norm() < 1e-13;
    std::string functional = cfg.value("functional", std::string("mass"));

    SweepResult sweep;
    if (functional == "mass") {
        sweep = run_sweep([&](double e) { return mass_expansion(field.scaled(e), order); }, eps);
    } else if (functional == "weighted_fiber") {
        config_require(cfg.contains("weight"), "expansion: weighted_fiber needs 'weight'");
        auto g = parse_expr(cfg["weight"].get<std::string>(), chart_vars(base->m()));
        sweep = run_sweep(
            [&](double e) { return weighted_mass_fiber(field.scaled(e), g, order); }, eps);
    } else if (functional == "weighted_ambient") {
        config_require(cfg.contains("weight"), "expansion: weighted_ambient needs 'weight'");
        auto h = ExprField::parse({cfg["weight"].get<std::string>()},
                                  chart_vars(base->ambient()));
        sweep = run_sweep(
            [&](double e) { return weighted_mass_ambient(field.scaled(e), h, order); }, eps);
    } else {
        throw ConfigError("expansion: unknown functional '" + functional + "'");
    }

    CheckSet checks;
    attach_sweep_checks(checks, sweep, cfg, flat, 3.8);
    double worst_refine = 0;
    for (const auto& e : sweep.entries)
        worst_refine = std::max(worst_refine, std::abs(e.report.refinement_delta));
    checks.add("quadrature_refinement", worst_refine, 1e-8, worst_refine < 1e-8);

    json out;
    out["kind"] = "expansion";
    out["functional"] = functional;
    out["flat_base"] = flat;
    out["quad_order"] = order;
    out["sweep"] = sweep_to_json(sweep);
    out["checks"] = checks.entries;
    out["pass"] = checks.pass;
    out["csv"] = sweep_to_csv(sweep);
    return out;
}

json run_excess(const json& cfg, const GlobalOpts& opts) {
    std::string variant = cfg.value("variant", std::string("curvilinear"));
    VecD eps = epsilons_from_json(cfg);
    int order = opts.quad_order > 0 ? opts.quad_order : cfg.value("quad_order", 32);
    SweepResult sweep;
    bool flat = true;
    if (variant == "curvilinear") {
        auto base = manifold_from_json(cfg.at("manifold"));
        auto field = field_from_json(base, cfg.at("field"));
        flat = base->c2_norm() < 1e-13;
        sweep =
            run_sweep([&](double e) { return curvilinear_excess(field.scaled(e), order); }, eps);
    } else if (variant == "cylindrical") {
        auto f = bundle_from_json(cfg.at("bundle"));
        double s = cfg.value("s", 1.0);
        config_require(s > 0, "excess: radius s must be positive");
        config_require(f.domain().kind == Domain::Kind::BallKind
                           ? s <= f.domain().radius
                           : true,
                       "excess: B_s must lie inside the declared domain of f");
        sweep = run_sweep(
            [&](double e) {
                auto scale = Expr::constant(rat_from_double(e));
                std::vector<std::vector<ExprPtr>> sheets;
                for (const auto& sheet : f.sheets()) {
                    std::vector<ExprPtr> comps;
                    for (const auto& c : sheet) comps.push_back(Expr::mul(scale, c));
                    sheets.push_back(std::move(comps));
                }
                AnalyticSheetBundle fe(f.m(), f.n(), f.domain(), std::move(sheets));
                return cylindrical_excess(fe, s, order);
            },
            eps);
    } else {
        throw ConfigError("excess: unknown variant '" + variant + "'");
    }

    CheckSet checks;
    attach_sweep_checks(checks, sweep, cfg, flat, 3.8);
    json out;
    out["kind"] = "excess";
    out["variant"] = variant;
    out["flat_base"] = flat;
    out["quad_order"] = order;
    out["sweep"] = sweep_to_json(sweep);
    out["checks"] = checks.entries;
    out["pass"] = checks.pass;
    out["csv"] = sweep_to_csv(sweep);
    return out;
}

json run_variation(const json& cfg, const GlobalOpts& opts) {
    std::string variant = cfg.value("variant", std::string("graph"));
    VecD eps = epsilons_from_json(cfg);
    int order = opts.quad_order > 0 ? opts.quad_order : cfg.value("quad_order", 16);
    SweepResult sweep;
    bool flat = true;
    double default_slope = 2.8;
    if (variant == "graph") {
        auto f = bundle_from_json(cfg.at("bundle"));
        config_require(cfg.contains("zeta"), "variation: graph variant needs 'zeta'");
        auto zeta = ExprField::parse(cfg["zeta"].get<std::vector<std::string>>(),
                                     graph_vars(f.m(), f.n()));
        auto spec = VectorFieldSpec::vertical(zeta);
        if (auto msg = validate_field_spec(spec, f.domain()))
            throw ConfigError("variation: " + *msg);
        sweep = run_sweep(
            [&](double e) {
                auto scale = Expr::constant(rat_from_double(e));
                std::vector<std::vector<ExprPtr>> sheets;
                for (const auto& sheet : f.sheets()) {
                    std::vector<ExprPtr> comps;
                    for (const auto& c : sheet) comps.push_back(Expr::mul(scale, c));
                    sheets.push_back(std::move(comps));
                }
                AnalyticSheetBundle fe(f.m(), f.n(), f.domain(), std::move(sheets));
                return graph_variation(fe, zeta, order);
            },
            eps);
    } else if (variant == "outer" || variant == "inner") {
        default_slope = 3.8;
        auto base = manifold_from_json(cfg.at("manifold"));
        auto field = field_from_json(base, cfg.at("field"));
        flat = base->c2_norm() < 1e-13;
        if (variant == "outer") {
            config_require(cfg.contains("phi_test"), "variation: outer variant needs 'phi_test'");
            auto phi = ExprField::parse({cfg["phi_test"].get<std::string>()},
                                        chart_vars(base->m()));
            auto spec = VectorFieldSpec::normal_scaling(phi);
            if (auto msg = validate_field_spec(spec, base->domain()))
                throw ConfigError("variation: " + *msg);
            sweep = run_sweep(
                [&](double e) { return outer_variation(field.scaled(e), phi, order); }, eps);
        } else {
            config_require(cfg.contains("y"), "variation: inner variant needs 'y'");
            auto yf = ExprField::parse(cfg["y"].get<std::vector<std::string>>(),
                                       chart_vars(base->m()));
            auto spec = VectorFieldSpec::tangent_lift(yf);
            if (auto msg = validate_field_spec(spec, base->domain()))
                throw ConfigError("variation: " + *msg);
            sweep = run_sweep(
                [&](double e) { return inner_variation(field.scaled(e), yf, order); }, eps);
        }
    } else {
        throw ConfigError("variation: unknown variant '" + variant + "'");
    }

    CheckSet checks;
    attach_agreement_checks(checks, sweep);
    attach_sweep_checks(checks, sweep, cfg, flat, default_slope);
    json out;
    out["kind"] = "variation";
    out["variant"] = variant;
    out["flat_base"] = flat;
    out["quad_order"] = order;
    out["sweep"] = sweep_to_json(sweep);
    out["checks"] = checks.entries;
    out["pass"] = checks.pass;
    out["csv"] = sweep_to_csv(sweep);
    return out;
}

PAQMap random_compatible_map(SplitMix64& rng, int grid, int q, int n) {
    auto mesh = unit_square_mesh(grid);
    std::vector<std::vector<VecR>> values(q);
    for (int j = 0; j < q; ++j) {
        values[j].resize(mesh.vertices.size());
        for (auto& v : values[j]) {
            VecR val(n);
            for (int c = 0; c < n; ++c)
                val[c] = Rat(rng.range(-8, 8), rng.range(1, 6));
            v = std::move(val);
        }
    }
    if (q >= 2 && rng.range(0, 3) == 0) values[q - 1] = values[0];
    return pa_from_vertex_values(mesh, values);
}

json run_commutation(const json& cfg, const GlobalOpts& opts) {
    if (cfg.contains("map")) {
        PAQMap f = cfg["map"].is_string() ? paqmap_from_json(load_json_file(cfg["map"]))
                                          : paqmap_from_json(cfg["map"]);
        auto rep = verify_boundary_commutation(f);
        json out;
        out["kind"] = "commutation";
        out["exact"] = rep.exact;
        out["used_overlay"] = rep.used_overlay;
        out["mismatched_cells"] = rep.mismatches.size();
        out["pass"] = rep.exact;
        return out;
    }
    int count = cfg.value("count", 200);
    long long seed = opts.seed >= 0 ? opts.seed : cfg.value("seed", 7);
    int q_max = cfg.value("q_max", 3);
    int n_max = cfg.value("n_max", 2);
    std::vector<int> grids = cfg.value("grids", std::vector<int>{1, 2, 3, 4, 8, 16});
    config_require(count > 0 && q_max >= 1 && n_max >= 1, "commutation: bad parameters");

    // draw the instance parameters up front so the stream is independent of
    // the evaluation order, then verify in parallel
    struct Instance {
        int grid, q, n;
        std::uint64_t stream;
    };
    SplitMix64 rng(static_cast<std::uint64_t>(seed));
    std::vector<Instance> instances;
    for (int i = 0; i < count; ++i) {
        Instance inst;
        inst.grid = grids[rng.range(0, static_cast<long long>(grids.size()) - 1)];
        inst.q = static_cast<int>(rng.range(1, q_max));
        inst.n = static_cast<int>(rng.range(1, n_max));
        inst.stream = rng.next();
        instances.push_back(inst);
    }
    auto rows = parallel_map_ordered<json>(
        instances.size(),
        [&](std::size_t i) {
            SplitMix64 local(instances[i].stream);
            auto f = random_compatible_map(local, instances[i].grid, instances[i].q,
                                           instances[i].n);
            auto rep = verify_boundary_commutation(f);
            auto grep = verify_graph_boundary_commutation(f);
            json row;
            row["index"] = i;
            row["grid"] = instances[i].grid;
            row["cells"] = f.mesh.cell_count();
            row["Q"] = instances[i].q;
            row["n"] = instances[i].n;
            row["exact"] = rep.exact;
            row["graph_exact"] = grep.exact;
            row["used_overlay"] = rep.used_overlay;
            return row;
        },
        opts.threads);

    bool all = true;
    std::ostringstream csv;
    csv << "index,grid,cells,Q,n,exact,graph_exact\n";
    for (const auto& row : rows) {
        all = all && row["exact"].get<bool>() && row["graph_exact"].get<bool>();
        csv << row["index"] << ',' << row["grid"] << ',' << row["cells"] << ',' << row["Q"] << ','
            << row["n"] << ',' << (row["exact"].get<bool>() ? 1 : 0) << ','
            << (row["graph_exact"].get<bool>() ? 1 : 0) << '\n';
    }
    json out;
    out["kind"] = "commutation";
    out["count"] = count;
    out["seed"] = seed;
    out["exact"] = all;
    out["instances"] = rows;
    out["pass"] = all;
    out["csv"] = csv.str();
    return out;
}

json ledger_to_json(const ReparamLedger& led) {
    json j;
    j["cambio1_ok"] = led.cambio1_ok;
    j["cambio1_worst"] = led.cambio1_worst;
    j["media_fitted_c"] = led.media_fitted_c;
    j["lip_fitted_c"] = led.lip_fitted_c;
    j["cambio10_ok"] = led.cambio10_ok;
    j["cambio10_worst"] = led.cambio10_worst;
    j["multiplicity_ok"] = led.multiplicity_ok;
    j["hypothesis_ok"] = led.hypothesis_ok;
    return j;
}

json run_reparam_config(const json& cfg, const GlobalOpts& opts) {
    std::string mode = cfg.value("mode", std::string("analytic"));
    json out;
    out["kind"] = "reparam";
    out["mode"] = mode;
    if (mode == "analytic") {
        auto base = manifold_from_json(cfg.at("manifold"));
        auto f = bundle_from_json(cfg.at("bundle"));
        double c0 = cfg.value("c0", 0.05);
        int grid = cfg.value("grid", 33);
        int random_count = cfg.value("random", 1000);
        long long seed = opts.seed >= 0 ? opts.seed : cfg.value("seed", 12345);
        auto res = reparametrize(*base, f, c0, grid, random_count,
                                 static_cast<unsigned>(seed));
        if (!res.ledger.hypothesis_ok)
            std::cerr << "[qcurrents] hypothesis violated: |phi|_C2 + Lip(f) exceeds c0="
                      << c0 << "; estimates reported anyway\n";
        out["seed"] = seed;
        out["samples"] = res.samples.size();
        out["ledger"] = ledger_to_json(res.ledger);
        bool pass = res.ledger.cambio1_ok && res.ledger.cambio10_ok &&
                    res.ledger.multiplicity_ok && res.ledger.media_fitted_c <= 100.0 &&
                    res.ledger.lip_fitted_c <= 100.0;
        out["pass"] = pass;
        std::ostringstream csv;
        csv << "x1,norm_N\n";
        char buf[64];
        for (const auto& s : res.samples) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s.chart_point[0],
                          qpoint_norm(s.n_value));
            csv << buf;
        }
        out["csv"] = csv.str();
        return out;
    }
    if (mode == "pa") {
        PAQMap f = cfg["map"].is_string() ? paqmap_from_json(load_json_file(cfg["map"]))
                                          : paqmap_from_json(cfg.at("map"));
        config_require(cfg.contains("tilt"), "reparam: pa mode needs 'tilt'");
        auto tilt_rows = cfg["tilt"].get<std::vector<std::vector<std::string>>>();
        MatR b(tilt_rows.size(), tilt_rows[0].size());
        for (std::size_t r = 0; r < tilt_rows.size(); ++r)
            for (std::size_t c = 0; c < tilt_rows[r].size(); ++c)
                b(r, c) = rat_parse(tilt_rows[r][c]);
        Rat s = rat_from_json(cfg.value("s", json("1/2")));
        auto res = tilted_reparam(f, b, s);
        out["plane_distance"] = res.plane_distance;
        out["sup_g"] = res.sup_g;
        out["lip_g"] = res.lip_g;
        out["chain_equal"] = res.chain_equal;
        out["multiplicity_ok"] = res.multiplicity_ok;
        out["g"] = paqmap_to_json(res.g);
        out["pass"] = res.chain_equal && res.multiplicity_ok;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "plane_distance,sup_g,lip_g,chain_equal\n%.17g,%.17g,%.17g,%d\n",
                      res.plane_distance, res.sup_g, res.lip_g, res.chain_equal ? 1 : 0);
        out["csv"] = std::string(buf);
        return out;
    }
    throw ConfigError("reparam: unknown mode '" + mode + "'");
}

int emit_report(json report, const GlobalOpts& opts) {
    std::string csv;
    if (report.contains("csv")) {
        csv = report["csv"].get<std::string>();
        report.erase("csv");
    }
    bool pass = report.value("pass", true);
    if (!opts.out.empty()) {
        write_text_file(opts.out, report.dump(2) + "\n");
        if (!csv.empty()) write_text_file(replace_extension(opts.out, ".csv"), csv);
    } else {
        std::cout << report.dump(2) << "\n";
    }
    std::cout << (pass ? "PASS" : "FAIL") << " " << report.value("kind", std::string("report"))
              << "\n";
    return pass ? 0 : 1;
}

json dispatch_config(const std::string& expected_kind, const json& cfg, GlobalOpts& opts) {
    config_require(cfg.contains("kind"), "config: missing 'kind'");
    std::string kind = cfg["kind"].get<std::string>();
    config_require(expected_kind.empty() || kind == expected_kind,
                   "config kind '" + kind + "' does not match the subcommand");
    json report;
    if (kind == "expansion") report = run_expansion(cfg, opts);
    else if (kind == "excess") report = run_excess(cfg, opts);
    else if (kind == "variation") report = run_variation(cfg, opts);
    else if (kind == "commutation") report = run_commutation(cfg, opts);
    else if (kind == "reparam") report = run_reparam_config(cfg, opts);
    else throw ConfigError("config: unknown kind '" + kind + "'");
    report["config"] = cfg;
    return report;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Q-valued maps, their integer rectifiable currents, and the expansion/variation test bench"};
    app.require_subcommand(1);

    GlobalOpts opts;
    app.add_option("--out", opts.out, "output path for the JSON report (CSV lands beside it)");
    app.add_option("--seed", opts.seed, "seed override for randomized experiments");
    app.add_option("--quad-order", opts.quad_order, "quadrature order override");
    app.add_option("--threads", opts.threads, "worker cap (or QCURRENTS_THREADS)");

    std::string map_path, current_path, config_path, baseline_report, baseline_ref;
    std::string phi_expr, s_value = "1/2";
    double baseline_tol = 1e-9;

    auto* push = app.add_subcommand("push-forward", "push a PA Q-map forward to a current");
    push->add_option("map", map_path, "map JSON file")->required();

    auto* bnd = app.add_subcommand("boundary", "boundary of a simplicial current");
    bnd->add_option("current", current_path, "current JSON file")->required();

    auto* verify = app.add_subcommand("verify-commutation",
                                      "check boundary/push-forward commutation for a map");
    verify->add_option("map", map_path, "map JSON file")->required();

    auto* expand = app.add_subcommand("expand", "mass-expansion experiment");
    expand->add_option("--config,--experiment", config_path, "experiment config")->required();

    auto* excess = app.add_subcommand("excess", "curvilinear/cylindrical excess experiment");
    excess->add_option("--config,--experiment", config_path, "experiment config")->required();

    auto* vary = app.add_subcommand("vary", "first-variation experiment");
    vary->add_option("--config,--experiment", config_path, "experiment config")->required();

    auto* reparam = app.add_subcommand("reparam", "reparametrize a Q-graph");
    reparam->add_option("--config,--experiment", config_path, "experiment config");
    reparam->add_option("--map", map_path, "PA map JSON file (tilted-plane mode)");
    reparam->add_option("--phi", phi_expr, "linear base expressions, comma separated");
    reparam->add_option("--s", s_value, "half-width of the target box (rational)");

    auto* commut = app.add_subcommand("commutation", "randomized commutation batch");
    commut->add_option("--config,--experiment", config_path, "experiment config")->required();

    auto* baseline = app.add_subcommand("baseline", "field-wise report comparison");
    baseline->add_option("report", baseline_report, "report JSON")->required();
    baseline->add_option("ref", baseline_ref, "baseline JSON")->required();
    baseline->add_option("--tol", baseline_tol, "numeric tolerance");

    for (auto* sub : {push, bnd, verify, expand, excess, vary, reparam, commut, baseline})
        sub->fallthrough();

    try {
        app.parse(argc, argv);

        if (*push) {
            auto f = paqmap_from_json(load_json_file(map_path));
            auto t = push_forward(f);
            json out = current_to_json(t);
            out["mass"] = t.mass();
            out["degenerate_dropped"] = t.degenerate_dropped;
            if (!opts.out.empty()) write_text_file(opts.out, out.dump(2) + "\n");
            else std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*bnd) {
            auto t = current_from_json(load_json_file(current_path));
            auto b = boundary(t);
            json out = current_to_json(b);
            out["mass"] = b.mass();
            if (!opts.out.empty()) write_text_file(opts.out, out.dump(2) + "\n");
            else std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*verify) {
            auto f = paqmap_from_json(load_json_file(map_path));
            auto rep = verify_boundary_commutation(f);
            auto grep = verify_graph_boundary_commutation(f);
            json out;
            out["kind"] = "commutation";
            out["exact"] = rep.exact;
            out["graph_exact"] = grep.exact;
            out["used_overlay"] = rep.used_overlay;
            out["mismatched_cells"] = rep.mismatches.size();
            out["pass"] = rep.exact && grep.exact;
            std::cout << rep.describe() << "\n";
            return emit_report(out, opts);
        }
        if (*expand) return emit_report(dispatch_config("expansion", load_json_file(config_path), opts), opts);
        if (*excess) return emit_report(dispatch_config("excess", load_json_file(config_path), opts), opts);
        if (*vary) return emit_report(dispatch_config("variation", load_json_file(config_path), opts), opts);
        if (*commut) return emit_report(dispatch_config("commutation", load_json_file(config_path), opts), opts);
        if (*reparam) {
            if (!config_path.empty())
                return emit_report(dispatch_config("reparam", load_json_file(config_path), opts), opts);
            config_require(!map_path.empty() && !phi_expr.empty(),
                           "reparam: need --config, or --map with --phi");
            auto f = paqmap_from_json(load_json_file(map_path));
            // parse the linear base "a11*x1 + a12*x2, ..." into a tilt matrix
            std::vector<std::string> rows;
            std::string acc;
            for (char c : phi_expr) {
                if (c == ',') {
                    rows.push_back(acc);
                    acc.clear();
                } else acc.push_back(c);
            }
            rows.push_back(acc);
            config_require(static_cast<int>(rows.size()) == f.n,
                           "reparam: --phi needs n comma-separated components");
            MatR b(f.n, f.mesh.dim);
            auto vars = chart_vars(f.mesh.dim);
            for (int r = 0; r < f.n; ++r) {
                auto e = parse_expr(rows[r], vars);
                auto deg = e->poly_degree();
                config_require(deg && *deg <= 1, "reparam: --phi must be linear");
                VecR zero(f.mesh.dim, Rat(0));
                auto v0 = e->eval_exact(zero);
                config_require(v0 && *v0 == 0, "reparam: --phi must vanish at the origin");
                for (int c = 0; c < f.mesh.dim; ++c) {
                    VecR probe(f.mesh.dim, Rat(0));
                    probe[c] = 1;
                    b(r, c) = *e->eval_exact(probe);
                }
            }
            json cfg;
            cfg["kind"] = "reparam";
            cfg["mode"] = "pa";
            cfg["map"] = paqmap_to_json(f);
            json tilt = json::array();
            for (int r = 0; r < f.n; ++r) {
                json row = json::array();
                for (int c = 0; c < f.mesh.dim; ++c) row.push_back(rat_str(b(r, c)));
                tilt.push_back(row);
            }
            cfg["tilt"] = tilt;
            cfg["s"] = s_value;
            return emit_report(dispatch_config("reparam", cfg, opts), opts);
        }
        if (*baseline) {
            auto rep = load_json_file(baseline_report);
            auto ref = load_json_file(baseline_ref);
            auto diff = baseline_check(rep, ref, baseline_tol);
            if (diff.clean()) {
                std::cout << "baseline: no drift\n";
                return 0;
            }
            for (const auto& line : diff.lines) std::cout << "drift " << line << "\n";
            return 1;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
