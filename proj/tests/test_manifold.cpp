#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qcurrents/manifold.hpp"

using namespace qcurrents;

namespace {

BaseManifold flat2d() {
    return BaseManifold::parse(2, 1, Domain::make_box(Box{{-1, -1}, {1, 1}}), {"0"});
}

void check_frame_orthonormal(const TangentNormalFrame& fr, double tol = 1e-12) {
    auto all = fr.tangent;
    all.insert(all.end(), fr.normal.begin(), fr.normal.end());
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = 0; j < all.size(); ++j) {
            double expect = i == j ? 1.0 : 0.0;
            CHECK(std::abs(dot(all[i], all[j]) - expect) <= tol);
        }
}

}  // namespace

TEST_CASE("frames: flat case gives the standard basis") {
    auto m = flat2d();
    auto fr = m.frames({0.3, -0.4});
    CHECK(fr.tangent[0] == VecD{1, 0, 0});
    CHECK(fr.tangent[1] == VecD{0, 1, 0});
    CHECK(fr.normal[0] == VecD{0, 0, 1});
}

TEST_CASE("frames: tilted line") {
    double a = 0.75;
    auto m = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"3/4*x1"}, 1.0);
    auto fr = m.frames({0.0});
    double s = std::sqrt(1 + a * a);
    CHECK(fr.tangent[0][0] == Catch::Approx(1 / s));
    CHECK(fr.tangent[0][1] == Catch::Approx(a / s));
    CHECK(fr.normal[0][0] == Catch::Approx(-a / s));
    CHECK(fr.normal[0][1] == Catch::Approx(1 / s));
}

TEST_CASE("frames: saddle graph is orthonormal everywhere sampled") {
    auto m = BaseManifold::parse(2, 1, Domain::make_box(Box{{-1, -1}, {1, 1}}), {"x1*x2"}, 2.0);
    auto fr0 = m.frames({0.0, 0.0});
    CHECK(fr0.normal[0][2] == Catch::Approx(1.0));
    for (double x : {-0.9, 0.0, 0.7, 1.0})
        for (double y : {-1.0, -0.2, 0.5, 1.0}) check_frame_orthonormal(m.frames({x, y}));
}

TEST_CASE("curvature: flat and parabola") {
    auto flat = flat2d();
    auto cd = flat.curvature({0.1, 0.9});
    CHECK(cd.norm_A == 0.0);
    CHECK(cd.norm_H == 0.0);

    auto par = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1^2/2"}, 2.0);
    auto cp = par.curvature({0.0});
    CHECK(cp.norm_A == Catch::Approx(1.0));
    CHECK(cp.norm_H == Catch::Approx(1.0));

    auto bowl =
        BaseManifold::parse(2, 1, Domain::make_box(Box{{-1, -1}, {1, 1}}), {"(x1^2+x2^2)/2"}, 3.0);
    auto cb = bowl.curvature({0.0, 0.0});
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double expect = a == b ? 1.0 : 0.0;
            CHECK(std::abs(cb.second_fundamental[a][b][2] - expect) < 1e-12);
        }
    CHECK(cb.mean_curvature[2] == Catch::Approx(2.0));
}

TEST_CASE("curvature is symmetric on random graphs") {
    auto m = BaseManifold::parse(2, 2, Domain::make_box(Box{{-1, -1}, {1, 1}}),
                                 {"x1^2*x2/4 + x1/10", "sin(x1)*x2/8"}, 3.0);
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    for (int t = 0; t < 25; ++t) {
        VecD x = {u(rng), u(rng)};
        auto cd = m.curvature(x);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                CHECK(dist(cd.second_fundamental[a][b], cd.second_fundamental[b][a]) < 1e-9);
        // H equals the trace
        VecD tr(m.ambient(), 0.0);
        for (int a = 0; a < 2; ++a) tr = vec_add(tr, cd.second_fundamental[a][a]);
        CHECK(dist(tr, cd.mean_curvature) < 1e-12);
    }
}

TEST_CASE("projection: flat and linear geometry") {
    auto flat = flat2d();
    auto res = flat.nearest_point_projection({0.3, -0.2, 0.4});
    CHECK(dist(res.foot, {0.3, -0.2, 0.0}) < 1e-12);
    CHECK(dist(res.offset, {0.0, 0.0, 0.4}) < 1e-12);

    // tilted line: a point on the normal line through the origin projects to 0
    auto line = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1/2"}, 1.0);
    auto fr = line.frames({0.0});
    VecD z = vec_scale(0.2, fr.normal[0]);
    auto pr = line.nearest_point_projection(z);
    CHECK(norm(pr.chart_point) < 1e-10);
    CHECK(dist(pr.foot, {0.0, 0.0}) < 1e-10);
}

TEST_CASE("projection: parabola with a brute-force oracle") {
    auto par = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1^2/2"}, 2.0);
    auto r0 = par.nearest_point_projection({0.0, 0.1});
    CHECK(dist(r0.foot, {0.0, 0.0}) < 1e-10);
    CHECK(dist(r0.offset, {0.0, 0.1}) < 1e-10);

    VecD z = {0.05, 0.1};
    auto r1 = par.nearest_point_projection(z);
    // dense 1-d line search oracle
    double best_t = 0, best_d = 1e300;
    for (int i = -200000; i <= 200000; ++i) {
        double t = i * 1e-5 * 0.5;
        double d = std::hypot(z[0] - t, z[1] - t * t / 2);
        if (d < best_d) {
            best_d = d;
            best_t = t;
        }
    }
    CHECK(std::abs(r1.chart_point[0] - best_t) < 1e-5);
    CHECK(std::abs(dist(z, r1.foot) - best_d) < 1e-9);
}

TEST_CASE("projection is idempotent and round-trips the tube") {
    auto m = BaseManifold::parse(2, 1, Domain::make_box(Box{{-1, -1}, {1, 1}}),
                                 {"(x1^2 - x2^2)/10"}, 1.0);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    double c0 = m.tubular_thickness();
    REQUIRE(c0 > 0.1);
    for (int t = 0; t < 20; ++t) {
        VecD x = {u(rng), u(rng)};
        auto p = m.chart(x);
        auto res = m.nearest_point_projection(p);
        CHECK(dist(res.foot, p) < 1e-9);

        auto fr = m.frames(x);
        double off = 0.8 * c0 * u(rng);
        VecD z = vec_add(p, vec_scale(off, fr.normal[0]));
        auto rt = m.nearest_point_projection(z);
        CHECK(dist(rt.foot, p) < 1e-9);
        CHECK(std::abs(norm(rt.offset) - std::abs(off)) < 1e-9);
    }
}

TEST_CASE("frame derivative bound") {
    CHECK(flat2d().frame_derivative_bound() == 0.0);
    auto lin = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1/3"}, 1.0);
    CHECK(lin.frame_derivative_bound() < 1e-9);

    auto par = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1^2/2"}, 2.0);
    double bound = par.frame_derivative_bound(33);
    CHECK(bound > 0.0);
    CHECK(bound <= 10.0 * par.c2_norm());
}

TEST_CASE("norm estimates and smallness") {
    auto m = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1^2/2"}, 0.1);
    CHECK(m.c0_norm() == Catch::Approx(0.5));
    CHECK(m.c1_norm() == Catch::Approx(1.0));
    CHECK(m.c2_norm() == Catch::Approx(1.0));
    CHECK(!m.satisfies_smallness());  // |Dphi| = 1 > 0.1
    auto small = BaseManifold::parse(1, 1, Domain::make_box(Box{{-1}, {1}}), {"x1^2/40"}, 0.1);
    CHECK(small.satisfies_smallness());
}
