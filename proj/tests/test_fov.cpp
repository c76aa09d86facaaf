#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csc/fov.hpp"
#include "csc/rng.hpp"

using namespace csc;

namespace {

std::vector<Point2> ellipse_points(double cx, double cy, double a, double b, double theta, int n) {
    std::vector<Point2> pts;
    double ct = std::cos(theta), st = std::sin(theta);
    for (int k = 0; k < n; ++k) {
        double t = 2.0 * std::numbers::pi * k / n;
        double u = a * std::cos(t), v = b * std::sin(t);
        pts.push_back({cx + ct * u - st * v, cy + st * u + ct * v});
    }
    return pts;
}

Ellipse fit_geometric(const std::vector<Point2>& pts) {
    return conic_to_geometric(fit_ellipse_direct(pts));
}

}  // namespace

TEST_CASE("segment_foreground thresholds") {
    GrayChannel zero(4, 4, 0);
    BinaryMask m = segment_foreground(zero, ThresholdPolicy::fixed(10));
    for (char b : m.bits) CHECK(b == 0);

    GrayChannel two(2, 1);
    two.values = {5, 200};
    BinaryMask m2 = segment_foreground(two, ThresholdPolicy::fixed(10));
    CHECK(!m2.get(0, 0));
    CHECK(m2.get(1, 0));
}

TEST_CASE("otsu threshold splits a bimodal channel") {
    GrayChannel ch(10, 10);
    for (std::size_t i = 0; i < ch.values.size(); ++i) ch.values[i] = i < 50 ? 20 : 220;
    int t = otsu_threshold(ch);

    // brute-force scan of all 256 thresholds for max between-class variance
    double best_var = -1;
    int best_t = 0;
    for (int cand = 0; cand < 256; ++cand) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (auto v : ch.values)
            (v <= cand ? (n0 += 1, s0 += v) : (n1 += 1, s1 += v));
        if (n0 == 0 || n1 == 0) continue;
        double mu0 = s0 / n0, mu1 = s1 / n1;
        double var = n0 * n1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = cand;
        }
    }
    CHECK(t == best_t);
    CHECK(t >= 20);
    CHECK(t < 220);
    BinaryMask m = segment_foreground(ch, ThresholdPolicy::otsu());
    for (std::size_t i = 0; i < ch.values.size(); ++i) CHECK(m.bits[i] == (i < 50 ? 0 : 1));
}

TEST_CASE("boundary_points") {
    BinaryMask all3(3, 3, true);
    CHECK(boundary_points(all3).size() == 8);

    BinaryMask one(5, 5);
    one.set(2, 3, true);
    auto pts = boundary_points(one);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].x == 2);
    CHECK(pts[0].y == 3);

    BinaryMask none(3, 3);
    CHECK(boundary_points(none).empty());
}

TEST_CASE("direct fit recovers exact conics") {
    SUBCASE("circle radius 2") {
        auto pts = ellipse_points(0, 0, 2, 2, 0, 8);
        ConicCoefficients c = fit_ellipse_direct(pts);
        for (const auto& p : pts) CHECK(std::abs(c.residual(p.x, p.y)) < 1e-9);
        Ellipse e = conic_to_geometric(c);
        CHECK(e.cx == doctest::Approx(0).epsilon(1e-9));
        CHECK(e.cy == doctest::Approx(0).epsilon(1e-9));
        CHECK(e.a == doctest::Approx(2).epsilon(1e-9));
        CHECK(e.b == doctest::Approx(2).epsilon(1e-9));
    }
    SUBCASE("axis-aligned ellipse a=4 b=2 center (10,-3)") {
        auto pts = ellipse_points(10, -3, 4, 2, 0, 12);
        Ellipse e = fit_geometric(pts);
        CHECK(std::abs(e.cx - 10) < 1e-6);
        CHECK(std::abs(e.cy + 3) < 1e-6);
        CHECK(std::abs(e.a - 4) < 1e-6);
        CHECK(std::abs(e.b - 2) < 1e-6);
        CHECK(std::abs(e.theta) < 1e-6);
    }
    SUBCASE("too few points") {
        std::vector<Point2> five = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 2}};
        CHECK_THROWS_WITH_AS(fit_ellipse_direct(five), "insufficient points", FitError);
    }
    SUBCASE("collinear points") {
        std::vector<Point2> line;
        for (int i = 0; i < 6; ++i) line.push_back({static_cast<double>(i), 2.0 * i});
        CHECK_THROWS_AS(fit_ellipse_direct(line), FitError);
    }
}

TEST_CASE("conic_to_geometric closed forms") {
    // x^2 + y^2 - 4 = 0
    Ellipse circ = conic_to_geometric({1, 0, 1, 0, 0, -4});
    CHECK(circ.cx == doctest::Approx(0));
    CHECK(circ.a == doctest::Approx(2));
    CHECK(circ.b == doctest::Approx(2));
    CHECK(circ.theta == doctest::Approx(0));

    // x^2/16 + y^2/4 = 1
    Ellipse e = conic_to_geometric({1.0 / 16, 0, 1.0 / 4, 0, 0, -1});
    CHECK(e.a == doctest::Approx(4));
    CHECK(e.b == doctest::Approx(2));
    CHECK(e.theta == doctest::Approx(0));

    // hyperbola
    CHECK_THROWS_AS(conic_to_geometric({1, 0, -1, 0, 0, -1}), FitError);
}

TEST_CASE("fit equivariance properties") {
    auto base = ellipse_points(3, -2, 5, 3, 0.7, 40);
    Ellipse e0 = fit_geometric(base);

    SUBCASE("translation") {
        auto pts = base;
        for (auto& p : pts) {
            p.x += 17.5;
            p.y -= 4.25;
        }
        Ellipse e1 = fit_geometric(pts);
        CHECK(std::abs(e1.cx - (e0.cx + 17.5)) < 1e-6);
        CHECK(std::abs(e1.cy - (e0.cy - 4.25)) < 1e-6);
        CHECK(std::abs(e1.a - e0.a) < 1e-6);
        CHECK(std::abs(e1.b - e0.b) < 1e-6);
        CHECK(std::abs(e1.theta - e0.theta) < 1e-6);
    }
    SUBCASE("rotation") {
        double phi = 0.4;
        auto pts = base;
        for (auto& p : pts) {
            double x = std::cos(phi) * p.x - std::sin(phi) * p.y;
            double y = std::sin(phi) * p.x + std::cos(phi) * p.y;
            p = {x, y};
        }
        Ellipse e1 = fit_geometric(pts);
        CHECK(std::abs(e1.cx - (std::cos(phi) * e0.cx - std::sin(phi) * e0.cy)) < 1e-6);
        CHECK(std::abs(e1.cy - (std::sin(phi) * e0.cx + std::cos(phi) * e0.cy)) < 1e-6);
        CHECK(std::abs(e1.a - e0.a) < 1e-6);
        CHECK(std::abs(e1.b - e0.b) < 1e-6);
        double dt = std::fmod(e1.theta - e0.theta - phi, std::numbers::pi);
        if (dt < -std::numbers::pi / 2) dt += std::numbers::pi;
        if (dt > std::numbers::pi / 2) dt -= std::numbers::pi;
        CHECK(std::abs(dt) < 1e-6);
    }
    SUBCASE("scale") {
        double s = 2.75;
        auto pts = base;
        for (auto& p : pts) {
            p.x *= s;
            p.y *= s;
        }
        Ellipse e1 = fit_geometric(pts);
        CHECK(std::abs(e1.cx - s * e0.cx) < 1e-6);
        CHECK(std::abs(e1.cy - s * e0.cy) < 1e-6);
        CHECK(std::abs(e1.a - s * e0.a) < 1e-6);
        CHECK(std::abs(e1.b - s * e0.b) < 1e-6);
        CHECK(std::abs(e1.theta - e0.theta) < 1e-6);
    }
    SUBCASE("permutation invariance") {
        auto pts = base;
        CounterRng rng(5);
        seeded_shuffle(pts, rng);
        Ellipse e1 = fit_geometric(pts);
        CHECK(e1.cx == doctest::Approx(e0.cx).epsilon(1e-12));
        CHECK(e1.a == doctest::Approx(e0.a).epsilon(1e-12));
    }
}

TEST_CASE("robust fit rejects a radial protrusion") {
    // 100 points on a circle plus 8 outliers pushed out by +30
    std::vector<Point2> clean = ellipse_points(150, 150, 100, 100, 0, 100);
    std::vector<Point2> pts = clean;
    for (int k = 0; k < 8; ++k) {
        double t = 0.3 + 0.02 * k;
        pts.push_back({150 + 130 * std::cos(t), 150 + 130 * std::sin(t)});
    }
    Ellipse oracle = fit_geometric(clean);
    Ellipse robust = fit_ellipse_robust(pts, 0.1, 3);
    CHECK(std::abs(robust.cx - oracle.cx) < 1.0);
    CHECK(std::abs(robust.cy - oracle.cy) < 1.0);
    CHECK(std::abs(robust.a - oracle.a) < 1.0);
    CHECK(std::abs(robust.b - oracle.b) < 1.0);

    // clean input: any trim gives the direct fit
    Ellipse same = fit_ellipse_robust(clean, 0.1, 3);
    CHECK(std::abs(same.cx - oracle.cx) < 1e-6);
    CHECK(std::abs(same.a - oracle.a) < 1e-6);

    // degenerate: all points on a line
    std::vector<Point2> line;
    for (int i = 0; i < 20; ++i) line.push_back({static_cast<double>(i), 3.0 * i + 1});
    CHECK_THROWS_AS(fit_ellipse_robust(line, 0.1, 3), FitError);
}

TEST_CASE("detect_fov on a synthetic disc") {
    auto make_disc = [](int size, double cx, double cy, double r, bool tab) {
        FundusImage img(size, size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                bool in = d2 <= r * r;
                if (tab && std::abs(y - cy) < 10 && x > cx && x - cx < r + 20) in = true;
                if (in) img.at(x, y) = {200, 200, 200};
            }
        return img;
    };

    SUBCASE("plain disc") {
        FundusImage img = make_disc(400, 200, 200, 150, false);
        Ellipse e = detect_fov(img);
        CHECK(std::abs(e.cx - 200) < 1.0);
        CHECK(std::abs(e.cy - 200) < 1.0);
        CHECK(std::abs(e.a - 150) < 2.0);
        CHECK(std::abs(e.b - 150) < 2.0);
    }
    SUBCASE("disc with a protruding tab") {
        FundusImage img = make_disc(400, 200, 200, 150, true);
        Ellipse e = detect_fov(img);
        CHECK(std::abs(e.cx - 200) < 1.0);
        CHECK(std::abs(e.cy - 200) < 1.0);
        CHECK(std::abs(e.a - 150) < 2.0);
        CHECK(std::abs(e.b - 150) < 2.0);
    }
    SUBCASE("all-black image") {
        FundusImage img(50, 50);
        CHECK_THROWS_WITH_AS(detect_fov(img), "insufficient points", FitError);
    }
}
