#include <catch2/catch_amalgamated.hpp>

#include "warpkit/shapectx.hpp"

using namespace warpkit;

namespace {

Tensor<float> disk_mask(Index h, Index w, double cy, double cx, double r) {
    Tensor<float> m({h, w});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            if (std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) <= r)
                m.at2(y, x) = 1.0f;
    return m;
}

}  // namespace

TEST_CASE("square mask with n = 4 gives one point per side") {
    Tensor<float> m({8, 8}, 1.0f);
    auto pts = extract_boundary(m, 4);
    REQUIRE(pts.size() == 4);
    // all points on the frame border, mutually distant
    for (const Point& p : pts) {
        bool on_border = p[0] < 0.5 || p[0] > 6.5 || p[1] < 0.5 || p[1] > 6.5;
        REQUIRE(on_border);
    }
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = i + 1; j < 4; ++j) {
            double d = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            REQUIRE(d > 3.0);
        }
}

TEST_CASE("disk boundary points lie near the circle") {
    Tensor<float> m = disk_mask(40, 40, 20, 20, 12);
    auto pts = extract_boundary(m, 48);
    REQUIRE(pts.size() == 48);
    for (const Point& p : pts) {
        double r = std::hypot(p[0] - 20.0, p[1] - 20.0);
        REQUIRE(std::abs(r - 12.0) < 1.5);
    }
}

TEST_CASE("two components: only the larger one is traced") {
    Tensor<float> m({30, 30});
    for (Index y = 2; y < 12; ++y)
        for (Index x = 2; x < 12; ++x) m.at2(y, x) = 1.0f;  // 10x10 blob
    for (Index y = 20; y < 24; ++y)
        for (Index x = 20; x < 24; ++x) m.at2(y, x) = 1.0f;  // 4x4 blob
    auto pts = extract_boundary(m, 16);
    for (const Point& p : pts) {
        REQUIRE(p[0] < 12.5);
        REQUIRE(p[1] < 12.5);
    }
}

TEST_CASE("empty mask is an error") {
    Tensor<float> m({10, 10});
    REQUIRE_THROWS_AS(extract_boundary(m, 8), Error);
}

TEST_CASE("descriptors are normalized histograms") {
    Tensor<float> m = disk_mask(32, 32, 16, 16, 10);
    auto pts = extract_boundary(m, 24);
    ShapeContextDescriptor d = descriptor(pts, 3);
    double sum = 0;
    for (double v : d.histogram) {
        REQUIRE(v >= 0.0);
        sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).epsilon(1e-9));
    REQUIRE(chi2_distance(d, d) == 0.0);
}

TEST_CASE("self-match is cheaper than matching a perturbed copy") {
    Tensor<float> m({24, 24});
    for (Index y = 4; y < 20; ++y)
        for (Index x = 8; x < 16; ++x) m.at2(y, x) = 1.0f;
    auto a = extract_boundary(m, 32);
    auto b = a;
    std::mt19937 rng(73);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (auto& p : b) {
        p[0] += d(rng);
        p[1] += d(rng);
    }
    auto cost = [&](const std::vector<Point>& q) {
        double acc = 0;
        for (Index i = 0; i < a.size(); ++i)
            acc += chi2_distance(descriptor(a, i), descriptor(q, i));
        return acc;
    };
    REQUIRE(cost(a) <= cost(b));
}

TEST_CASE("matching a mask to itself recovers the identity") {
    Tensor<float> m = disk_mask(48, 36, 24, 18, 12);
    // break the symmetry so correspondences are unambiguous
    for (Index y = 10; y < 16; ++y)
        for (Index x = 18; x < 30; ++x) m.at2(y, x) = 1.0f;
    TpsCoefficients c = match_and_fit(m, m, 64);
    auto pts = extract_boundary(m, 64);
    for (const Point& px : pts) {
        Point g{-1.0 + 2.0 * px[0] / 35.0, -1.0 + 2.0 * px[1] / 47.0};
        Point q = eval_tps(c, g);
        REQUIRE(std::abs(q[0] - g[0]) < 0.01);
        REQUIRE(std::abs(q[1] - g[1]) < 0.01);
    }
}

TEST_CASE("pure translation is recovered as a near-affine map") {
    Index h = 48, w = 48;
    Tensor<float> src({h, w}), dst({h, w});
    auto blob = [&](Tensor<float>& m, Index oy, Index ox) {
        for (Index y = 0; y < 14; ++y)
            for (Index x = 0; x < 10; ++x) m.at2(oy + y, ox + x) = 1.0f;
        for (Index y = 0; y < 4; ++y)
            for (Index x = 0; x < 18; ++x) m.at2(oy + 2 + y, ox - 4 + x) = 1.0f;
    };
    blob(src, 10, 14);
    blob(dst, 18, 20);  // shifted by (+6, +8) px
    TpsCoefficients c = match_and_fit(src, dst, 64);
    // normalized-unit shift: dx = 2*6/(w-1), dy = 2*8/(h-1)
    double want_dx = 2.0 * 6.0 / (w - 1), want_dy = 2.0 * 8.0 / (h - 1);
    REQUIRE(c.affine[0][0] == Catch::Approx(want_dx).margin(0.08));
    REQUIRE(c.affine[1][0] == Catch::Approx(want_dy).margin(0.08));
    REQUIRE(c.affine[0][1] == Catch::Approx(1.0).margin(0.15));
    REQUIRE(c.affine[1][2] == Catch::Approx(1.0).margin(0.15));
    double wnorm = 0;
    for (const Point& wi : c.weights) wnorm += wi[0] * wi[0] + wi[1] * wi[1];
    REQUIRE(std::sqrt(wnorm) < 0.5);
}
