#include <catch2/catch_amalgamated.hpp>

#include "warpkit/tps.hpp"

using namespace warpkit;

namespace {

std::vector<Point> random_points(size_t n, std::mt19937& rng, double lo = -0.9, double hi = 0.9) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = Point{d(rng), d(rng)};
    return pts;
}

}  // namespace

TEST_CASE("radial kernel values") {
    REQUIRE(kernel_u(0.0) == 0.0);
    REQUIRE(kernel_u(1.0) == 0.0);
    REQUIRE(kernel_u(std::sqrt(std::exp(1.0))) == Catch::Approx(std::exp(1.0)).epsilon(1e-12));
    REQUIRE_THROWS_AS(kernel_u(-0.1), Error);
}

TEST_CASE("identity correspondence set yields identity coefficients") {
    std::mt19937 rng(23);
    auto pts = random_points(12, rng);
    TpsCoefficients c = solve_tps(pts, pts, 0.0);
    REQUIRE(c.affine[0][0] == Catch::Approx(0.0).margin(1e-8));  // x offset
    REQUIRE(c.affine[0][1] == Catch::Approx(1.0).margin(1e-8));
    REQUIRE(c.affine[0][2] == Catch::Approx(0.0).margin(1e-8));
    REQUIRE(c.affine[1][0] == Catch::Approx(0.0).margin(1e-8));
    REQUIRE(c.affine[1][1] == Catch::Approx(0.0).margin(1e-8));
    REQUIRE(c.affine[1][2] == Catch::Approx(1.0).margin(1e-8));
    for (const Point& w : c.weights) {
        REQUIRE(std::abs(w[0]) < 1e-8);
        REQUIRE(std::abs(w[1]) < 1e-8);
    }
    Point q = eval_tps(c, Point{0.3, -0.7});
    REQUIRE(q[0] == Catch::Approx(0.3).margin(1e-9));
    REQUIRE(q[1] == Catch::Approx(-0.7).margin(1e-9));
}

TEST_CASE("affine targets are reproduced with zero bending") {
    std::mt19937 rng(29);
    auto src = random_points(10, rng);
    // x' = 1.2x - 0.3y + 0.05, y' = 0.4x + 0.9y - 0.1
    std::vector<Point> dst(src.size());
    for (size_t i = 0; i < src.size(); ++i)
        dst[i] = Point{1.2 * src[i][0] - 0.3 * src[i][1] + 0.05,
                       0.4 * src[i][0] + 0.9 * src[i][1] - 0.1};
    TpsCoefficients c = solve_tps(src, dst, 0.0);
    REQUIRE(c.affine[0][1] == Catch::Approx(1.2).margin(1e-8));
    REQUIRE(c.affine[0][2] == Catch::Approx(-0.3).margin(1e-8));
    REQUIRE(c.affine[0][0] == Catch::Approx(0.05).margin(1e-8));
    REQUIRE(c.affine[1][1] == Catch::Approx(0.4).margin(1e-8));
    REQUIRE(c.affine[1][2] == Catch::Approx(0.9).margin(1e-8));
    REQUIRE(c.affine[1][0] == Catch::Approx(-0.1).margin(1e-8));
    double wnorm = 0.0;
    for (const Point& w : c.weights) wnorm += w[0] * w[0] + w[1] * w[1];
    REQUIRE(std::sqrt(wnorm) < 1e-8);
    // pure-affine evaluation matches matrix arithmetic off the sources
    Point q = eval_tps(c, Point{0.11, 0.22});
    REQUIRE(q[0] == Catch::Approx(1.2 * 0.11 - 0.3 * 0.22 + 0.05).margin(1e-8));
}

TEST_CASE("lambda = 0 interpolates 25 random correspondences") {
    std::mt19937 rng(31);
    auto src = random_points(25, rng);
    auto dst = random_points(25, rng);
    TpsCoefficients c = solve_tps(src, dst, 0.0);
    for (size_t i = 0; i < src.size(); ++i) {
        Point q = eval_tps(c, src[i]);
        REQUIRE(std::abs(q[0] - dst[i][0]) < 1e-6);
        REQUIRE(std::abs(q[1] - dst[i][1]) < 1e-6);
    }
}

TEST_CASE("side conditions hold") {
    std::mt19937 rng(37);
    auto src = random_points(15, rng);
    auto dst = random_points(15, rng);
    TpsCoefficients c = solve_tps(src, dst, 0.0);
    double sw0 = 0, sw1 = 0, sx = 0, sy = 0;
    for (size_t i = 0; i < src.size(); ++i) {
        sw0 += c.weights[i][0];
        sw1 += c.weights[i][1];
        sx += c.weights[i][0] * src[i][0] + c.weights[i][1] * src[i][0];
        sy += c.weights[i][0] * src[i][1] + c.weights[i][1] * src[i][1];
    }
    REQUIRE(std::abs(sw0) < 1e-8);
    REQUIRE(std::abs(sw1) < 1e-8);
    REQUIRE(std::abs(sx) < 1e-7);
    REQUIRE(std::abs(sy) < 1e-7);
}

TEST_CASE("duplicated sources are rejected as singular") {
    std::vector<Point> src = {{0, 0}, {0, 0}, {0.5, 0.5}, {-0.5, 0.5}};
    std::vector<Point> dst = {{0, 0}, {0.1, 0}, {0.5, 0.5}, {-0.5, 0.5}};
    REQUIRE_THROWS_AS(solve_tps(src, dst, 0.0), Error);
}

TEST_CASE("offsets are bounded at construction") {
    Tensor<float> bad({2, kAnchorsPerSide, kAnchorsPerSide});
    bad[0] = 2.5f;
    REQUIRE_THROWS_AS(TpsParams<float>(bad), Error);
    bad[0] = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_THROWS_AS(TpsParams<float>(bad), Error);
}

TEST_CASE("zero offsets give the identity meshgrid") {
    Index h = 7, w = 5;
    Tensor<float> grid = grid_from_params(TpsParams<float>::zero(), h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            REQUIRE(grid.at3(0, y, x) ==
                    Catch::Approx(-1.0 + 2.0 * x / (w - 1)).margin(1e-6));
            REQUIRE(grid.at3(1, y, x) ==
                    Catch::Approx(-1.0 + 2.0 * y / (h - 1)).margin(1e-6));
        }
}

TEST_CASE("uniform anchor offset is an inverse translation") {
    Index h = 6, w = 6;
    double dx = 0.08;
    Tensor<float> offsets({2, kAnchorsPerSide, kAnchorsPerSide});
    for (Index j = 0; j < kAnchorCount; ++j) offsets[j] = static_cast<float>(dx);
    Tensor<float> grid = grid_from_params(offsets, h, w);
    Tensor<float> id = grid_from_params(TpsParams<float>::zero(), h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            REQUIRE(grid.at3(0, y, x) == Catch::Approx(id.at3(0, y, x) - dx).margin(1e-6));
            REQUIRE(grid.at3(1, y, x) == Catch::Approx(id.at3(1, y, x)).margin(1e-6));
        }
}

TEST_CASE("small random offsets keep the grid smooth") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    Tensor<float> offsets({2, kAnchorsPerSide, kAnchorsPerSide});
    double max_off = 0;
    for (auto& v : offsets.data) {
        v = static_cast<float>(d(rng));
        max_off = std::max(max_off, std::abs(static_cast<double>(v)));
    }
    Index h = 16, w = 12;
    Tensor<float> grid = grid_from_params(offsets, h, w);
    double bound = 4.0 / std::min(h, w) + 2.0 * max_off;
    for (Index c = 0; c < 2; ++c)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x + 1 < w; ++x) {
                REQUIRE(std::isfinite(grid.at3(c, y, x)));
                REQUIRE(std::abs(grid.at3(c, y, x + 1) - grid.at3(c, y, x)) < bound);
            }
}

TEST_CASE("tape tps_grid matches the plain grid") {
    std::mt19937 rng(43);
    std::uniform_real_distribution<float> d(-0.08f, 0.08f);
    Tensor<float> offsets({2, kAnchorsPerSide, kAnchorsPerSide});
    for (auto& v : offsets.data) v = d(rng);
    Tensor<float> plain = grid_from_params(offsets, 9, 7);
    Tape<float> t;
    Var<float> g = tps_grid(t, t.leaf(offsets), 9, 7);
    for (Index i = 0; i < plain.size(); ++i)
        REQUIRE(t.val(g)[i] == Catch::Approx(plain[i]).margin(1e-6));
}
