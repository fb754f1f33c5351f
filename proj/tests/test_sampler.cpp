#include <catch2/catch_amalgamated.hpp>

#include "warpkit/sampler.hpp"
#include "warpkit/tps.hpp"

using namespace warpkit;

namespace {

Tensor<float> identity_grid(Index h, Index w) {
    Tensor<float> g({2, h, w});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            g.at3(0, y, x) = static_cast<float>(-1.0 + 2.0 * x / (w - 1));
            g.at3(1, y, x) = static_cast<float>(-1.0 + 2.0 * y / (h - 1));
        }
    return g;
}

Tensor<float> rand_image(std::vector<Index> dims, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    Tensor<float> t(std::move(dims));
    for (auto& v : t.data) v = d(rng);
    return t;
}

}  // namespace

TEST_CASE("identity grid reproduces the image exactly") {
    Tensor<float> img = rand_image({3, 6, 5}, 51);
    Tensor<float> out = grid_sample_plain(img, identity_grid(6, 5), PaddingMode::Border);
    for (Index i = 0; i < img.size(); ++i) REQUIRE(out[i] == Catch::Approx(img[i]).margin(1e-6));
}

TEST_CASE("one-pixel-pitch shift translates the image") {
    Tensor<float> img = rand_image({1, 4, 5}, 53);
    Tensor<float> g = identity_grid(4, 5);
    float pitch = 2.0f / (5 - 1);
    for (Index p = 0; p < 4 * 5; ++p) g.data[p] += pitch;  // x coords look one pixel right
    SECTION("border mode replicates the edge column") {
        Tensor<float> out = grid_sample_plain(img, g, PaddingMode::Border);
        for (Index y = 0; y < 4; ++y) {
            for (Index x = 0; x + 1 < 5; ++x)
                REQUIRE(out.at3(0, y, x) == Catch::Approx(img.at3(0, y, x + 1)).margin(1e-5));
            REQUIRE(out.at3(0, y, 4) == Catch::Approx(img.at3(0, y, 4)).margin(1e-5));
        }
    }
    SECTION("zeros mode fills the vacated column") {
        Tensor<float> out = grid_sample_plain(img, g, PaddingMode::Zeros);
        for (Index y = 0; y < 4; ++y) REQUIRE(out.at3(0, y, 4) == Catch::Approx(0.0f).margin(1e-5));
    }
}

TEST_CASE("midpoint between four pixels averages bilinearly") {
    Tensor<float> img = Tensor<float>::from({1, 2, 2}, {0, 0, 1, 1});
    Tensor<float> g({2, 1, 1});
    g.data = {0.0f, 0.0f};  // center of the 2x2 image
    Tensor<float> out = grid_sample_plain(img, g, PaddingMode::Zeros);
    REQUIRE(out[0] == Catch::Approx(0.5f).margin(1e-6));
}

TEST_CASE("constant image samples to the constant everywhere under Border") {
    Tensor<float> img({2, 3, 3}, 0.73f);
    std::mt19937 rng(57);
    std::uniform_real_distribution<float> d(-1.8f, 1.8f);  // includes out-of-range coords
    Tensor<float> g({2, 4, 4});
    for (auto& v : g.data) v = d(rng);
    Tensor<float> out = grid_sample_plain(img, g, PaddingMode::Border);
    for (float v : out.data) REQUIRE(v == Catch::Approx(0.73f).margin(1e-6));
}

TEST_CASE("sampling is linear in the image") {
    Tensor<float> x = rand_image({2, 5, 4}, 59);
    Tensor<float> y = rand_image({2, 5, 4}, 61);
    std::mt19937 rng(63);
    std::uniform_real_distribution<float> d(-1.2f, 1.2f);
    Tensor<float> g({2, 3, 3});
    for (auto& v : g.data) v = d(rng);
    float a = 0.6f, b = -1.3f;
    Tensor<float> mix({2, 5, 4});
    for (Index i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor<float> sx = grid_sample_plain(x, g, PaddingMode::Zeros);
    Tensor<float> sy = grid_sample_plain(y, g, PaddingMode::Zeros);
    Tensor<float> sm = grid_sample_plain(mix, g, PaddingMode::Zeros);
    for (Index i = 0; i < sm.size(); ++i)
        REQUIRE(sm[i] == Catch::Approx(a * sx[i] + b * sy[i]).margin(1e-6));
}

TEST_CASE("tape grid_sample agrees with the plain version") {
    Tensor<float> img = rand_image({3, 5, 6}, 67);
    std::mt19937 rng(69);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    Tensor<float> g({2, 4, 4});
    for (auto& v : g.data) v = d(rng);
    for (auto mode : {PaddingMode::Zeros, PaddingMode::Border}) {
        Tensor<float> plain = grid_sample_plain(img, g, mode);
        Tape<float> t;
        Var<float> out = grid_sample(t, t.leaf(img), t.leaf(g), mode);
        for (Index i = 0; i < plain.size(); ++i) REQUIRE(t.val(out)[i] == plain[i]);
    }
}

TEST_CASE("zero theta grid plus sampler is the pixel-exact identity") {
    Tensor<float> img = rand_image({3, 8, 6}, 71);
    Tensor<float> grid = grid_from_params(TpsParams<float>::zero(), 8, 6);
    Tensor<float> out = grid_sample_plain(img, grid, PaddingMode::Border);
    for (Index i = 0; i < img.size(); ++i) REQUIRE(std::abs(out[i] - img[i]) < 1e-6);
}

TEST_CASE("non-finite grid coordinates are rejected") {
    Tensor<float> img({1, 3, 3}, 1.0f);
    Tensor<float> g({2, 1, 1});
    g[0] = std::numeric_limits<float>::infinity();
    REQUIRE_THROWS_AS(grid_sample_plain(img, g, PaddingMode::Zeros), Error);
}
