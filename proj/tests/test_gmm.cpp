#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "warpkit/gmm.hpp"
#include "warpkit/harness.hpp"
#include "warpkit/personrep.hpp"
#include "warpkit/synth.hpp"
#include "warpkit/tom.hpp"

using namespace warpkit;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

GmmArch tiny_arch(unsigned seed = 5) {
    GmmArch a;
    a.height = 32;
    a.width = 24;
    a.base = 8;
    a.seed = seed;
    return a;
}

std::vector<GmmSample<float>> tiny_samples(Index n, unsigned seed) {
    auto ds = gen_synth_dataset(n, seed, 32, 24);
    std::vector<GmmSample<float>> out;
    for (auto& s : ds) {
        PersonInputs pi{s.person, s.keypoints, s.body_mask, s.reserved_mask};
        out.push_back({bilinear_resize(assemble(pi).map, 32, 24), s.cloth, s.warped_cloth});
    }
    return out;
}

}  // namespace

TEST_CASE("fresh matcher predicts the identity warp") {
    auto net = gmm_init<float>(tiny_arch());
    auto samples = tiny_samples(1, 11);
    Tape<float> t;
    VarSet<float> vars = leaf_params(t, net.params);
    auto fwd = gmm_forward(t, net, vars, t.leaf(samples[0].person), t.leaf(samples[0].cloth));
    const Tensor<float>& theta = t.val(fwd.theta);
    REQUIRE(theta.dims == std::vector<Index>{2, 5, 5});
    // the regressor head is zero-initialized, so theta is exactly zero
    for (float v : theta.data) REQUIRE(v == 0.0f);
    const Tensor<float>& grid = t.val(fwd.grid);
    REQUIRE(grid.dims == std::vector<Index>{2, 32, 24});
    // zero offsets give the identity grid and the garment passes through
    const Tensor<float>& warped = t.val(fwd.warped);
    REQUIRE(warped.dims == std::vector<Index>{3, 32, 24});
    for (Index i = 0; i < warped.size(); ++i)
        REQUIRE(warped[i] == Catch::Approx(samples[0].cloth[i]).margin(1e-5));
}

TEST_CASE("forward rejects mis-shaped inputs") {
    auto net = gmm_init<float>(tiny_arch());
    Tape<float> t;
    VarSet<float> vars = leaf_params(t, net.params);
    Tensor<float> person({22, 32, 24}, 0.5f), cloth({3, 32, 24}, 0.5f);
    REQUIRE_THROWS_WITH(gmm_forward(t, net, vars, t.leaf(Tensor<float>({22, 16, 12}, 0.5f)),
                                    t.leaf(cloth)),
                        Catch::Matchers::ContainsSubstring("person dims"));
    REQUIRE_THROWS_WITH(gmm_forward(t, net, vars, t.leaf(person),
                                    t.leaf(Tensor<float>({3, 16, 12}, 0.5f))),
                        Catch::Matchers::ContainsSubstring("cloth dims"));
}

TEST_CASE("matcher checkpoint round trip is bit-exact") {
    auto net = gmm_init<float>(tiny_arch(21));
    std::string path = temp_path("gmm_ckpt.bin");
    gmm_save(net, path);
    auto back = gmm_load<float>(path);
    REQUIRE(back.arch.height == net.arch.height);
    REQUIRE(back.arch.width == net.arch.width);
    REQUIRE(back.arch.base == net.arch.base);
    REQUIRE(back.params.size() == net.params.size());
    for (const auto& [name, t] : net.params) {
        REQUIRE(back.params.count(name) == 1);
        REQUIRE(back.params.at(name).dims == t.dims);
        REQUIRE(std::memcmp(back.params.at(name).data.data(), t.data.data(),
                            sizeof(float) * static_cast<size_t>(t.size())) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("matcher loader rejects renderer checkpoints") {
    TomArch ta;
    ta.height = 32;
    ta.width = 24;
    ta.base = 8;
    auto tom = tom_init<float>(ta);
    std::string path = temp_path("gmm_wrongkind.bin");
    tom_save(tom, path);
    REQUIRE_THROWS_WITH(gmm_load<float>(path),
                        Catch::Matchers::ContainsSubstring("not a geometric-matching net"));
    std::remove(path.c_str());
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto samples = tiny_samples(4, 31);
    TrainConfig cfg;
    cfg.steps = 6;
    cfg.batch = 2;
    cfg.lr = 1e-3;
    cfg.seed = 9;
    cfg.height = 32;
    cfg.width = 24;
    cfg.base = 8;
    auto a = gmm_init<float>(tiny_arch(9));
    auto b = gmm_init<float>(tiny_arch(9));
    auto ra = train_gmm(a, samples, cfg);
    auto rb = train_gmm(b, samples, cfg);
    REQUIRE(ra.loss_curve.size() == rb.loss_curve.size());
    for (size_t i = 0; i < ra.loss_curve.size(); ++i)
        REQUIRE(ra.loss_curve[i].second == rb.loss_curve[i].second);
    for (const auto& [name, t] : a.params)
        REQUIRE(std::memcmp(b.params.at(name).data.data(), t.data.data(),
                            sizeof(float) * static_cast<size_t>(t.size())) == 0);
}

TEST_CASE("a short training run reduces the alignment loss") {
    auto samples = tiny_samples(6, 41);
    TrainConfig cfg;
    cfg.steps = 80;
    cfg.batch = 6;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    cfg.height = 32;
    cfg.width = 24;
    cfg.base = 8;
    auto net = gmm_init<float>(tiny_arch(3));
    auto res = train_gmm(net, samples, cfg);
    double head = 0, tail = 0;
    for (size_t i = 0; i < 10; ++i) {
        head += res.loss_curve[i].second;
        tail += res.loss_curve[res.loss_curve.size() - 1 - i].second;
    }
    REQUIRE(tail < head);
}
