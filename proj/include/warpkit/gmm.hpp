#pragma once

#include <functional>

#include "warpkit/adam.hpp"
#include "warpkit/io/checkpoint.hpp"
#include "warpkit/netcommon.hpp"
#include "warpkit/sampler.hpp"
#include "warpkit/tps.hpp"

// Geometric matching: twin feature extractors, correlation layer,
// regressor to the 50 anchor offsets, and the L1-supervised training
// loop over (person rep, garment, worn garment) triplets.

namespace warpkit {

struct GmmArch {
    Index height = 256;
    Index width = 192;
    Index base = 64;  // filter width unit; layer filters are {1,2,4,8,8,8} x base
    Index person_channels = 22;
    Index cloth_channels = 3;
    unsigned seed = 1;

    // spatial extent after the four 2-strided extractor layers
    Index feat_h() const { return half4(height); }
    Index feat_w() const { return half4(width); }
    // extent after the regressor's two 2-strided layers
    Index reg_h() const { return half1(half1(feat_h())); }
    Index reg_w() const { return half1(half1(feat_w())); }

    static Index half1(Index e) { return conv_out_extent(e, 3, 2, 1); }
    static Index half4(Index e) { return half1(half1(half1(half1(e)))); }
};

template <class T>
struct GmmNet {
    GmmArch arch;
    ParamSet<T> params;
};

namespace detail {

// four 2-strided then two 1-strided conv layers; filters 1,2,4,8,8,8 x base
inline const Index kExtractorMul[6] = {1, 2, 4, 8, 8, 8};
inline const Index kExtractorStride[6] = {2, 2, 2, 2, 1, 1};
// two 2-strided then two 1-strided; filters 8,4,2,1 x base
inline const Index kRegressorMul[4] = {8, 4, 2, 1};
inline const Index kRegressorStride[4] = {2, 2, 1, 1};

}  // namespace detail

// Fresh parameters. The final fully-connected layer starts at zero so
// the net predicts the identity warp before any training.
template <class T>
GmmNet<T> gmm_init(const GmmArch& arch) {
    require(arch.height >= 4 && arch.width >= 4, "gmm_init: input must be at least 4x4");
    require(arch.base >= 1, "gmm_init: base filter count must be >= 1");
    GmmNet<T> net{arch, {}};
    std::mt19937 rng(arch.seed);
    for (auto [prefix, cin] : {std::pair<const char*, Index>{"extractor_p", arch.person_channels},
                               {"extractor_c", arch.cloth_channels}}) {
        Index c = cin;
        for (int i = 0; i < 6; ++i) {
            Index cout = detail::kExtractorMul[i] * arch.base;
            init_conv(net.params, std::string(prefix) + ".conv" + std::to_string(i), cout, c, 3,
                      rng);
            c = cout;
        }
    }
    Index c = arch.feat_h() * arch.feat_w();  // correlation output channels
    for (int i = 0; i < 4; ++i) {
        Index cout = detail::kRegressorMul[i] * arch.base;
        init_conv(net.params, "regressor.conv" + std::to_string(i), cout, c, 3, rng);
        c = cout;
    }
    init_linear(net.params, "regressor.fc", 2 * kAnchorCount, c * arch.reg_h() * arch.reg_w(), rng,
                /*zero=*/true);
    return net;
}

namespace detail {

template <class T>
Var<T> gmm_extract(Tape<T>& t, Var<T> x, const VarSet<T>& vars, const std::string& prefix) {
    for (int i = 0; i < 6; ++i)
        x = conv_in_lrelu(t, x, vars, prefix + ".conv" + std::to_string(i), kExtractorStride[i]);
    return l2_normalize_channels(t, x);
}

}  // namespace detail

template <class T>
struct GmmForward {
    Var<T> theta;   // [2,5,5] anchor offsets
    Var<T> grid;    // [2,H,W] sampling grid
    Var<T> warped;  // [3,H,W] warped garment
};

// person [person_channels,H,W], cloth [3,H,W]; both leafed by the caller.
template <class T>
GmmForward<T> gmm_forward(Tape<T>& t, const GmmNet<T>& net, const VarSet<T>& vars, Var<T> person,
                          Var<T> cloth) {
    const GmmArch& a = net.arch;
    require(t.val(person).dims == std::vector<Index>{a.person_channels, a.height, a.width},
            "gmm_forward: person dims " + dims_str(t.val(person).dims) + " do not match arch");
    require(t.val(cloth).dims == std::vector<Index>{a.cloth_channels, a.height, a.width},
            "gmm_forward: cloth dims " + dims_str(t.val(cloth).dims) + " do not match arch");
    Var<T> fp = detail::gmm_extract(t, person, vars, "extractor_p");
    Var<T> fc = detail::gmm_extract(t, cloth, vars, "extractor_c");
    Var<T> x = correlation(t, fp, fc);
    for (int i = 0; i < 4; ++i)
        x = conv_in_lrelu(t, x, vars, "regressor.conv" + std::to_string(i),
                          detail::kRegressorStride[i]);
    x = linear(t, x, vars.at("regressor.fc.weight"), vars.at("regressor.fc.bias"));
    Var<T> theta = reshape(t, x, {2, kAnchorsPerSide, kAnchorsPerSide});
    Var<T> grid = tps_grid(t, theta, a.height, a.width);
    Var<T> warped = grid_sample(t, cloth, grid, PaddingMode::Border);
    return {theta, grid, warped};
}

// ------------------------------------------------------------- checkpoints

namespace detail {

constexpr float kCkptKindGmm = 1.0f;
constexpr float kCkptKindTom = 2.0f;

template <class T>
std::map<std::string, Tensor<float>> params_to_f32(const ParamSet<T>& params) {
    std::map<std::string, Tensor<float>> out;
    for (const auto& [name, tensor] : params) out.emplace(name, tensor.template cast<float>());
    return out;
}

template <class T>
ParamSet<T> params_from_f32(const std::map<std::string, Tensor<float>>& src) {
    ParamSet<T> out;
    for (const auto& [name, tensor] : src)
        if (name.rfind("meta.", 0) != 0) out.emplace(name, tensor.template cast<T>());
    return out;
}

}  // namespace detail

template <class T>
void gmm_save(const GmmNet<T>& net, const std::string& path) {
    auto named = detail::params_to_f32(net.params);
    named["meta.arch"] = Tensor<float>::from(
        {6}, {detail::kCkptKindGmm, static_cast<float>(net.arch.height),
              static_cast<float>(net.arch.width), static_cast<float>(net.arch.base),
              static_cast<float>(net.arch.person_channels),
              static_cast<float>(net.arch.cloth_channels)});
    save_ckpt(path, named);
}

template <class T>
GmmNet<T> gmm_load(const std::string& path) {
    auto named = load_ckpt(path);
    auto it = named.find("meta.arch");
    require(it != named.end() && it->second.size() == 6,
            "gmm_load: checkpoint lacks a meta.arch tensor: " + path);
    require(it->second[0] == detail::kCkptKindGmm,
            "gmm_load: checkpoint is not a geometric-matching net: " + path);
    GmmArch arch;
    arch.height = static_cast<Index>(it->second[1]);
    arch.width = static_cast<Index>(it->second[2]);
    arch.base = static_cast<Index>(it->second[3]);
    arch.person_channels = static_cast<Index>(it->second[4]);
    arch.cloth_channels = static_cast<Index>(it->second[5]);
    GmmNet<T> net{arch, detail::params_from_f32<T>(named)};
    GmmNet<T> fresh = gmm_init<T>(arch);
    for (const auto& [name, tensor] : fresh.params) {
        auto pit = net.params.find(name);
        require(pit != net.params.end(), "gmm_load: missing parameter " + name + " in " + path);
        require(pit->second.same_dims(tensor),
                "gmm_load: parameter " + name + " has dims " + dims_str(pit->second.dims) +
                    ", expected " + dims_str(tensor.dims));
    }
    return net;
}

// --------------------------------------------------------------- training

struct TrainConfig {
    long steps = 2000;
    long batch = 4;
    double lr = 1e-4;
    unsigned seed = 1;
    Index height = 64;
    Index width = 48;
    Index base = 16;
    long total_steps = 0;  // lr schedule horizon; 0 means == steps
    long horizon() const { return total_steps > 0 ? total_steps : steps; }
};

template <class T>
struct TrainResult {
    std::vector<std::pair<long, double>> loss_curve;  // (step, mean batch loss)
};

// One supervised triplet: person rep, flat garment, worn garment.
template <class T>
struct GmmSample {
    Tensor<T> person;
    Tensor<T> cloth;
    Tensor<T> cloth_target;
};

// Minimizes mean |T_theta(c) - c_t| with Adam. Per-sample tapes within a
// batch may run in parallel; gradients are summed in sample order so the
// result is identical at any thread count.
template <class T>
TrainResult<T> train_gmm(GmmNet<T>& net, const std::vector<GmmSample<T>>& samples,
                         const TrainConfig& cfg,
                         const std::function<void(long, double)>& on_step = nullptr) {
    require(!samples.empty(), "train_gmm: need at least 1 sample");
    require(cfg.batch >= 1 && cfg.steps >= 1, "train_gmm: batch and steps must be positive");
    AdamConfig<T> acfg;
    acfg.lr = static_cast<T>(cfg.lr);
    acfg.total_steps = cfg.horizon();
    AdamState<T> astate;
    std::mt19937 rng(cfg.seed);
    TrainResult<T> result;
    result.loss_curve.reserve(static_cast<size_t>(cfg.steps));

    for (long step = 0; step < cfg.steps; ++step) {
        std::vector<size_t> idx(static_cast<size_t>(cfg.batch));
        for (auto& i : idx) i = rng() % samples.size();

        std::vector<ParamSet<T>> grads(idx.size());
        std::vector<double> losses(idx.size());
        parallel_for(idx.size(), [&](size_t b) {
            const GmmSample<T>& s = samples[idx[b]];
            Tape<T> tape;
            VarSet<T> vars = leaf_params(tape, net.params);
            Var<T> person = tape.leaf(s.person);
            Var<T> cloth = tape.leaf(s.cloth);
            auto fwd = gmm_forward(tape, net, vars, person, cloth);
            Var<T> target = tape.leaf(s.cloth_target);
            Var<T> loss = l1_loss(tape, fwd.warped, target, Reduction::Mean);
            tape.backward(loss);
            losses[b] = static_cast<double>(tape.val(loss)[0]);
            accumulate_grads(tape, vars, grads[b], T(1) / static_cast<T>(idx.size()));
        });

        ParamSet<T> total = std::move(grads[0]);
        for (size_t b = 1; b < grads.size(); ++b)
            for (auto& [name, g] : grads[b]) {
                Tensor<T>& dst = total.at(name);
                for (Index i = 0; i < g.size(); ++i) dst[i] += g[i];
            }
        double mean_loss = 0.0;
        for (double l : losses) mean_loss += l;
        mean_loss /= static_cast<double>(losses.size());
        require(std::isfinite(mean_loss),
                "train_gmm: non-finite loss at step " + std::to_string(step));

        adam_step(astate, acfg, net.params, total);
        result.loss_curve.emplace_back(step, mean_loss);
        if (on_step) on_step(step, mean_loss);
    }
    return result;
}

}  // namespace warpkit
