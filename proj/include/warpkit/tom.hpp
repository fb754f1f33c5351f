#pragma once

#include <functional>

#include "warpkit/gmm.hpp"

// Try-on renderer: a 12-layer UNet over (person rep, warped garment)
// producing a rendered person and a composition mask, fused as
// m*c + (1-m)*r, plus the fixed-feature perceptual distance and
// the training loop with its two ablation variants.

namespace warpkit {

enum class TomVariant { Full, NoMask, NoMaskL1 };

inline TomVariant tom_variant_from_string(const std::string& s) {
    if (s == "full") return TomVariant::Full;
    if (s == "no_mask") return TomVariant::NoMask;
    if (s == "no_mask_l1") return TomVariant::NoMaskL1;
    fail("unknown variant '" + s + "' (want full, no_mask, or no_mask_l1)");
}

inline std::string tom_variant_name(TomVariant v) {
    switch (v) {
        case TomVariant::Full: return "full";
        case TomVariant::NoMask: return "no_mask";
        default: return "no_mask_l1";
    }
}

struct TomArch {
    Index height = 256;
    Index width = 192;
    Index base = 64;  // down filters {1,2,4,8,8,8} x base, up {8,8,4,2,1} x base
    Index person_channels = 22;
    TomVariant variant = TomVariant::Full;
    unsigned seed = 1;

    // The no-mask ablation renders 3 channels and skips the mask head.
    Index out_channels() const { return variant == TomVariant::NoMask ? 3 : 4; }
};

template <class T>
struct TomNet {
    TomArch arch;
    ParamSet<T> params;
};

namespace detail {

inline const Index kTomDownMul[6] = {1, 2, 4, 8, 8, 8};
inline const Index kTomUpMul[5] = {8, 8, 4, 2, 1};

}  // namespace detail

template <class T>
TomNet<T> tom_init(const TomArch& arch) {
    require(arch.height >= 4 && arch.width >= 4, "tom_init: input must be at least 4x4");
    require(arch.base >= 1, "tom_init: base filter count must be >= 1");
    TomNet<T> net{arch, {}};
    std::mt19937 rng(arch.seed);
    Index c = arch.person_channels + 3;
    std::array<Index, 6> down_out{};
    for (int i = 0; i < 6; ++i) {
        Index cout = detail::kTomDownMul[i] * arch.base;
        init_conv(net.params, "down" + std::to_string(i), cout, c, 3, rng);
        down_out[static_cast<size_t>(i)] = cout;
        c = cout;
    }
    // up stage i consumes upsampled x concatenated with encoder stage 4-i
    for (int i = 0; i < 5; ++i) {
        Index cin = c + down_out[static_cast<size_t>(4 - i)];
        Index cout = detail::kTomUpMul[i] * arch.base;
        init_conv(net.params, "up" + std::to_string(i), cout, cin, 3, rng);
        c = cout;
    }
    init_conv(net.params, "up5", arch.out_channels(), c, 3, rng);
    return net;
}

template <class T>
struct TomForward {
    Var<T> rendered;   // I_r, [3,H,W] in [0,1]
    Var<T> mask;       // M, [1,H,W]; invalid for the no-mask variant
    Var<T> composite;  // I_o
};

// person [person_channels,H,W], warped garment [3,H,W]; leafed by caller.
template <class T>
TomForward<T> tom_forward(Tape<T>& t, const TomNet<T>& net, const VarSet<T>& vars, Var<T> person,
                          Var<T> warped) {
    const TomArch& a = net.arch;
    require(t.val(person).dims == std::vector<Index>{a.person_channels, a.height, a.width},
            "tom_forward: person dims " + dims_str(t.val(person).dims) + " do not match arch");
    require(t.val(warped).dims == std::vector<Index>{3, a.height, a.width},
            "tom_forward: warped dims " + dims_str(t.val(warped).dims) + " do not match arch");
    Var<T> x = concat_channels(t, person, warped);
    std::array<Var<T>, 6> skips;
    for (int i = 0; i < 6; ++i) {
        x = conv_in_lrelu(t, x, vars, "down" + std::to_string(i), 2);
        skips[static_cast<size_t>(i)] = x;
    }
    for (int i = 0; i < 5; ++i) {
        Var<T> skip = skips[static_cast<size_t>(4 - i)];
        x = nearest_upsample2x(t, x);
        x = crop_spatial(t, x, t.val(skip).dims[1], t.val(skip).dims[2]);
        x = concat_channels(t, x, skip);
        x = conv_in_lrelu(t, x, vars, "up" + std::to_string(i), 1);
    }
    x = nearest_upsample2x(t, x);
    x = crop_spatial(t, x, a.height, a.width);
    x = conv2d(t, x, vars.at("up5.weight"), vars.at("up5.bias"), Index(1), Index(1));

    TomForward<T> out;
    if (a.variant == TomVariant::NoMask) {
        out.rendered = tanh01(t, x);
        out.composite = out.rendered;
    } else {
        out.rendered = tanh01(t, slice_channels(t, x, Index(0), Index(3)));
        out.mask = sigmoid(t, slice_channels(t, x, Index(3), Index(4)));
        out.composite = composite(t, out.mask, warped, out.rendered);
    }
    return out;
}

// ------------------------------------------------------- perceptual metric

// Fixed random-weight 5-stage conv pyramid standing in for a pretrained
// perception net; distances use only metric axioms and relative
// comparisons, never absolute values.
struct PerceptualConfig {
    std::array<double, 5> lambdas{0.2, 0.2, 0.2, 0.2, 0.2};
    unsigned seed = 90210;
};

template <class T>
struct PerceptualNet {
    PerceptualConfig cfg;
    ParamSet<T> params;
};

template <class T>
PerceptualNet<T> perceptual_init(const PerceptualConfig& cfg = {}) {
    bool any = false;
    for (double l : cfg.lambdas) {
        require(l >= 0.0, "perceptual_init: layer weights must be >= 0");
        any = any || l > 0.0;
    }
    require(any, "perceptual_init: at least one layer weight must be positive");
    PerceptualNet<T> net{cfg, {}};
    std::mt19937 rng(cfg.seed);
    const Index chans[6] = {3, 8, 16, 32, 64, 64};
    for (int i = 0; i < 5; ++i)
        init_conv(net.params, "stage" + std::to_string(i), chans[i + 1], chans[i], 3, rng);
    return net;
}

// Five tap features at successively halved resolution (stage 0 keeps
// full resolution). Weights enter the tape as non-trainable leaves.
template <class T>
std::array<Var<T>, 5> perceptual_features(Tape<T>& t, const PerceptualNet<T>& net, Var<T> image) {
    require(t.val(image).rank() == 3 && t.val(image).dims[0] == 3,
            "perceptual_features: image must be [3,H,W]");
    std::array<Var<T>, 5> taps;
    Var<T> x = image;
    for (int i = 0; i < 5; ++i) {
        std::string name = "stage" + std::to_string(i);
        Var<T> w = t.leaf(net.params.at(name + ".weight"));
        Var<T> b = t.leaf(net.params.at(name + ".bias"));
        x = conv2d(t, x, w, b, Index(i == 0 ? 1 : 2), Index(1));
        x = leaky_relu(t, x, T(0.2));
        taps[static_cast<size_t>(i)] = x;
    }
    return taps;
}

template <class T>
Var<T> perceptual_loss(Tape<T>& t, const PerceptualNet<T>& net, Var<T> a, Var<T> b) {
    require(t.val(a).same_dims(t.val(b)), "perceptual_loss: image dims mismatch");
    auto fa = perceptual_features(t, net, a);
    auto fb = perceptual_features(t, net, b);
    Var<T> total;
    for (size_t i = 0; i < 5; ++i) {
        if (net.cfg.lambdas[i] == 0.0) continue;
        Var<T> term = scale(t, l1_loss(t, fa[i], fb[i], Reduction::Mean),
                            static_cast<T>(net.cfg.lambdas[i]));
        total = total.valid() ? add(t, total, term) : term;
    }
    return total;
}

// ---------------------------------------------------------------- tom loss

struct TomLossWeights {
    double l1 = 1.0;
    double vgg = 1.0;
    double mask = 1.0;
};

// Weighted sum: l1 |I_o - I_t| + vgg perceptual + mask |1 - M|, all
// mean-reduced. The mask term is dropped when the variant has no mask or
// its weight is zero.
template <class T>
Var<T> tom_loss(Tape<T>& t, const PerceptualNet<T>& pnet, const TomForward<T>& fwd, Var<T> target,
                const TomLossWeights& w) {
    require(w.l1 >= 0.0 && w.vgg >= 0.0 && w.mask >= 0.0, "tom_loss: weights must be >= 0");
    Var<T> total;
    auto accumulate = [&](Var<T> term, double weight) {
        if (weight == 0.0) return;
        term = scale(t, term, static_cast<T>(weight));
        total = total.valid() ? add(t, total, term) : term;
    };
    accumulate(l1_loss(t, fwd.composite, target, Reduction::Mean), w.l1);
    if (w.vgg > 0.0) accumulate(perceptual_loss(t, pnet, fwd.composite, target), w.vgg);
    if (fwd.mask.valid() && w.mask > 0.0) {
        Var<T> ones = t.leaf(Tensor<T>(t.val(fwd.mask).dims, T(1)));
        accumulate(l1_loss(t, fwd.mask, ones, Reduction::Mean), w.mask);
    }
    require(total.valid(), "tom_loss: all loss terms disabled");
    return total;
}

// ------------------------------------------------------------- checkpoints

template <class T>
void tom_save(const TomNet<T>& net, const std::string& path) {
    auto named = detail::params_to_f32(net.params);
    named["meta.arch"] = Tensor<float>::from(
        {6}, {detail::kCkptKindTom, static_cast<float>(net.arch.height),
              static_cast<float>(net.arch.width), static_cast<float>(net.arch.base),
              static_cast<float>(net.arch.person_channels),
              static_cast<float>(net.arch.variant == TomVariant::Full      ? 0
                                 : net.arch.variant == TomVariant::NoMask ? 1
                                                                          : 2)});
    save_ckpt(path, named);
}

template <class T>
TomNet<T> tom_load(const std::string& path) {
    auto named = load_ckpt(path);
    auto it = named.find("meta.arch");
    require(it != named.end() && it->second.size() == 6,
            "tom_load: checkpoint lacks a meta.arch tensor: " + path);
    require(it->second[0] == detail::kCkptKindTom,
            "tom_load: checkpoint is not a try-on net: " + path);
    TomArch arch;
    arch.height = static_cast<Index>(it->second[1]);
    arch.width = static_cast<Index>(it->second[2]);
    arch.base = static_cast<Index>(it->second[3]);
    arch.person_channels = static_cast<Index>(it->second[4]);
    int vcode = static_cast<int>(it->second[5]);
    require(vcode >= 0 && vcode <= 2, "tom_load: unknown variant code in " + path);
    arch.variant = vcode == 0 ? TomVariant::Full
                 : vcode == 1 ? TomVariant::NoMask
                              : TomVariant::NoMaskL1;
    TomNet<T> net{arch, detail::params_from_f32<T>(named)};
    TomNet<T> fresh = tom_init<T>(arch);
    for (const auto& [name, tensor] : fresh.params) {
        auto pit = net.params.find(name);
        require(pit != net.params.end(), "tom_load: missing parameter " + name + " in " + path);
        require(pit->second.same_dims(tensor),
                "tom_load: parameter " + name + " has dims " + dims_str(pit->second.dims) +
                    ", expected " + dims_str(tensor.dims));
    }
    return net;
}

// --------------------------------------------------------------- training

template <class T>
struct TomSample {
    Tensor<T> person;
    Tensor<T> warped;  // garment aligned to the person (or perturbed)
    Tensor<T> target;  // ground-truth worn image I_t
};

template <class T>
TrainResult<T> train_tom(TomNet<T>& net, const PerceptualNet<T>& pnet,
                         const std::vector<TomSample<T>>& samples, const TrainConfig& cfg,
                         TomLossWeights weights = {},
                         const std::function<void(long, double)>& on_step = nullptr) {
    require(!samples.empty(), "train_tom: need at least 1 sample");
    require(cfg.batch >= 1 && cfg.steps >= 1, "train_tom: batch and steps must be positive");
    if (net.arch.variant == TomVariant::NoMaskL1) weights.mask = 0.0;
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
            const TomSample<T>& s = samples[idx[b]];
            Tape<T> tape;
            VarSet<T> vars = leaf_params(tape, net.params);
            Var<T> person = tape.leaf(s.person);
            Var<T> warped = tape.leaf(s.warped);
            auto fwd = tom_forward(tape, net, vars, person, warped);
            Var<T> target = tape.leaf(s.target);
            Var<T> loss = tom_loss(tape, pnet, fwd, target, weights);
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
                "train_tom: non-finite loss at step " + std::to_string(step));

        adam_step(astate, acfg, net.params, total);
        result.loss_curve.emplace_back(step, mean_loss);
        if (on_step) on_step(step, mean_loss);
    }
    return result;
}

}  // namespace warpkit
