#pragma once

#include <functional>

#include "warpkit/tom.hpp"

// Central finite-difference verification of tape gradients, run in f64.
// Used by the test suite and the `grad-check` CLI command.

namespace warpkit {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }
};

namespace detail {

// builder consumes leafed inputs and returns a scalar loss.
template <class Builder>
double fd_max_rel_err(std::vector<Tensor<double>> inputs, Builder&& build, std::mt19937& rng,
                      size_t probes_per_input = 6, double h = 1e-5) {
    auto eval = [&](Var<double>* loss_out, std::vector<Tensor<double>>* grads_out) {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(inputs.size());
        for (const auto& x : inputs) vars.push_back(tape.leaf(x, /*trainable=*/true));
        Var<double> loss = build(tape, vars);
        require(tape.val(loss).size() == 1, "fd_max_rel_err: loss must be scalar");
        if (grads_out) {
            tape.backward(loss);
            grads_out->clear();
            for (Var<double> v : vars)
                grads_out->push_back(tape.has_grad(v) ? tape.grad(v)
                                                      : Tensor<double>(tape.val(v).dims));
        }
        if (loss_out) *loss_out = loss;
        return tape.val(loss)[0];
    };

    Var<double> loss;
    std::vector<Tensor<double>> analytic;
    eval(&loss, &analytic);

    double worst = 0.0;
    for (size_t k = 0; k < inputs.size(); ++k) {
        Index n = inputs[k].size();
        size_t probes = std::min<size_t>(probes_per_input, n);
        for (size_t p = 0; p < probes; ++p) {
            Index i = probes == n ? p : rng() % n;
            double saved = inputs[k][i];
            inputs[k][i] = saved + h;
            double fp = eval(nullptr, nullptr);
            inputs[k][i] = saved - h;
            double fm = eval(nullptr, nullptr);
            inputs[k][i] = saved;
            double fd = (fp - fm) / (2.0 * h);
            double an = analytic[k][i];
            double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline Tensor<double> rand_tensor(std::vector<Index> dims, std::mt19937& rng, double lo = -0.5,
                                  double hi = 0.5) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor<double> t(std::move(dims));
    for (auto& v : t.data) v = d(rng);
    return t;
}

}  // namespace detail

// Every differentiable primitive plus the full matcher and renderer
// graphs at micro scale (8x6 inputs).
inline GradCheckReport grad_check_suite(unsigned seed) {
    GradCheckReport report;
    std::mt19937 rng(seed);
    auto rt = [&](std::vector<Index> dims, double lo = -0.5, double hi = 0.5) {
        return detail::rand_tensor(std::move(dims), rng, lo, hi);
    };
    auto check = [&](const std::string& name, std::vector<Tensor<double>> inputs, auto build) {
        double err = detail::fd_max_rel_err(std::move(inputs), build, rng);
        report.entries.push_back({name, err});
    };
    using V = std::vector<Var<double>>;
    using T64 = Tape<double>;
    auto reduce = [](T64& t, Var<double> x) { return sum_all(t, x); };

    check("add", {rt({3, 4, 5}), rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, add(t, v[0], v[1])); });
    check("sub", {rt({3, 4, 5}), rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, sub(t, v[0], v[1])); });
    check("mul", {rt({3, 4, 5}), rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, mul(t, v[0], v[1])); });
    check("scale", {rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, scale(t, v[0], 1.7)); });
    check("sigmoid", {rt({2, 4, 3})},
          [&](T64& t, const V& v) { return reduce(t, sigmoid(t, v[0])); });
    check("tanh_op", {rt({2, 4, 3})},
          [&](T64& t, const V& v) { return reduce(t, tanh_op(t, v[0])); });
    check("tanh01", {rt({2, 4, 3})},
          [&](T64& t, const V& v) { return reduce(t, tanh01(t, v[0])); });
    // keep activations away from the leaky_relu kink at 0
    {
        Tensor<double> x = rt({2, 4, 3});
        for (auto& v : x.data) v += v >= 0.0 ? 0.2 : -0.2;
        check("leaky_relu", {x},
              [&](T64& t, const V& v) { return reduce(t, leaky_relu(t, v[0], 0.2)); });
    }
    check("mean_all", {rt({3, 4, 5})}, [&](T64& t, const V& v) { return mean_all(t, v[0]); });
    check("sum_all", {rt({3, 4, 5})}, [&](T64& t, const V& v) { return sum_all(t, v[0]); });
    // keep |a - b| away from the l1 kink at 0
    {
        Tensor<double> a = rt({3, 4, 5});
        Tensor<double> b = a;
        for (auto& v : b.data) v += 0.3;
        check("l1_loss_sum", {a, b},
              [&](T64& t, const V& v) { return l1_loss(t, v[0], v[1], Reduction::Sum); });
        check("l1_loss_mean", {a, b},
              [&](T64& t, const V& v) { return l1_loss(t, v[0], v[1], Reduction::Mean); });
    }
    check("linear", {rt({4, 3, 2}), rt({5, 24}), rt({5})},
          [&](T64& t, const V& v) { return reduce(t, linear(t, v[0], v[1], v[2])); });
    check("conv2d_s1", {rt({2, 6, 5}), rt({3, 2, 3, 3}), rt({3})}, [&](T64& t, const V& v) {
        return reduce(t, conv2d(t, v[0], v[1], v[2], Index(1), Index(1)));
    });
    check("conv2d_s2", {rt({2, 6, 5}), rt({3, 2, 3, 3}), rt({3})}, [&](T64& t, const V& v) {
        return reduce(t, conv2d(t, v[0], v[1], v[2], Index(2), Index(1)));
    });
    check("instance_norm", {rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, instance_norm(t, v[0])); });
    // keep channel vectors away from zero norm
    {
        Tensor<double> x = rt({3, 4, 5}, 0.2, 1.0);
        check("l2_normalize_channels", {x},
              [&](T64& t, const V& v) { return reduce(t, l2_normalize_channels(t, v[0])); });
    }
    check("correlation", {rt({3, 4, 5}), rt({3, 4, 5})},
          [&](T64& t, const V& v) { return reduce(t, correlation(t, v[0], v[1])); });
    check("composite", {rt({1, 4, 3}, 0.1, 0.9), rt({3, 4, 3}), rt({3, 4, 3})},
          [&](T64& t, const V& v) { return reduce(t, composite(t, v[0], v[1], v[2])); });
    check("concat_channels", {rt({2, 4, 3}), rt({3, 4, 3})},
          [&](T64& t, const V& v) { return reduce(t, concat_channels(t, v[0], v[1])); });
    check("slice_channels", {rt({4, 4, 3})}, [&](T64& t, const V& v) {
        return reduce(t, slice_channels(t, v[0], Index(1), Index(3)));
    });
    check("crop_spatial", {rt({2, 5, 6})},
          [&](T64& t, const V& v) { return reduce(t, crop_spatial(t, v[0], 4, 5)); });
    check("nearest_upsample2x", {rt({2, 3, 4})},
          [&](T64& t, const V& v) { return reduce(t, nearest_upsample2x(t, v[0])); });
    check("reshape", {rt({2, 3, 4})},
          [&](T64& t, const V& v) { return reduce(t, reshape(t, v[0], {4, 6})); });
    // grid coords away from pixel-center lattice lines (the documented
    // sub-gradient tie-break makes FD invalid exactly on them)
    {
        Tensor<double> img = rt({2, 5, 4});
        Tensor<double> grid({2, 3, 3});
        std::uniform_real_distribution<double> d(-0.8, 0.8);
        for (auto& v : grid.data) {
            v = d(rng);
            v += 0.037;  // nudge off the lattice
        }
        for (auto mode : {PaddingMode::Zeros, PaddingMode::Border})
            check(mode == PaddingMode::Zeros ? "grid_sample_zeros" : "grid_sample_border",
                  {img, grid},
                  [&](T64& t, const V& v) { return reduce(t, grid_sample(t, v[0], v[1], mode)); });
    }
    {
        Tensor<double> theta = rt({2, kAnchorsPerSide, kAnchorsPerSide}, -0.08, 0.08);
        check("tps_grid", {theta},
              [&](T64& t, const V& v) { return reduce(t, tps_grid(t, v[0], 6, 5)); });
        Tensor<double> img = rt({3, 6, 5});
        check("tps_grid_sample", {theta, img}, [&](T64& t, const V& v) {
            Var<double> g = tps_grid(t, v[0], 6, 5);
            return reduce(t, grid_sample(t, v[1], g, PaddingMode::Border));
        });
    }

    // full matcher graph at 8x6
    {
        GmmArch ga;
        ga.height = 8;
        ga.width = 6;
        ga.base = 1;
        ga.person_channels = 4;
        ga.seed = seed + 1;
        GmmNet<double> net = gmm_init<double>(ga);
        std::vector<std::string> names;
        std::vector<Tensor<double>> inputs;
        for (auto& [name, tensor] : net.params) {
            names.push_back(name);
            inputs.push_back(detail::rand_tensor(tensor.dims, rng, -0.3, 0.3));
        }
        inputs.push_back(rt({4, 8, 6}));
        inputs.push_back(rt({3, 8, 6}));
        Tensor<double> target = rt({3, 8, 6}, 0.5, 1.5);
        check("gmm_graph", inputs, [&](T64& t, const V& v) {
            VarSet<double> vars;
            for (size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], v[i]);
            auto fwd = gmm_forward(t, net, vars, v[names.size()], v[names.size() + 1]);
            return l1_loss(t, fwd.warped, t.leaf(target), Reduction::Mean);
        });
    }

    // full renderer graph at 8x6, both heads exercised through the loss
    {
        TomArch ta;
        ta.height = 8;
        ta.width = 6;
        ta.base = 1;
        ta.person_channels = 4;
        ta.seed = seed + 2;
        TomNet<double> net = tom_init<double>(ta);
        PerceptualConfig pc;
        pc.seed = seed + 3;
        PerceptualNet<double> pnet = perceptual_init<double>(pc);
        std::vector<std::string> names;
        std::vector<Tensor<double>> inputs;
        for (auto& [name, tensor] : net.params) {
            names.push_back(name);
            inputs.push_back(detail::rand_tensor(tensor.dims, rng, -0.3, 0.3));
        }
        inputs.push_back(rt({4, 8, 6}));
        inputs.push_back(rt({3, 8, 6}));
        Tensor<double> target = rt({3, 8, 6}, 0.5, 1.5);
        check("tom_graph", inputs, [&](T64& t, const V& v) {
            VarSet<double> vars;
            for (size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], v[i]);
            auto fwd = tom_forward(t, net, vars, v[names.size()], v[names.size() + 1]);
            return tom_loss(t, pnet, fwd, t.leaf(target), TomLossWeights{});
        });
    }

    return report;
}

}  // namespace warpkit
