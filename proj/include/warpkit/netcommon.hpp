#pragma once

#include <map>
#include <random>
#include <string>

#include "warpkit/ops.hpp"

// Shared pieces for the trainable nets: parameter registries, seeded
// init, conv/norm/activation blocks.

namespace warpkit {

template <class T>
using ParamSet = std::map<std::string, Tensor<T>>;

template <class T>
using VarSet = std::map<std::string, Var<T>>;

// Uniform in ±sqrt(1/fan_in); biases start at zero.
template <class T>
void init_conv(ParamSet<T>& params, const std::string& name, Index cout, Index cin, Index k,
               std::mt19937& rng) {
    T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(cin * k * k)));
    params[name + ".weight"] = uniform_tensor<T>({cout, cin, k, k}, -bound, bound, rng);
    params[name + ".bias"] = Tensor<T>({cout});
}

template <class T>
void init_linear(ParamSet<T>& params, const std::string& name, Index n_out, Index n_in,
                 std::mt19937& rng, bool zero = false) {
    if (zero) {
        params[name + ".weight"] = Tensor<T>({n_out, n_in});
    } else {
        T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(n_in)));
        params[name + ".weight"] = uniform_tensor<T>({n_out, n_in}, -bound, bound, rng);
    }
    params[name + ".bias"] = Tensor<T>({n_out});
}

// Puts every parameter on the tape; `trainable` toggles gradient updates
// (a fixed feature network passes false).
template <class T>
VarSet<T> leaf_params(Tape<T>& t, const ParamSet<T>& params, bool trainable = true) {
    VarSet<T> vars;
    for (const auto& [name, tensor] : params) vars.emplace(name, t.leaf(tensor, trainable));
    return vars;
}

// Mean gradient per parameter; missing grads (parameter unused by the
// loss) count as zero.
template <class T>
void accumulate_grads(Tape<T>& t, const VarSet<T>& vars, ParamSet<T>& grads, T scale) {
    for (const auto& [name, var] : vars) {
        auto [it, fresh] = grads.try_emplace(name, Tensor<T>(t.val(var).dims));
        if (!t.has_grad(var)) continue;
        const Tensor<T>& g = t.grad(var);
        for (Index i = 0; i < g.size(); ++i) it->second[i] += g[i] * scale;
    }
}

// conv3x3 + instance norm + leaky relu. Instance norm is skipped when
// the conv output has fewer than 2 pixels per channel (variance
// undefined); this only happens at micro sizes and tiny presets.
template <class T>
Var<T> conv_in_lrelu(Tape<T>& t, Var<T> x, const VarSet<T>& vars, const std::string& name,
                     Index stride) {
    Var<T> y = conv2d(t, x, vars.at(name + ".weight"), vars.at(name + ".bias"), stride, 1);
    if (t.val(y).dims[1] * t.val(y).dims[2] >= 2) y = instance_norm(t, y);
    return leaky_relu(t, y, T(0.2));
}

inline Index conv_out_extent(Index e, Index k, Index stride, Index pad) {
    return static_cast<Index>((static_cast<long>(e) + 2 * static_cast<long>(pad) -
                               static_cast<long>(k)) /
                                  static_cast<long>(stride) +
                              1);
}

}  // namespace warpkit
