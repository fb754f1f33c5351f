#pragma once

#include <cmath>
#include <map>
#include <string>

#include "warpkit/tensor.hpp"

namespace warpkit {

// Adam with the training schedule used throughout: lr constant for the
// first half of total_steps, then linear decay to zero (clamped at 0
// past the horizon).
template <class T>
struct AdamConfig {
    T lr = T(1e-4);
    T beta1 = T(0.5);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    long total_steps = 200000;
};

template <class T>
struct AdamState {
    long step = 0;  // strictly increasing; incremented by adam_step
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
};

template <class T>
T adam_lr_at(const AdamConfig<T>& cfg, long step) {
    long half = cfg.total_steps / 2;
    if (step <= half) return cfg.lr;
    long tail = cfg.total_steps - half;
    if (tail <= 0 || step >= cfg.total_steps) return T(0);
    return cfg.lr * static_cast<T>(cfg.total_steps - step) / static_cast<T>(tail);
}

// One bias-corrected update over a named parameter set.
template <class T>
void adam_step(AdamState<T>& state, const AdamConfig<T>& cfg,
               std::map<std::string, Tensor<T>>& params,
               const std::map<std::string, Tensor<T>>& grads) {
    state.step += 1;
    T lr = adam_lr_at(cfg, state.step);
    T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
    T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        require(git != grads.end(), "adam_step: missing gradient for parameter " + name);
        const Tensor<T>& g = git->second;
        require(g.same_dims(p), "adam_step: gradient dims mismatch for " + name);
        Tensor<T>& m = state.m.try_emplace(name, Tensor<T>(p.dims)).first->second;
        Tensor<T>& v = state.v.try_emplace(name, Tensor<T>(p.dims)).first->second;
        require(m.same_dims(p) && v.same_dims(p), "adam_step: moment dims mismatch for " + name);
        for (Index i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
            T mhat = m[i] / bc1;
            T vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace warpkit
