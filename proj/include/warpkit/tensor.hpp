#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "warpkit/common.hpp"

namespace warpkit {

using Index = std::size_t;

// Dense n-dimensional array, row-major. The universal numeric carrier;
// float for training math, double for gradient-check paths.
template <class T>
struct Tensor {
    std::vector<Index> dims;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<Index> d, T fill = T(0)) : dims(std::move(d)) {
        for (Index e : dims) require(e >= 1, "Tensor: zero extent");
        data.assign(count(dims), fill);
    }

    static Index count(const std::vector<Index>& d) {
        Index n = 1;
        for (Index e : d) n *= e;
        return n;
    }

    static Tensor zeros(std::vector<Index> d) { return Tensor(std::move(d)); }

    static Tensor from(std::vector<Index> d, std::vector<T> v) {
        Tensor t;
        t.dims = std::move(d);
        require(v.size() == count(t.dims), "Tensor::from: data length does not match dims");
        t.data = std::move(v);
        return t;
    }

    Index size() const { return data.size(); }
    Index rank() const { return dims.size(); }
    Index dim(Index i) const { return dims.at(i); }

    T& operator[](Index i) { return data[i]; }
    const T& operator[](Index i) const { return data[i]; }

    // 3-d accessor for [C,H,W] image tensors.
    T& at3(Index c, Index y, Index x) { return data[(c * dims[1] + y) * dims[2] + x]; }
    const T& at3(Index c, Index y, Index x) const { return data[(c * dims[1] + y) * dims[2] + x]; }

    // 2-d accessor for [H,W] masks / matrices.
    T& at2(Index y, Index x) { return data[y * dims[1] + x]; }
    const T& at2(Index y, Index x) const { return data[y * dims[1] + x]; }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.dims = dims;
        out.data.resize(data.size());
        for (Index i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

inline std::string dims_str(const std::vector<Index>& d) {
    std::ostringstream os;
    os << "[";
    for (Index i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
    os << "]";
    return os.str();
}

template <class T>
Tensor<T> uniform_tensor(std::vector<Index> dims, T lo, T hi, std::mt19937& rng) {
    Tensor<T> t(std::move(dims));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

}  // namespace warpkit
