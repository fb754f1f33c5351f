#pragma once

#include <cmath>

#include "warpkit/gemm.hpp"
#include "warpkit/tape.hpp"

// Differentiable primitives over Tape<T>. Images follow the [C,H,W]
// convention. Backward closures capture node ids plus small saved state
// and look tensor values up through the tape at pull time.

namespace warpkit {

template <class T>
using Var = typename Tape<T>::Var;

enum class Reduction { Sum, Mean };

// Records an op whose pull closure needs the output node's own id.
template <class T, class Pull>
Var<T> record_op(Tape<T>& t, Tensor<T> value, Pull&& pull) {
    Var<T> self{t.size()};  // id the node will get
    return t.record(std::move(value),
                    [self, pull = std::forward<Pull>(pull)](Tape<T>& tp) { pull(tp, self); });
}

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(Tape<T>& t, Var<T> a, Var<T> b) {
    require(t.val(a).same_dims(t.val(b)), "add: dims mismatch " + dims_str(t.val(a).dims) +
                                              " vs " + dims_str(t.val(b).dims));
    Tensor<T> out = t.val(a);
    for (Index i = 0; i < out.size(); ++i) out[i] += t.val(b)[i];
    return record_op(t, std::move(out), [a, b](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

template <class T>
Var<T> sub(Tape<T>& t, Var<T> a, Var<T> b) {
    require(t.val(a).same_dims(t.val(b)), "sub: dims mismatch");
    Tensor<T> out = t.val(a);
    for (Index i = 0; i < out.size(); ++i) out[i] -= t.val(b)[i];
    return record_op(t, std::move(out), [a, b](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

template <class T>
Var<T> mul(Tape<T>& t, Var<T> a, Var<T> b) {
    require(t.val(a).same_dims(t.val(b)), "mul: dims mismatch");
    Tensor<T> out = t.val(a);
    for (Index i = 0; i < out.size(); ++i) out[i] *= t.val(b)[i];
    return record_op(t, std::move(out), [a, b](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& va = tp.val(a);
        const Tensor<T>& vb = tp.val(b);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

template <class T>
Var<T> scale(Tape<T>& t, Var<T> a, T s) {
    Tensor<T> out = t.val(a);
    for (auto& v : out.data) v *= s;
    return record_op(t, std::move(out), [a, s](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& ga = tp.grad(a);
        for (Index i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

template <class T>
Var<T> leaky_relu(Tape<T>& t, Var<T> x, T slope = T(0.2)) {
    Tensor<T> out = t.val(x);
    for (auto& v : out.data)
        if (v < T(0)) v *= slope;
    return record_op(t, std::move(out), [x, slope](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& vx = tp.val(x);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) gx[i] += g[i] * (vx[i] >= T(0) ? T(1) : slope);
    });
}

template <class T>
Var<T> sigmoid(Tape<T>& t, Var<T> x) {
    Tensor<T> out = t.val(x);
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    return record_op(t, std::move(out), [x](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
}

template <class T>
Var<T> tanh_op(Tape<T>& t, Var<T> x) {
    Tensor<T> out = t.val(x);
    for (auto& v : out.data) v = std::tanh(v);
    return record_op(t, std::move(out), [x](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    });
}

// Maps tanh output into [0,1]: (tanh(x)+1)/2.
template <class T>
Var<T> tanh01(Tape<T>& t, Var<T> x) {
    Tensor<T> out = t.val(x);
    for (auto& v : out.data) v = (std::tanh(v) + T(1)) / T(2);
    return record_op(t, std::move(out), [x](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& y = tp.val(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) {
            T th = T(2) * y[i] - T(1);
            gx[i] += g[i] * (T(1) - th * th) / T(2);
        }
    });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> sum_all(Tape<T>& t, Var<T> x) {
    T acc = T(0);
    for (T v : t.val(x).data) acc += v;
    return record_op(t, Tensor<T>::from({1}, {acc}), [x](Tape<T>& tp, Var<T> self) {
        T g = tp.grad(self)[0];
        Tensor<T>& gx = tp.grad(x);
        for (auto& v : gx.data) v += g;
    });
}

template <class T>
Var<T> mean_all(Tape<T>& t, Var<T> x) {
    T acc = T(0);
    for (T v : t.val(x).data) acc += v;
    T inv = T(1) / static_cast<T>(t.val(x).size());
    return record_op(t, Tensor<T>::from({1}, {acc * inv}), [x, inv](Tape<T>& tp, Var<T> self) {
        T g = tp.grad(self)[0] * inv;
        Tensor<T>& gx = tp.grad(x);
        for (auto& v : gx.data) v += g;
    });
}

// L1 distance. Sum-reduced by default; training losses pass Mean so the
// loss weights stay resolution-independent. Subgradient at 0 is 0.
template <class T>
Var<T> l1_loss(Tape<T>& t, Var<T> a, Var<T> b, Reduction red = Reduction::Sum) {
    require(t.val(a).same_dims(t.val(b)), "l1_loss: dims mismatch");
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    T acc = T(0);
    for (Index i = 0; i < va.size(); ++i) acc += std::abs(va[i] - vb[i]);
    T inv = red == Reduction::Mean ? T(1) / static_cast<T>(va.size()) : T(1);
    return record_op(t, Tensor<T>::from({1}, {acc * inv}), [a, b, inv](Tape<T>& tp, Var<T> self) {
        T g = tp.grad(self)[0] * inv;
        const Tensor<T>& va = tp.val(a);
        const Tensor<T>& vb = tp.val(b);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index i = 0; i < va.size(); ++i) {
            T d = va[i] - vb[i];
            T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            ga[i] += g * s;
            gb[i] -= g * s;
        }
    });
}

// ---------------------------------------------------------------- layout ops

template <class T>
Var<T> reshape(Tape<T>& t, Var<T> x, std::vector<Index> dims) {
    require(Tensor<T>::count(dims) == t.val(x).size(), "reshape: element count mismatch");
    Tensor<T> out = t.val(x);
    out.dims = std::move(dims);
    return record_op(t, std::move(out), [x](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

template <class T>
Var<T> concat_channels(Tape<T>& t, Var<T> a, Var<T> b) {
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    require(va.rank() == 3 && vb.rank() == 3, "concat_channels: want rank-3 [C,H,W]");
    require(va.dims[1] == vb.dims[1] && va.dims[2] == vb.dims[2],
            "concat_channels: spatial dims mismatch " + dims_str(va.dims) + " vs " +
                dims_str(vb.dims));
    Tensor<T> out({va.dims[0] + vb.dims[0], va.dims[1], va.dims[2]});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + static_cast<long>(va.size()));
    return record_op(t, std::move(out), [a, b](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index i = 0; i < ga.size(); ++i) ga[i] += g[i];
        for (Index i = 0; i < gb.size(); ++i) gb[i] += g[ga.size() + i];
    });
}

template <class T>
Var<T> slice_channels(Tape<T>& t, Var<T> x, Index c0, Index c1) {
    const Tensor<T>& vx = t.val(x);
    require(vx.rank() == 3 && c0 < c1 && c1 <= vx.dims[0], "slice_channels: bad range");
    Index plane = vx.dims[1] * vx.dims[2];
    Tensor<T> out({c1 - c0, vx.dims[1], vx.dims[2]});
    std::copy(vx.data.begin() + static_cast<long>(c0 * plane),
              vx.data.begin() + static_cast<long>(c1 * plane), out.data.begin());
    return record_op(t, std::move(out), [x, c0, plane](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index i = 0; i < g.size(); ++i) gx[c0 * plane + i] += g[i];
    });
}

template <class T>
Var<T> nearest_upsample2x(Tape<T>& t, Var<T> x) {
    const Tensor<T>& vx = t.val(x);
    require(vx.rank() == 3, "nearest_upsample2x: want rank-3 [C,H,W]");
    Index c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    Tensor<T> out({c, 2 * h, 2 * w});
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
            for (Index x2 = 0; x2 < w; ++x2) {
                T v = vx.at3(ci, y, x2);
                out.at3(ci, 2 * y, 2 * x2) = v;
                out.at3(ci, 2 * y, 2 * x2 + 1) = v;
                out.at3(ci, 2 * y + 1, 2 * x2) = v;
                out.at3(ci, 2 * y + 1, 2 * x2 + 1) = v;
            }
    return record_op(t, std::move(out), [x, c, h, w](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index ci = 0; ci < c; ++ci)
            for (Index y = 0; y < h; ++y)
                for (Index x2 = 0; x2 < w; ++x2)
                    gx.at3(ci, y, x2) += g.at3(ci, 2 * y, 2 * x2) + g.at3(ci, 2 * y, 2 * x2 + 1) +
                                         g.at3(ci, 2 * y + 1, 2 * x2) +
                                         g.at3(ci, 2 * y + 1, 2 * x2 + 1);
    });
}

// Top-left spatial crop; pairs with nearest_upsample2x to hit odd skip sizes.
template <class T>
Var<T> crop_spatial(Tape<T>& t, Var<T> x, Index ht, Index wt) {
    const Tensor<T>& vx = t.val(x);
    require(vx.rank() == 3 && ht <= vx.dims[1] && wt <= vx.dims[2], "crop_spatial: bad target");
    Index c = vx.dims[0];
    Tensor<T> out({c, ht, wt});
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < ht; ++y)
            for (Index x2 = 0; x2 < wt; ++x2) out.at3(ci, y, x2) = vx.at3(ci, y, x2);
    return record_op(t, std::move(out), [x, c, ht, wt](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        Tensor<T>& gx = tp.grad(x);
        for (Index ci = 0; ci < c; ++ci)
            for (Index y = 0; y < ht; ++y)
                for (Index x2 = 0; x2 < wt; ++x2) gx.at3(ci, y, x2) += g.at3(ci, y, x2);
    });
}

// ---------------------------------------------------------------- normalization

// Per-channel normalization to mean 0 / variance 1, no learned affine.
template <class T>
Var<T> instance_norm(Tape<T>& t, Var<T> x, T eps = T(1e-5)) {
    const Tensor<T>& vx = t.val(x);
    require(vx.rank() == 3, "instance_norm: want rank-3 [C,H,W]");
    Index c = vx.dims[0], n = vx.dims[1] * vx.dims[2];
    require(n >= 2, "instance_norm: channel has " + std::to_string(n) +
                        " pixel(s); variance undefined below 2");
    Tensor<T> out(vx.dims);
    std::vector<T> inv_sigma(c);
    for (Index ci = 0; ci < c; ++ci) {
        const T* src = vx.data.data() + ci * n;
        T mu = T(0);
        for (Index i = 0; i < n; ++i) mu += src[i];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (Index i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= static_cast<T>(n);
        T is = T(1) / std::sqrt(var + eps);
        inv_sigma[ci] = is;
        T* dst = out.data.data() + ci * n;
        for (Index i = 0; i < n; ++i) dst[i] = (src[i] - mu) * is;
    }
    return record_op(t, std::move(out),
                     [x, c, n, inv_sigma = std::move(inv_sigma)](Tape<T>& tp, Var<T> self) {
                         const Tensor<T>& g = tp.grad(self);
                         const Tensor<T>& y = tp.val(self);
                         Tensor<T>& gx = tp.grad(x);
                         for (Index ci = 0; ci < c; ++ci) {
                             const T* gc = g.data.data() + ci * n;
                             const T* yc = y.data.data() + ci * n;
                             T gmean = T(0), gymean = T(0);
                             for (Index i = 0; i < n; ++i) {
                                 gmean += gc[i];
                                 gymean += gc[i] * yc[i];
                             }
                             gmean /= static_cast<T>(n);
                             gymean /= static_cast<T>(n);
                             T* gxc = gx.data.data() + ci * n;
                             for (Index i = 0; i < n; ++i)
                                 gxc[i] += inv_sigma[ci] * (gc[i] - gmean - yc[i] * gymean);
                         }
                     });
}

// Per-pixel L2 normalization along channels (pre-correlation feature prep).
template <class T>
Var<T> l2_normalize_channels(Tape<T>& t, Var<T> x, T eps = T(1e-8)) {
    const Tensor<T>& vx = t.val(x);
    require(vx.rank() == 3, "l2_normalize_channels: want rank-3 [C,H,W]");
    Index c = vx.dims[0], plane = vx.dims[1] * vx.dims[2];
    Tensor<T> out(vx.dims);
    for (Index p = 0; p < plane; ++p) {
        T s = T(0);
        for (Index ci = 0; ci < c; ++ci) s += vx[ci * plane + p] * vx[ci * plane + p];
        T inv = T(1) / std::sqrt(s + eps);
        for (Index ci = 0; ci < c; ++ci) out[ci * plane + p] = vx[ci * plane + p] * inv;
    }
    return record_op(t, std::move(out), [x, c, plane, eps](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& vx = tp.val(x);
        Tensor<T>& gx = tp.grad(x);
        for (Index p = 0; p < plane; ++p) {
            T s = T(0), dot = T(0);
            for (Index ci = 0; ci < c; ++ci) {
                s += vx[ci * plane + p] * vx[ci * plane + p];
                dot += g[ci * plane + p] * vx[ci * plane + p];
            }
            T inv = T(1) / std::sqrt(s + eps);
            T inv3 = inv * inv * inv;
            for (Index ci = 0; ci < c; ++ci)
                gx[ci * plane + p] += g[ci * plane + p] * inv - vx[ci * plane + p] * dot * inv3;
        }
    });
}

// ---------------------------------------------------------------- conv / linear

namespace detail {

template <class T>
void im2col(const Tensor<T>& in, Index k, Index stride, Index pad, Index ho, Index wo,
            std::vector<T>& cols) {
    Index cin = in.dims[0], h = in.dims[1], w = in.dims[2];
    Index rows = cin * k * k, n = ho * wo;
    cols.assign(rows * n, T(0));
    for (Index ci = 0; ci < cin; ++ci)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                T* dst = cols.data() + ((ci * k + ky) * k + kx) * n;
                for (Index yo = 0; yo < ho; ++yo) {
                    long y = static_cast<long>(yo * stride + ky) - static_cast<long>(pad);
                    if (y < 0 || y >= static_cast<long>(h)) continue;
                    const T* src = in.data.data() + (ci * h + static_cast<Index>(y)) * w;
                    for (Index xo = 0; xo < wo; ++xo) {
                        long x = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
                        if (x < 0 || x >= static_cast<long>(w)) continue;
                        dst[yo * wo + xo] = src[static_cast<Index>(x)];
                    }
                }
            }
}

template <class T>
void col2im_add(const std::vector<T>& cols, Index cin, Index h, Index w, Index k, Index stride,
                Index pad, Index ho, Index wo, Tensor<T>& grad_in) {
    Index n = ho * wo;
    for (Index ci = 0; ci < cin; ++ci)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                const T* src = cols.data() + ((ci * k + ky) * k + kx) * n;
                for (Index yo = 0; yo < ho; ++yo) {
                    long y = static_cast<long>(yo * stride + ky) - static_cast<long>(pad);
                    if (y < 0 || y >= static_cast<long>(h)) continue;
                    T* dst = grad_in.data.data() + (ci * h + static_cast<Index>(y)) * w;
                    for (Index xo = 0; xo < wo; ++xo) {
                        long x = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
                        if (x < 0 || x >= static_cast<long>(w)) continue;
                        dst[static_cast<Index>(x)] += src[yo * wo + xo];
                    }
                }
            }
}

}  // namespace detail

// Cross-correlation conv: in [Cin,H,W], weight [Cout,Cin,k,k], bias [Cout].
// Lowered to GEMM via im2col.
template <class T>
Var<T> conv2d(Tape<T>& t, Var<T> in, Var<T> weight, Var<T> bias, Index stride, Index pad) {
    const Tensor<T>& vi = t.val(in);
    const Tensor<T>& vw = t.val(weight);
    const Tensor<T>& vb = t.val(bias);
    require(vi.rank() == 3, "conv2d: input must be [C,H,W], got " + dims_str(vi.dims));
    require(vw.rank() == 4, "conv2d: weight must be [Cout,Cin,k,k], got " + dims_str(vw.dims));
    require(vw.dims[2] == vw.dims[3] && vw.dims[2] % 2 == 1,
            "conv2d: kernel must be square and odd, got " + dims_str(vw.dims));
    require(vw.dims[1] == vi.dims[0], "conv2d: weight Cin=" + std::to_string(vw.dims[1]) +
                                          " does not match input C=" + std::to_string(vi.dims[0]));
    require(vb.rank() == 1 && vb.dims[0] == vw.dims[0],
            "conv2d: bias length must equal Cout=" + std::to_string(vw.dims[0]));
    require(stride >= 1, "conv2d: stride must be positive");
    Index cout = vw.dims[0], cin = vi.dims[0], k = vw.dims[2];
    Index h = vi.dims[1], w = vi.dims[2];
    long ho_l = (static_cast<long>(h) + 2 * static_cast<long>(pad) - static_cast<long>(k)) /
                    static_cast<long>(stride) +
                1;
    long wo_l = (static_cast<long>(w) + 2 * static_cast<long>(pad) - static_cast<long>(k)) /
                    static_cast<long>(stride) +
                1;
    require(ho_l >= 1 && wo_l >= 1, "conv2d: output height/width would be < 1 for input " +
                                        dims_str(vi.dims) + " kernel " + std::to_string(k));
    Index ho = static_cast<Index>(ho_l), wo = static_cast<Index>(wo_l);
    Index rows = cin * k * k, n = ho * wo;

    std::vector<T> cols;
    detail::im2col(vi, k, stride, pad, ho, wo, cols);
    Tensor<T> out({cout, ho, wo});
    gemm(false, false, static_cast<int>(cout), static_cast<int>(n), static_cast<int>(rows), T(1),
         vw.data.data(), static_cast<int>(rows), cols.data(), static_cast<int>(n), T(0),
         out.data.data(), static_cast<int>(n));
    for (Index co = 0; co < cout; ++co) {
        T b = vb[co];
        T* dst = out.data.data() + co * n;
        for (Index i = 0; i < n; ++i) dst[i] += b;
    }
    return record_op(
        t, std::move(out),
        [in, weight, bias, stride, pad, cout, cin, k, h, w, ho, wo](Tape<T>& tp, Var<T> self) {
            const Tensor<T>& g = tp.grad(self);
            const Tensor<T>& vi = tp.val(in);
            const Tensor<T>& vw = tp.val(weight);
            Index rows = cin * k * k, n = ho * wo;
            std::vector<T> cols;
            detail::im2col(vi, k, stride, pad, ho, wo, cols);
            // grad weight += g * cols^T
            Tensor<T>& gw = tp.grad(weight);
            gemm(false, true, static_cast<int>(cout), static_cast<int>(rows), static_cast<int>(n),
                 T(1), g.data.data(), static_cast<int>(n), cols.data(), static_cast<int>(n), T(1),
                 gw.data.data(), static_cast<int>(rows));
            // grad bias += row sums of g
            Tensor<T>& gb = tp.grad(bias);
            for (Index co = 0; co < cout; ++co) {
                T acc = T(0);
                const T* src = g.data.data() + co * n;
                for (Index i = 0; i < n; ++i) acc += src[i];
                gb[co] += acc;
            }
            // grad input += col2im(W^T * g)
            std::vector<T> gcols(rows * n);
            gemm(true, false, static_cast<int>(rows), static_cast<int>(n), static_cast<int>(cout),
                 T(1), vw.data.data(), static_cast<int>(rows), g.data.data(), static_cast<int>(n),
                 T(0), gcols.data(), static_cast<int>(n));
            Tensor<T>& gi = tp.grad(in);
            detail::col2im_add(gcols, cin, h, w, k, stride, pad, ho, wo, gi);
        });
}

// Fully connected: x flattened [n], weight [out,n], bias [out].
template <class T>
Var<T> linear(Tape<T>& t, Var<T> x, Var<T> weight, Var<T> bias) {
    const Tensor<T>& vx = t.val(x);
    const Tensor<T>& vw = t.val(weight);
    const Tensor<T>& vb = t.val(bias);
    require(vw.rank() == 2, "linear: weight must be [out,in]");
    Index n_in = vw.dims[1], n_out = vw.dims[0];
    require(vx.size() == n_in, "linear: input size " + std::to_string(vx.size()) +
                                   " does not match weight in=" + std::to_string(n_in));
    require(vb.rank() == 1 && vb.dims[0] == n_out, "linear: bias length mismatch");
    Tensor<T> out({n_out});
    for (Index o = 0; o < n_out; ++o) {
        T acc = vb[o];
        const T* row = vw.data.data() + o * n_in;
        for (Index i = 0; i < n_in; ++i) acc += row[i] * vx[i];
        out[o] = acc;
    }
    return record_op(t, std::move(out), [x, weight, bias, n_in, n_out](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& vx = tp.val(x);
        const Tensor<T>& vw = tp.val(weight);
        Tensor<T>& gx = tp.grad(x);
        Tensor<T>& gw = tp.grad(weight);
        Tensor<T>& gb = tp.grad(bias);
        for (Index o = 0; o < n_out; ++o) {
            T go = g[o];
            gb[o] += go;
            const T* row = vw.data.data() + o * n_in;
            T* gwrow = gw.data.data() + o * n_in;
            for (Index i = 0; i < n_in; ++i) {
                gx[i] += go * row[i];
                gwrow[i] += go * vx[i];
            }
        }
    });
}

// ---------------------------------------------------------------- correlation

// All-pairs inner products: out[j*w+i, y, x] = <fa[:,y,x], fb[:,j,i]>.
template <class T>
Var<T> correlation(Tape<T>& t, Var<T> fa, Var<T> fb) {
    const Tensor<T>& va = t.val(fa);
    const Tensor<T>& vb = t.val(fb);
    require(va.rank() == 3 && vb.rank() == 3 && va.same_dims(vb),
            "correlation: feature shapes must match, got " + dims_str(va.dims) + " vs " +
                dims_str(vb.dims));
    Index c = va.dims[0], h = va.dims[1], w = va.dims[2];
    Index plane = h * w;
    // out[hw_b, hw_a] = fb^T * fa with features viewed as [C, h*w]
    Tensor<T> out({plane, h, w});
    gemm(true, false, static_cast<int>(plane), static_cast<int>(plane), static_cast<int>(c), T(1),
         vb.data.data(), static_cast<int>(plane), va.data.data(), static_cast<int>(plane), T(0),
         out.data.data(), static_cast<int>(plane));
    return record_op(t, std::move(out), [fa, fb, c, plane](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);  // [plane_b, plane_a]
        const Tensor<T>& va = tp.val(fa);
        const Tensor<T>& vb = tp.val(fb);
        Tensor<T>& ga = tp.grad(fa);
        Tensor<T>& gb = tp.grad(fb);
        // ga += fb * g ; gb += fa * g^T
        gemm(false, false, static_cast<int>(c), static_cast<int>(plane), static_cast<int>(plane),
             T(1), vb.data.data(), static_cast<int>(plane), g.data.data(),
             static_cast<int>(plane), T(1), ga.data.data(), static_cast<int>(plane));
        gemm(false, true, static_cast<int>(c), static_cast<int>(plane), static_cast<int>(plane),
             T(1), va.data.data(), static_cast<int>(plane), g.data.data(),
             static_cast<int>(plane), T(1), gb.data.data(), static_cast<int>(plane));
    });
}

// ---------------------------------------------------------------- compositing

// out = mask ⊙ a + (1 - mask) ⊙ b, mask [1,H,W] broadcast over channels.
template <class T>
Var<T> composite(Tape<T>& t, Var<T> mask, Var<T> a, Var<T> b) {
    const Tensor<T>& vm = t.val(mask);
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    require(vm.rank() == 3 && vm.dims[0] == 1, "composite: mask must be [1,H,W]");
    require(va.same_dims(vb), "composite: branch dims mismatch");
    require(va.rank() == 3 && va.dims[1] == vm.dims[1] && va.dims[2] == vm.dims[2],
            "composite: mask spatial dims mismatch");
    Index c = va.dims[0], plane = va.dims[1] * va.dims[2];
    Tensor<T> out(va.dims);
    for (Index ci = 0; ci < c; ++ci)
        for (Index p = 0; p < plane; ++p) {
            T m = vm[p];
            out[ci * plane + p] = m * va[ci * plane + p] + (T(1) - m) * vb[ci * plane + p];
        }
    return record_op(t, std::move(out), [mask, a, b, c, plane](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& vm = tp.val(mask);
        const Tensor<T>& va = tp.val(a);
        const Tensor<T>& vb = tp.val(b);
        Tensor<T>& gm = tp.grad(mask);
        Tensor<T>& ga = tp.grad(a);
        Tensor<T>& gb = tp.grad(b);
        for (Index ci = 0; ci < c; ++ci)
            for (Index p = 0; p < plane; ++p) {
                T m = vm[p];
                Index i = ci * plane + p;
                ga[i] += g[i] * m;
                gb[i] += g[i] * (T(1) - m);
                gm[p] += g[i] * (va[i] - vb[i]);
            }
    });
}

}  // namespace warpkit
