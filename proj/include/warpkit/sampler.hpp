#pragma once

#include <cmath>

#include "warpkit/ops.hpp"

// Differentiable bilinear grid sampling. Normalized align-corners
// coordinates: -1 maps to the first pixel center, +1 to the last.
// Position math runs in double regardless of T.

namespace warpkit {

enum class PaddingMode { Zeros, Border };

namespace detail {

// Cell anchor with the left/lower tie-break: at an exact lattice
// coordinate the cell to the left/below supplies the derivative.
inline long cell_floor(double v) { return static_cast<long>(std::ceil(v)) - 1; }

template <class T>
inline double fetch(const Tensor<T>& img, Index c, long y, long x, PaddingMode mode) {
    long h = static_cast<long>(img.dims[1]), w = static_cast<long>(img.dims[2]);
    if (mode == PaddingMode::Zeros) {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    } else {
        y = std::clamp(y, 0L, h - 1);
        x = std::clamp(x, 0L, w - 1);
    }
    return static_cast<double>(img.at3(c, static_cast<Index>(y), static_cast<Index>(x)));
}

}  // namespace detail

// Non-recording forward pass; grid is [2,H',W'] with grid[0]=x, grid[1]=y.
template <class T>
Tensor<T> grid_sample_plain(const Tensor<T>& img, const Tensor<T>& grid,
                            PaddingMode mode = PaddingMode::Border) {
    require(img.rank() == 3, "grid_sample: image must be [C,H,W]");
    require(grid.rank() == 3 && grid.dims[0] == 2, "grid_sample: grid must be [2,H,W]");
    Index c = img.dims[0], h = img.dims[1], w = img.dims[2];
    Index ho = grid.dims[1], wo = grid.dims[2];
    Tensor<T> out({c, ho, wo});
    for (Index y = 0; y < ho; ++y)
        for (Index x = 0; x < wo; ++x) {
            double gx = static_cast<double>(grid.at3(0, y, x));
            double gy = static_cast<double>(grid.at3(1, y, x));
            require(std::isfinite(gx) && std::isfinite(gy), "grid_sample: non-finite grid coord");
            double px = (gx + 1.0) * 0.5 * static_cast<double>(w - 1);
            double py = (gy + 1.0) * 0.5 * static_cast<double>(h - 1);
            long x0 = detail::cell_floor(px), y0 = detail::cell_floor(py);
            double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
            for (Index ci = 0; ci < c; ++ci) {
                double v00 = detail::fetch(img, ci, y0, x0, mode);
                double v01 = detail::fetch(img, ci, y0, x0 + 1, mode);
                double v10 = detail::fetch(img, ci, y0 + 1, x0, mode);
                double v11 = detail::fetch(img, ci, y0 + 1, x0 + 1, mode);
                double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
                out.at3(ci, y, x) = static_cast<T>(v);
            }
        }
    return out;
}

// Tape op, differentiable w.r.t. both image and grid.
template <class T>
Var<T> grid_sample(Tape<T>& t, Var<T> img, Var<T> grid, PaddingMode mode = PaddingMode::Border) {
    Tensor<T> out = grid_sample_plain(t.val(img), t.val(grid), mode);
    return record_op(t, std::move(out), [img, grid, mode](Tape<T>& tp, Var<T> self) {
        const Tensor<T>& g = tp.grad(self);
        const Tensor<T>& vi = tp.val(img);
        const Tensor<T>& vg = tp.val(grid);
        Tensor<T>& gi = tp.grad(img);
        Tensor<T>& gg = tp.grad(grid);
        Index c = vi.dims[0];
        long h = static_cast<long>(vi.dims[1]), w = static_cast<long>(vi.dims[2]);
        Index ho = vg.dims[1], wo = vg.dims[2];
        auto scatter = [&](Index ci, long y, long x, double v) {
            if (mode == PaddingMode::Zeros) {
                if (y < 0 || y >= h || x < 0 || x >= w) return;
            } else {
                y = std::clamp(y, 0L, h - 1);
                x = std::clamp(x, 0L, w - 1);
            }
            gi.at3(ci, static_cast<Index>(y), static_cast<Index>(x)) += static_cast<T>(v);
        };
        for (Index y = 0; y < ho; ++y)
            for (Index x = 0; x < wo; ++x) {
                double gx = static_cast<double>(vg.at3(0, y, x));
                double gy = static_cast<double>(vg.at3(1, y, x));
                double px = (gx + 1.0) * 0.5 * static_cast<double>(w - 1);
                double py = (gy + 1.0) * 0.5 * static_cast<double>(h - 1);
                long x0 = detail::cell_floor(px), y0 = detail::cell_floor(py);
                double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
                double dpx = 0.0, dpy = 0.0;
                for (Index ci = 0; ci < c; ++ci) {
                    double go = static_cast<double>(g.at3(ci, y, x));
                    if (go == 0.0) continue;
                    double v00 = detail::fetch(vi, ci, y0, x0, mode);
                    double v01 = detail::fetch(vi, ci, y0, x0 + 1, mode);
                    double v10 = detail::fetch(vi, ci, y0 + 1, x0, mode);
                    double v11 = detail::fetch(vi, ci, y0 + 1, x0 + 1, mode);
                    scatter(ci, y0, x0, go * (1 - fy) * (1 - fx));
                    scatter(ci, y0, x0 + 1, go * (1 - fy) * fx);
                    scatter(ci, y0 + 1, x0, go * fy * (1 - fx));
                    scatter(ci, y0 + 1, x0 + 1, go * fy * fx);
                    dpx += go * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                    dpy += go * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                gg.at3(0, y, x) += static_cast<T>(dpx * 0.5 * static_cast<double>(w - 1));
                gg.at3(1, y, x) += static_cast<T>(dpy * 0.5 * static_cast<double>(h - 1));
            }
    });
}

}  // namespace warpkit
