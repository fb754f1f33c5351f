#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "warpkit/ops.hpp"

// Thin-plate spline warps: radial kernel, exact solve from
// correspondences, the 5x5 anchor-grid parameterization, and dense
// sampling-grid generation (plain and tape-differentiable).
//
// Convention: a warp maps OUTPUT-space coordinates to INPUT-space
// coordinates (inverse mapping), so warping is a gather through the
// sampler. The anchor offsets displace anchors in output space; each
// displaced anchor maps back to its rest position.

namespace warpkit {

using Point = std::array<double, 2>;

// U(r) = r^2 log(r^2), with U(0) = 0 by the limit convention.
inline double kernel_u(double r) {
    require(r >= 0.0, "kernel_u: radius must be non-negative");
    if (r == 0.0) return 0.0;
    double s = r * r;
    return s * std::log(s);
}

// Same kernel on the squared radius (avoids a sqrt in hot loops).
inline double kernel_u_sq(double s) { return s > 0.0 ? s * std::log(s) : 0.0; }
// d/ds of s*log(s); the s -> 0 limit is taken as 0 (documented tie-break).
inline double kernel_u_sq_deriv(double s) { return s > 0.0 ? std::log(s) + 1.0 : 0.0; }

namespace detail {

// LU with partial pivoting, in place. Errors out instead of returning
// garbage when the pivot ratio suggests cond > ~1e12.
struct Lu {
    int n = 0;
    std::vector<double> a;  // row-major n x n factors
    std::vector<int> piv;

    void factor(std::vector<double> m, int size, const std::string& what) {
        n = size;
        a = std::move(m);
        piv.resize(static_cast<size_t>(n));
        double pmax = 0.0, pmin = 0.0;
        for (int col = 0; col < n; ++col) {
            int best = col;
            double bestv = std::abs(a[static_cast<size_t>(col) * n + col]);
            for (int r = col + 1; r < n; ++r) {
                double v = std::abs(a[static_cast<size_t>(r) * n + col]);
                if (v > bestv) {
                    bestv = v;
                    best = r;
                }
            }
            require(bestv > 0.0, what + ": singular system (zero pivot at column " +
                                     std::to_string(col) + "); sources collinear or duplicated?");
            piv[static_cast<size_t>(col)] = best;
            if (best != col)
                for (int c2 = 0; c2 < n; ++c2)
                    std::swap(a[static_cast<size_t>(col) * n + c2],
                              a[static_cast<size_t>(best) * n + c2]);
            double pivot = a[static_cast<size_t>(col) * n + col];
            pmax = col == 0 ? std::abs(pivot) : std::max(pmax, std::abs(pivot));
            pmin = col == 0 ? std::abs(pivot) : std::min(pmin, std::abs(pivot));
            for (int r = col + 1; r < n; ++r) {
                double f = a[static_cast<size_t>(r) * n + col] / pivot;
                a[static_cast<size_t>(r) * n + col] = f;
                if (f == 0.0) continue;
                for (int c2 = col + 1; c2 < n; ++c2)
                    a[static_cast<size_t>(r) * n + c2] -= f * a[static_cast<size_t>(col) * n + c2];
            }
        }
        require(pmin > 0.0 && pmax / pmin < 1e12,
                what + ": system ill-conditioned (pivot ratio above 1e12)");
    }

    // Solves in place for one right-hand side.
    void solve(std::vector<double>& b) const {
        for (int col = 0; col < n; ++col)
            std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv[static_cast<size_t>(col)])]);
        for (int col = 0; col < n; ++col)
            for (int r = col + 1; r < n; ++r)
                b[static_cast<size_t>(r)] -= a[static_cast<size_t>(r) * n + col] * b[static_cast<size_t>(col)];
        for (int r = n - 1; r >= 0; --r) {
            double acc = b[static_cast<size_t>(r)];
            for (int c2 = r + 1; c2 < n; ++c2)
                acc -= a[static_cast<size_t>(r) * n + c2] * b[static_cast<size_t>(c2)];
            b[static_cast<size_t>(r)] = acc / a[static_cast<size_t>(r) * n + r];
        }
    }
};

}  // namespace detail

// Solved TPS model: T(x) = A [x;1] + sum_i w_i U(||x - p_i||).
// Side conditions sum w = 0 and sum w_i p_i^T = 0 hold by construction.
struct TpsCoefficients {
    // affine[d] = {a0, ax, ay} so that dim d of T(x) = a0 + ax*x + ay*y + ...
    std::array<std::array<double, 3>, 2> affine{};
    std::vector<Point> weights;  // w_i, one 2-vector per source
    std::vector<Point> sources;  // p_i
};

// Exact (reg = 0) or smoothing (reg > 0) solve mapping sources -> targets.
inline TpsCoefficients solve_tps(const std::vector<Point>& sources,
                                 const std::vector<Point>& targets, double reg = 0.0) {
    size_t n = sources.size();
    require(n == targets.size(), "solve_tps: source/target lists differ in length");
    require(n >= 3, "solve_tps: need at least 3 correspondences");
    require(reg >= 0.0, "solve_tps: regularization must be non-negative");
    int m = static_cast<int>(n) + 3;
    std::vector<double> sys(static_cast<size_t>(m) * m, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double dx = sources[i][0] - sources[j][0];
            double dy = sources[i][1] - sources[j][1];
            double v = kernel_u_sq(dx * dx + dy * dy);
            sys[i * static_cast<size_t>(m) + j] = v + (i == j ? reg : 0.0);
        }
        sys[i * static_cast<size_t>(m) + n] = 1.0;
        sys[i * static_cast<size_t>(m) + n + 1] = sources[i][0];
        sys[i * static_cast<size_t>(m) + n + 2] = sources[i][1];
        sys[(n)*static_cast<size_t>(m) + i] = 1.0;
        sys[(n + 1) * static_cast<size_t>(m) + i] = sources[i][0];
        sys[(n + 2) * static_cast<size_t>(m) + i] = sources[i][1];
    }
    detail::Lu lu;
    lu.factor(std::move(sys), m, "solve_tps");
    TpsCoefficients out;
    out.sources = sources;
    out.weights.assign(n, Point{0, 0});
    for (int d = 0; d < 2; ++d) {
        std::vector<double> rhs(static_cast<size_t>(m), 0.0);
        for (size_t i = 0; i < n; ++i) rhs[i] = targets[i][static_cast<size_t>(d)];
        lu.solve(rhs);
        for (size_t i = 0; i < n; ++i) out.weights[i][static_cast<size_t>(d)] = rhs[i];
        out.affine[static_cast<size_t>(d)] = {rhs[n], rhs[n + 1], rhs[n + 2]};
    }
    return out;
}

inline Point eval_tps(const TpsCoefficients& c, Point p) {
    require(std::isfinite(p[0]) && std::isfinite(p[1]), "eval_tps: non-finite input point");
    Point out{};
    for (int d = 0; d < 2; ++d) {
        const auto& a = c.affine[static_cast<size_t>(d)];
        double acc = a[0] + a[1] * p[0] + a[2] * p[1];
        for (size_t i = 0; i < c.sources.size(); ++i) {
            double dx = p[0] - c.sources[i][0];
            double dy = p[1] - c.sources[i][1];
            acc += c.weights[i][static_cast<size_t>(d)] * kernel_u_sq(dx * dx + dy * dy);
        }
        out[static_cast<size_t>(d)] = acc;
    }
    return out;
}

// ------------------------------------------------------------- anchor grid

constexpr Index kAnchorsPerSide = 5;
constexpr Index kAnchorCount = kAnchorsPerSide * kAnchorsPerSide;
// Rest lattice endpoints sit at ±0.9 (inset from the frame border).
constexpr double kAnchorInset = 0.9;
// Default diagonal regularization; survives near-degenerate offsets.
constexpr double kTpsSolveReg = 1e-6;

inline std::vector<Point> anchor_rest_lattice() {
    std::vector<Point> pts;
    pts.reserve(kAnchorCount);
    for (Index row = 0; row < kAnchorsPerSide; ++row)
        for (Index col = 0; col < kAnchorsPerSide; ++col)
            pts.push_back(Point{-kAnchorInset + 2.0 * kAnchorInset * col / (kAnchorsPerSide - 1),
                                -kAnchorInset + 2.0 * kAnchorInset * row / (kAnchorsPerSide - 1)});
    return pts;
}

// x/y offsets of the 5x5 anchor lattice in normalized coordinates;
// offsets[0] is x, offsets[1] is y, anchors row-major over the lattice.
template <class T>
struct TpsParams {
    Tensor<T> offsets;

    explicit TpsParams(Tensor<T> o) : offsets(std::move(o)) {
        require(offsets.dims == std::vector<Index>{2, kAnchorsPerSide, kAnchorsPerSide},
                "TpsParams: offsets must be [2,5,5], got " + dims_str(offsets.dims));
        for (T v : offsets.data) {
            require(std::isfinite(static_cast<double>(v)), "TpsParams: non-finite offset");
            require(std::abs(static_cast<double>(v)) <= 2.0,
                    "TpsParams: |offset| must be <= 2, got " +
                        std::to_string(static_cast<double>(v)));
        }
    }

    static TpsParams zero() { return TpsParams(Tensor<T>({2, kAnchorsPerSide, kAnchorsPerSide})); }
};

namespace detail {

template <class T>
std::vector<Point> displaced_anchors(const Tensor<T>& offsets) {
    auto pts = anchor_rest_lattice();
    for (Index j = 0; j < kAnchorCount; ++j) {
        pts[j][0] += static_cast<double>(offsets[j]);
        pts[j][1] += static_cast<double>(offsets[kAnchorCount + j]);
    }
    return pts;
}

}  // namespace detail

// Dense inverse-mapping grid: displaced anchors (output space) are the
// TPS sources, rest positions (input space) the targets; the grid
// evaluates the fitted map at every output pixel.
template <class T>
Tensor<T> grid_from_params(const Tensor<T>& offsets, Index h, Index w,
                           double reg = kTpsSolveReg) {
    require(offsets.dims == std::vector<Index>{2, kAnchorsPerSide, kAnchorsPerSide},
            "grid_from_params: offsets must be [2,5,5]");
    require(h >= 2 && w >= 2, "grid_from_params: H and W must be >= 2");
    auto coeffs = solve_tps(detail::displaced_anchors(offsets), anchor_rest_lattice(), reg);
    Tensor<T> grid({2, h, w});
    for (Index y = 0; y < h; ++y) {
        double gy = -1.0 + 2.0 * y / (h - 1);
        for (Index x = 0; x < w; ++x) {
            double gx = -1.0 + 2.0 * x / (w - 1);
            Point src = eval_tps(coeffs, Point{gx, gy});
            grid.at3(0, y, x) = static_cast<T>(src[0]);
            grid.at3(1, y, x) = static_cast<T>(src[1]);
        }
    }
    return grid;
}

template <class T>
Tensor<T> grid_from_params(const TpsParams<T>& theta, Index h, Index w,
                           double reg = kTpsSolveReg) {
    return grid_from_params(theta.offsets, h, w, reg);
}

// ------------------------------------------------- differentiable tape op

// Tape version of grid_from_params, differentiable w.r.t. theta [2,5,5].
// The solve runs in double internally. Backward handles both paths by
// which theta reaches the grid: directly through the kernel terms
// U(||g - p_j||), and through the solved coefficients W = L^{-1} Y via
// dW = -L^{-1} dL W (Y is the constant rest lattice).
template <class T>
Var<T> tps_grid(Tape<T>& t, Var<T> theta, Index h, Index w, double reg = kTpsSolveReg) {
    const Tensor<T>& voff = t.val(theta);
    require(voff.size() == 2 * kAnchorCount, "tps_grid: theta must have 50 elements, got " +
                                                 std::to_string(voff.size()));
    require(h >= 2 && w >= 2, "tps_grid: H and W must be >= 2");
    const int n = static_cast<int>(kAnchorCount);
    const int m = n + 3;

    auto anchors = detail::displaced_anchors(voff);
    auto rest = anchor_rest_lattice();

    std::vector<double> sys(static_cast<size_t>(m) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double dx = anchors[i][0] - anchors[j][0];
            double dy = anchors[i][1] - anchors[j][1];
            sys[static_cast<size_t>(i) * m + j] =
                kernel_u_sq(dx * dx + dy * dy) + (i == j ? reg : 0.0);
        }
        sys[static_cast<size_t>(i) * m + n] = 1.0;
        sys[static_cast<size_t>(i) * m + n + 1] = anchors[i][0];
        sys[static_cast<size_t>(i) * m + n + 2] = anchors[i][1];
        sys[static_cast<size_t>(n) * m + i] = 1.0;
        sys[static_cast<size_t>(n + 1) * m + i] = anchors[i][0];
        sys[static_cast<size_t>(n + 2) * m + i] = anchors[i][1];
    }
    auto lu = std::make_shared<detail::Lu>();
    lu->factor(std::move(sys), m, "tps_grid");

    // coeff[d] = L^{-1} * rest[:,d]
    auto coeff = std::make_shared<std::array<std::vector<double>, 2>>();
    for (int d = 0; d < 2; ++d) {
        std::vector<double> rhs(static_cast<size_t>(m), 0.0);
        for (int i = 0; i < n; ++i) rhs[static_cast<size_t>(i)] = rest[static_cast<size_t>(i)][static_cast<size_t>(d)];
        lu->solve(rhs);
        (*coeff)[static_cast<size_t>(d)] = std::move(rhs);
    }

    Tensor<T> grid({2, h, w});
    for (Index y = 0; y < h; ++y) {
        double gy = -1.0 + 2.0 * y / (h - 1);
        for (Index x = 0; x < w; ++x) {
            double gx = -1.0 + 2.0 * x / (w - 1);
            for (int d = 0; d < 2; ++d) {
                const auto& cd = (*coeff)[static_cast<size_t>(d)];
                double acc = cd[static_cast<size_t>(n)] + cd[static_cast<size_t>(n + 1)] * gx +
                             cd[static_cast<size_t>(n + 2)] * gy;
                for (int j = 0; j < n; ++j) {
                    double dx = gx - anchors[static_cast<size_t>(j)][0];
                    double dy = gy - anchors[static_cast<size_t>(j)][1];
                    acc += cd[static_cast<size_t>(j)] * kernel_u_sq(dx * dx + dy * dy);
                }
                grid.at3(static_cast<Index>(d), y, x) = static_cast<T>(acc);
            }
        }
    }

    auto anchors_sp = std::make_shared<std::vector<Point>>(std::move(anchors));
    return record_op(t, std::move(grid),
                     [theta, h, w, lu, coeff, anchors_sp](Tape<T>& tp, Var<T> self) {
        const int n = static_cast<int>(kAnchorCount);
        const int m = n + 3;
        const Tensor<T>& g = tp.grad(self);
        const auto& anchors = *anchors_sp;
        Tensor<T>& gtheta = tp.grad(theta);

        std::array<std::vector<double>, 2> rhs_acc;  // sum_g G_d(g) * Phi(g)
        rhs_acc[0].assign(static_cast<size_t>(m), 0.0);
        rhs_acc[1].assign(static_cast<size_t>(m), 0.0);
        std::vector<double> dtheta(static_cast<size_t>(2 * n), 0.0);

        std::vector<double> phi(static_cast<size_t>(m));
        std::vector<double> fprime(static_cast<size_t>(n));
        std::vector<double> ddx(static_cast<size_t>(n)), ddy(static_cast<size_t>(n));
        for (Index y = 0; y < h; ++y) {
            double gy = -1.0 + 2.0 * y / (h - 1);
            for (Index x = 0; x < w; ++x) {
                double gx = -1.0 + 2.0 * x / (w - 1);
                double g0 = static_cast<double>(g.at3(0, y, x));
                double g1 = static_cast<double>(g.at3(1, y, x));
                if (g0 == 0.0 && g1 == 0.0) continue;
                for (int j = 0; j < n; ++j) {
                    double dx = gx - anchors[static_cast<size_t>(j)][0];
                    double dy = gy - anchors[static_cast<size_t>(j)][1];
                    double s = dx * dx + dy * dy;
                    phi[static_cast<size_t>(j)] = kernel_u_sq(s);
                    fprime[static_cast<size_t>(j)] = kernel_u_sq_deriv(s);
                    ddx[static_cast<size_t>(j)] = dx;
                    ddy[static_cast<size_t>(j)] = dy;
                }
                phi[static_cast<size_t>(n)] = 1.0;
                phi[static_cast<size_t>(n + 1)] = gx;
                phi[static_cast<size_t>(n + 2)] = gy;
                for (int i = 0; i < m; ++i) {
                    rhs_acc[0][static_cast<size_t>(i)] += g0 * phi[static_cast<size_t>(i)];
                    rhs_acc[1][static_cast<size_t>(i)] += g1 * phi[static_cast<size_t>(i)];
                }
                // direct kernel path: d U(||g-p_j||^2) / d p_j = -2 f'(s) (g - p_j)
                for (int j = 0; j < n; ++j) {
                    double common =
                        (g0 * (*coeff)[0][static_cast<size_t>(j)] +
                         g1 * (*coeff)[1][static_cast<size_t>(j)]) *
                        fprime[static_cast<size_t>(j)] * 2.0;
                    dtheta[static_cast<size_t>(j)] += common * (-ddx[static_cast<size_t>(j)]);
                    dtheta[static_cast<size_t>(n + j)] += common * (-ddy[static_cast<size_t>(j)]);
                }
            }
        }

        // adjoint of the solve: v_d = L^{-T} rhs_acc_d; L is symmetric.
        std::array<std::vector<double>, 2> v = rhs_acc;
        lu->solve(v[0]);
        lu->solve(v[1]);

        // dL/dp_j is sparse: row/column j of the kernel block plus the
        // linear-polynomial entries holding p_j itself.
        for (int j = 0; j < n; ++j) {
            for (int dcoord = 0; dcoord < 2; ++dcoord) {
                double acc = 0.0;
                for (int d = 0; d < 2; ++d) {
                    const auto& vd = v[static_cast<size_t>(d)];
                    const auto& wd = (*coeff)[static_cast<size_t>(d)];
                    for (int i = 0; i < n; ++i) {
                        if (i == j) continue;
                        double diff = anchors[static_cast<size_t>(j)][static_cast<size_t>(dcoord)] -
                                      anchors[static_cast<size_t>(i)][static_cast<size_t>(dcoord)];
                        double dx = anchors[static_cast<size_t>(i)][0] - anchors[static_cast<size_t>(j)][0];
                        double dy = anchors[static_cast<size_t>(i)][1] - anchors[static_cast<size_t>(j)][1];
                        double fp = kernel_u_sq_deriv(dx * dx + dy * dy);
                        double dl = fp * 2.0 * diff;  // d K_ij / d p_{j,dcoord}
                        acc += (vd[static_cast<size_t>(i)] * wd[static_cast<size_t>(j)] +
                                vd[static_cast<size_t>(j)] * wd[static_cast<size_t>(i)]) *
                               dl;
                    }
                    int pc = n + 1 + dcoord;  // column holding this coordinate
                    acc += vd[static_cast<size_t>(pc)] * wd[static_cast<size_t>(j)] +
                           vd[static_cast<size_t>(j)] * wd[static_cast<size_t>(pc)];
                }
                dtheta[static_cast<size_t>(dcoord * n + j)] -= acc;
            }
        }

        for (int i = 0; i < 2 * n; ++i)
            gtheta[static_cast<Index>(i)] += static_cast<T>(dtheta[static_cast<size_t>(i)]);
    });
}

}  // namespace warpkit
