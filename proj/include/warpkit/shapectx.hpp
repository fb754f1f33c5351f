#pragma once

#include <cmath>
#include <queue>

#include "warpkit/hungarian.hpp"
#include "warpkit/sampler.hpp"
#include "warpkit/tps.hpp"

// Shape-context matching baseline (SCMM): boundary descriptors on the
// garment mask outline, chi-squared matching with optimal assignment,
// and a TPS fit from the matched pairs with one refit pass after
// warping.

namespace warpkit {

constexpr Index kScRadialBins = 5;
constexpr Index kScAngularBins = 12;
constexpr Index kScDefaultPoints = 96;
constexpr double kScChi2Eps = 1e-9;

// 5 log-radial x 12 angular bins of relative boundary-point positions,
// normalized to sum 1 (all-zero only for isolated points).
struct ShapeContextDescriptor {
    std::array<double, kScRadialBins * kScAngularBins> histogram{};
};

namespace detail {

// Largest 8-connected foreground component of mask >= 0.5.
inline std::vector<char> largest_component(const Tensor<float>& mask, Index h, Index w) {
    std::vector<int> label(h * w, -1);
    int next = 0;
    std::vector<Index> best_area;
    Index best = 0;
    std::vector<Index> stack;
    std::vector<std::vector<Index>> members;
    for (Index start = 0; start < h * w; ++start) {
        if (mask[start] < 0.5f || label[start] >= 0) continue;
        stack.assign(1, start);
        label[start] = next;
        std::vector<Index> comp;
        while (!stack.empty()) {
            Index p = stack.back();
            stack.pop_back();
            comp.push_back(p);
            long py = static_cast<long>(p / w), px = static_cast<long>(p % w);
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    long ny = py + dy, nx = px + dx;
                    if (ny < 0 || ny >= static_cast<long>(h) || nx < 0 || nx >= static_cast<long>(w))
                        continue;
                    Index q = static_cast<Index>(ny) * w + static_cast<Index>(nx);
                    if (mask[q] >= 0.5f && label[q] < 0) {
                        label[q] = next;
                        stack.push_back(q);
                    }
                }
        }
        if (comp.size() > best) {
            best = comp.size();
            members = {comp};
        }
        ++next;
    }
    require(best > 0, "extract_boundary: empty mask");
    std::vector<char> keep(h * w, 0);
    for (Index p : members[0]) keep[p] = 1;
    return keep;
}

// Moore-neighbor contour trace (clockwise in image coordinates).
inline std::vector<Point> trace_contour(const std::vector<char>& fg, Index h, Index w) {
    // start: topmost, then leftmost foreground pixel
    long sy = -1, sx = -1;
    for (Index p = 0; p < h * w; ++p)
        if (fg[p]) {
            sy = static_cast<long>(p / w);
            sx = static_cast<long>(p % w);
            break;
        }
    auto inside = [&](long y, long x) {
        return y >= 0 && y < static_cast<long>(h) && x >= 0 && x < static_cast<long>(w) &&
               fg[static_cast<Index>(y) * w + static_cast<Index>(x)];
    };
    // neighbor order: clockwise starting east
    static const int dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static const int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    std::vector<Point> contour;
    long cy = sy, cx = sx;
    int dir = 6;  // came from north (pixel above is background by start choice)
    do {
        contour.push_back(Point{static_cast<double>(cx), static_cast<double>(cy)});
        int found = -1;
        for (int k = 0; k < 8; ++k) {
            int d = (dir + 6 + k) % 8;  // backtrack then sweep clockwise
            if (inside(cy + dy[d], cx + dx[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        cy += dy[found];
        cx += dx[found];
        dir = found;
    } while (!(cy == sy && cx == sx) && contour.size() < 4 * h * w);
    return contour;
}

}  // namespace detail

// n points uniformly subsampled by arc length along the traced outer
// contour of the largest foreground component; ordered along the trace.
inline std::vector<Point> extract_boundary(const Tensor<float>& mask, Index n) {
    require(mask.rank() == 2, "extract_boundary: mask must be [H,W]");
    require(n >= 4, "extract_boundary: need n >= 4");
    Index h = mask.dims[0], w = mask.dims[1];
    auto fg = detail::largest_component(mask, h, w);
    auto contour = detail::trace_contour(fg, h, w);
    require(contour.size() >= 3, "extract_boundary: contour degenerate (component too small)");

    // closed-polyline arc lengths
    std::vector<double> cum(contour.size() + 1, 0.0);
    for (size_t i = 0; i < contour.size(); ++i) {
        const Point& a = contour[i];
        const Point& b = contour[(i + 1) % contour.size()];
        cum[i + 1] = cum[i] + std::hypot(b[0] - a[0], b[1] - a[1]);
    }
    double total = cum.back();
    require(total > 0.0, "extract_boundary: contour has zero length");

    std::vector<Point> pts;
    pts.reserve(n);
    size_t seg = 0;
    for (Index i = 0; i < n; ++i) {
        double s = total * static_cast<double>(i) / static_cast<double>(n);
        while (seg + 1 < cum.size() - 1 && cum[seg + 1] <= s) ++seg;
        double span = cum[seg + 1] - cum[seg];
        double f = span > 0.0 ? (s - cum[seg]) / span : 0.0;
        const Point& a = contour[seg];
        const Point& b = contour[(seg + 1) % contour.size()];
        pts.push_back(Point{a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])});
    }
    return pts;
}

// Log-radial bins span [0.125 dbar, 2 dbar] with dbar the mean pairwise
// distance; angles are measured in the absolute frame.
inline ShapeContextDescriptor descriptor(const std::vector<Point>& points, Index index) {
    require(points.size() >= 2, "descriptor: need at least 2 points");
    require(index < points.size(), "descriptor: index out of range");
    double dbar = 0.0;
    Index pairs = 0;
    for (size_t i = 0; i < points.size(); ++i)
        for (size_t j = i + 1; j < points.size(); ++j) {
            dbar += std::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
            ++pairs;
        }
    ShapeContextDescriptor d;
    if (pairs == 0) return d;
    dbar /= static_cast<double>(pairs);
    if (dbar <= 0.0) return d;  // all points coincide

    const double r_min = 0.125 * dbar;
    const double log_span = std::log(16.0);  // r_max / r_min
    double count = 0.0;
    for (size_t j = 0; j < points.size(); ++j) {
        if (j == index) continue;
        double dx = points[j][0] - points[index][0];
        double dy = points[j][1] - points[index][1];
        double r = std::hypot(dx, dy);
        long rb = r <= 0.0 ? 0
                           : std::lround(std::floor(static_cast<double>(kScRadialBins) *
                                                    std::log(r / r_min) / log_span));
        rb = std::clamp(rb, 0L, static_cast<long>(kScRadialBins) - 1);  // clamp outliers inward
        double ang = std::atan2(dy, dx);  // (-pi, pi]
        long ab = std::lround(std::floor((ang + M_PI) / (2.0 * M_PI) * kScAngularBins));
        ab = std::clamp(ab, 0L, static_cast<long>(kScAngularBins) - 1);
        d.histogram[static_cast<size_t>(rb) * kScAngularBins + static_cast<size_t>(ab)] += 1.0;
        count += 1.0;
    }
    if (count > 0.0)
        for (auto& v : d.histogram) v /= count;
    return d;
}

inline double chi2_distance(const ShapeContextDescriptor& a, const ShapeContextDescriptor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.histogram.size(); ++i) {
        double diff = a.histogram[i] - b.histogram[i];
        acc += diff * diff / (a.histogram[i] + b.histogram[i] + kScChi2Eps);
    }
    return 0.5 * acc;
}

namespace detail {

inline std::vector<ShapeContextDescriptor> all_descriptors(const std::vector<Point>& pts) {
    std::vector<ShapeContextDescriptor> out(pts.size());
    for (Index i = 0; i < pts.size(); ++i) out[i] = descriptor(pts, i);
    return out;
}

inline std::vector<double> chi2_cost_matrix(const std::vector<ShapeContextDescriptor>& a,
                                            const std::vector<ShapeContextDescriptor>& b) {
    std::vector<double> cost(a.size() * b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) cost[i * b.size() + j] = chi2_distance(a[i], b[j]);
    return cost;
}

inline Point to_norm(const Point& px, Index h, Index w) {
    return Point{-1.0 + 2.0 * px[0] / (static_cast<double>(w) - 1),
                 -1.0 + 2.0 * px[1] / (static_cast<double>(h) - 1)};
}

}  // namespace detail

// Matches boundary descriptors of two masks and fits the TPS mapping the
// source shape onto the destination (normalized coordinates). Two
// passes: fit, warp the source mask, re-extract, re-match, refit.
inline TpsCoefficients match_and_fit(const Tensor<float>& mask_src, const Tensor<float>& mask_dst,
                                     Index n = kScDefaultPoints, double reg = 1e-4) {
    require(mask_src.rank() == 2 && mask_dst.rank() == 2, "match_and_fit: masks must be [H,W]");
    Index hs = mask_src.dims[0], ws = mask_src.dims[1];
    Index hd = mask_dst.dims[0], wd = mask_dst.dims[1];

    auto src_px = extract_boundary(mask_src, n);
    auto dst_px = extract_boundary(mask_dst, n);
    std::vector<Point> src(n), dst(n);
    for (Index i = 0; i < n; ++i) {
        src[i] = detail::to_norm(src_px[i], hs, ws);
        dst[i] = detail::to_norm(dst_px[i], hd, wd);
    }

    auto assign = hungarian_assign(
        detail::chi2_cost_matrix(detail::all_descriptors(src), detail::all_descriptors(dst)),
        static_cast<int>(n));
    std::vector<Point> dst_matched(n);
    for (Index i = 0; i < n; ++i) dst_matched[i] = dst[static_cast<size_t>(assign[i])];

    // Inverse fit (dst -> src) renders the warped source mask by gather.
    TpsCoefficients inv = solve_tps(dst_matched, src, reg);
    Tensor<float> src3 = Tensor<float>::from({1, hs, ws}, mask_src.data);
    Tensor<float> grid({2, hd, wd});
    for (Index y = 0; y < hd; ++y)
        for (Index x = 0; x < wd; ++x) {
            Point g = detail::to_norm(Point{static_cast<double>(x), static_cast<double>(y)}, hd, wd);
            Point s = eval_tps(inv, g);
            grid.at3(0, y, x) = static_cast<float>(s[0]);
            grid.at3(1, y, x) = static_cast<float>(s[1]);
        }
    Tensor<float> warped3 = grid_sample_plain(src3, grid, PaddingMode::Zeros);
    Tensor<float> warped = Tensor<float>::from({hd, wd}, warped3.data);
    for (auto& v : warped.data) v = v >= 0.5f ? 1.0f : 0.0f;

    // Pass 2: rematch from the warped outline; pre-images via the
    // inverse fit recover the final src -> dst correspondences.
    auto warped_px = extract_boundary(warped, n);
    std::vector<Point> wpts(n);
    for (Index i = 0; i < n; ++i) wpts[i] = detail::to_norm(warped_px[i], hd, wd);
    auto assign2 = hungarian_assign(
        detail::chi2_cost_matrix(detail::all_descriptors(wpts), detail::all_descriptors(dst)),
        static_cast<int>(n));
    std::vector<Point> src_final(n), dst_final(n);
    for (Index i = 0; i < n; ++i) {
        src_final[i] = eval_tps(inv, wpts[i]);
        dst_final[i] = dst[static_cast<size_t>(assign2[i])];
    }
    return solve_tps(src_final, dst_final, reg);
}

}  // namespace warpkit
