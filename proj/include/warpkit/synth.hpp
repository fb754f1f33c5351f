#pragma once

#include <filesystem>
#include <random>

#include "warpkit/io/checkpoint.hpp"
#include "warpkit/io/image.hpp"
#include "warpkit/personrep.hpp"
#include "warpkit/sampler.hpp"
#include "warpkit/tps.hpp"

// Procedural try-on samples: a silhouette person, a textured garment
// with a known random TPS ground-truth warp, and the worn result
// composited from the warped garment. Deterministic under seed.

namespace warpkit {

struct SynthSample {
    Tensor<float> person;         // [3,H,W] bare silhouette (no garment)
    Tensor<float> worn;           // [3,H,W] person wearing the warped garment
    Tensor<float> cloth;          // [3,H,W] flat garment
    Tensor<float> cloth_mask;     // [H,W]
    Tensor<float> warped_cloth;   // [3,H,W] garment under the ground-truth warp
    Tensor<float> warped_mask;    // [H,W] warped garment mask, thresholded
    Tensor<float> body_mask;      // [H,W]
    Tensor<float> reserved_mask;  // [H,W] head region
    Keypoints keypoints;          // in the 256x192 frame
    Tensor<float> theta;          // [2,5,5] ground-truth anchor offsets
};

namespace detail {

struct SynthCanvas {
    Tensor<float> rgb;
    Index h, w;

    SynthCanvas(Index height, Index width, float r, float g, float b)
        : rgb({3, height, width}), h(height), w(width) {
        fill_rect(0.0, 0.0, 1.0, 1.0, r, g, b);
    }

    // Rect in relative units [0,1]^2 (x0,y0)-(x1,y1).
    void fill_rect(double x0, double y0, double x1, double y1, float r, float g, float b,
                   Tensor<float>* mask = nullptr) {
        long ya = std::lround(y0 * (h - 1)), yb = std::lround(y1 * (h - 1));
        long xa = std::lround(x0 * (w - 1)), xb = std::lround(x1 * (w - 1));
        ya = std::clamp(ya, 0L, static_cast<long>(h) - 1);
        yb = std::clamp(yb, 0L, static_cast<long>(h) - 1);
        xa = std::clamp(xa, 0L, static_cast<long>(w) - 1);
        xb = std::clamp(xb, 0L, static_cast<long>(w) - 1);
        for (long y = ya; y <= yb; ++y)
            for (long x = xa; x <= xb; ++x) {
                rgb.at3(0, y, x) = r;
                rgb.at3(1, y, x) = g;
                rgb.at3(2, y, x) = b;
                if (mask) mask->at2(static_cast<Index>(y), static_cast<Index>(x)) = 1.0f;
            }
    }

    void fill_disk(double cx, double cy, double radius, float r, float g, float b,
                   Tensor<float>* mask = nullptr) {
        double pcx = cx * (w - 1), pcy = cy * (h - 1);
        double pr = radius * (h - 1);
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                double dx = static_cast<double>(x) - pcx, dy = static_cast<double>(y) - pcy;
                if (dx * dx + dy * dy > pr * pr) continue;
                rgb.at3(0, y, x) = r;
                rgb.at3(1, y, x) = g;
                rgb.at3(2, y, x) = b;
                if (mask) mask->at2(y, x) = 1.0f;
            }
    }
};

inline float rand_in(std::mt19937& rng, float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
}

// Garment silhouette: torso plus two sleeves, jittered per sample.
struct GarmentShape {
    double torso_x0, torso_x1, torso_y0, torso_y1;
    double sleeve_y1;
};

inline GarmentShape garment_shape(std::mt19937& rng) {
    GarmentShape s;
    s.torso_x0 = 0.28 + rand_in(rng, -0.02f, 0.02f);
    s.torso_x1 = 0.72 + rand_in(rng, -0.02f, 0.02f);
    s.torso_y0 = 0.18 + rand_in(rng, -0.02f, 0.02f);
    s.torso_y1 = 0.80 + rand_in(rng, -0.02f, 0.02f);
    s.sleeve_y1 = s.torso_y0 + 0.24 + rand_in(rng, -0.02f, 0.02f);
    return s;
}

// Ground-truth warp: an axis-aligned affine (scale + shift per axis)
// placing the garment on the person. Kept deterministic given the
// sampled geometry so a matcher can infer it from its inputs; pure
// noise warps would put a floor under any learned matcher's loss.
struct WarpAffine {
    double sx, sy;  // scale
    double dx, dy;  // shift, relative units
};

inline WarpAffine sample_warp(std::mt19937& rng) {
    WarpAffine a;
    a.sx = 1.0 + rand_in(rng, -0.05f, 0.05f);
    a.sy = 1.0 + rand_in(rng, -0.05f, 0.05f);
    a.dx = rand_in(rng, -0.05f, 0.05f);
    a.dy = rand_in(rng, -0.05f, 0.05f);
    return a;
}

// Applies the warp to a point in relative units, pivoting at 0.5.
inline double warp_apply(double v, double scale, double shift) {
    return scale * (v - 0.5) + 0.5 + shift;
}

// Anchor offsets realizing the affine warp in normalized coordinates,
// clamped into the documented +-0.15 budget.
inline Tensor<float> warp_to_theta(const WarpAffine& a) {
    Tensor<float> theta({2, kAnchorsPerSide, kAnchorsPerSide});
    auto rest = anchor_rest_lattice();
    auto clamp_off = [](double v) { return std::clamp(v, -0.149, 0.149); };
    for (Index j = 0; j < kAnchorCount; ++j) {
        // relative 0.5 pivot is normalized 0, so X' = s X + 2 shift
        theta[j] = static_cast<float>(clamp_off((a.sx - 1.0) * rest[j][0] + 2.0 * a.dx));
        theta[kAnchorCount + j] =
            static_cast<float>(clamp_off((a.sy - 1.0) * rest[j][1] + 2.0 * a.dy));
    }
    return theta;
}

// Texture families cycle by index: stripes, checkers, logo glyphs, flat.
inline void paint_garment(SynthCanvas& canvas, Tensor<float>& mask, const GarmentShape& s,
                          int pattern, std::mt19937& rng) {
    // flat garments get muted light colors (low edge contrast against the
    // canvas) so the texture families separate cleanly under a TV norm
    float lo = pattern == 3 ? 0.30f : 0.10f, hi = pattern == 3 ? 0.45f : 0.90f;
    float r0 = rand_in(rng, lo, hi), g0 = rand_in(rng, lo, hi), b0 = rand_in(rng, lo, hi);
    // second color pushed away from the first so texture contrast is high
    auto flip = [](float v) { return v >= 0.5f ? v - 0.45f : v + 0.45f; };
    float r1 = flip(r0), g1 = flip(g0), b1 = flip(b0);

    canvas.fill_rect(s.torso_x0, s.torso_y0, s.torso_x1, s.torso_y1, r0, g0, b0, &mask);
    canvas.fill_rect(s.torso_x0 - 0.14, s.torso_y0, s.torso_x0, s.sleeve_y1, r0, g0, b0, &mask);
    canvas.fill_rect(s.torso_x1, s.torso_y0, s.torso_x1 + 0.14, s.sleeve_y1, r0, g0, b0, &mask);

    Index h = canvas.h, w = canvas.w;
    long period = std::max(4L, static_cast<long>(h) / 32);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (mask.at2(y, x) < 0.5f) continue;
            bool second = false;
            switch (pattern) {
                case 0:  // horizontal stripes
                    second = (static_cast<long>(y) / period) % 2 == 1;
                    break;
                case 1:  // checkers
                    second = ((static_cast<long>(y) / period) + (static_cast<long>(x) / period)) %
                                 2 ==
                             1;
                    break;
                case 2: {  // glyph rows: dashed text-like lines over the torso
                    long ty = std::lround(s.torso_y0 * (h - 1));
                    long line = (static_cast<long>(y) - ty) / period;
                    bool in_line = (static_cast<long>(y) - ty) % period < period * 2 / 3;
                    // dash phase varies per line so rows do not align
                    long dash = (static_cast<long>(x) + line * 3) / period;
                    second = line >= 0 && in_line && dash % 2 == 0;
                    break;
                }
                default:  // flat
                    break;
            }
            if (second) {
                canvas.rgb.at3(0, y, x) = r1;
                canvas.rgb.at3(1, y, x) = g1;
                canvas.rgb.at3(2, y, x) = b1;
            }
        }
}

// Person silhouette and its keypoints (keypoints in the 256x192 frame).
// The torso rectangle is where the worn garment will land; the rest of
// the body hangs off it.
inline Keypoints paint_person(SynthCanvas& canvas, Tensor<float>& body, Tensor<float>& reserved,
                              double torso_x0, double torso_x1, double torso_y0, double torso_y1,
                              std::mt19937& rng) {
    // fixed skin tone: the clothing-agnostic rep carries no body color,
    // so a renderer can only learn colors that are constant or visible
    const float skin_r = 0.80f, skin_g = 0.62f, skin_b = 0.52f;
    double cx = 0.5 * (torso_x0 + torso_x1);
    double head_r = 0.055;
    double neck_y = torso_y0;
    double head_cy = std::max(neck_y - head_r - 0.015, head_r + 0.005);
    double arm_w = 0.07, arm_y1 = torso_y0 + 0.30;
    double leg_y1 = 0.97;

    canvas.fill_rect(torso_x0, torso_y0, torso_x1, torso_y1, skin_r, skin_g, skin_b, &body);
    canvas.fill_rect(torso_x0 - arm_w, torso_y0, torso_x0, arm_y1, skin_r, skin_g, skin_b, &body);
    canvas.fill_rect(torso_x1, torso_y0, torso_x1 + arm_w, arm_y1, skin_r, skin_g, skin_b, &body);
    canvas.fill_rect(cx - 0.17, torso_y1, cx - 0.03, leg_y1, skin_r, skin_g, skin_b, &body);
    canvas.fill_rect(cx + 0.03, torso_y1, cx + 0.17, leg_y1, skin_r, skin_g, skin_b, &body);
    canvas.fill_rect(cx - 0.04, neck_y - 0.02, cx + 0.04, neck_y, skin_r, skin_g, skin_b, &body);
    canvas.fill_disk(cx, head_cy, head_r, skin_r, skin_g, skin_b, &body);
    canvas.fill_disk(cx, head_cy, head_r, skin_r, skin_g, skin_b, &reserved);

    // 18-slot pose convention: nose, neck, shoulders/elbows/wrists (R,L),
    // hips/knees/ankles (R,L), eyes and ears (R,L).
    auto px = [&](double rx) { return rx * (kRepWidth - 1); };
    auto py = [&](double ry) { return ry * (kRepHeight - 1); };
    Keypoints kps;
    auto set = [&](Index i, double rx, double ry, bool vis = true) {
        kps[i] = Keypoint{px(rx), py(ry), vis};
    };
    set(0, cx, head_cy);                            // nose
    set(1, cx, neck_y);                             // neck
    set(2, torso_x1, torso_y0 + 0.02);              // right shoulder
    set(3, torso_x1 + arm_w / 2, torso_y0 + 0.16);  // right elbow
    set(4, torso_x1 + arm_w / 2, arm_y1);           // right wrist
    set(5, torso_x0, torso_y0 + 0.02);              // left shoulder
    set(6, torso_x0 - arm_w / 2, torso_y0 + 0.16);  // left elbow
    set(7, torso_x0 - arm_w / 2, arm_y1);           // left wrist
    set(8, cx + 0.10, torso_y1);                    // right hip
    set(9, cx + 0.10, 0.80);                        // right knee
    set(10, cx + 0.10, leg_y1);                     // right ankle
    set(11, cx - 0.10, torso_y1);                   // left hip
    set(12, cx - 0.10, 0.80);                       // left knee
    set(13, cx - 0.10, leg_y1);                     // left ankle
    set(14, cx + 0.02, head_cy - 0.01);             // right eye
    set(15, cx - 0.02, head_cy - 0.01);             // left eye
    set(16, cx + head_r, head_cy, false);           // ears marked hidden
    set(17, cx - head_r, head_cy, false);
    return kps;
}

}  // namespace detail

// n reproducible samples at the given size. Textures cycle stripes,
// checkers, glyphs, flat so every batch holds both rich and flat
// garments. Ground-truth warps stay within the +-0.15 offset budget and
// track each sample's person geometry.
inline std::vector<SynthSample> gen_synth_dataset(Index n, unsigned seed, Index h = kRepHeight,
                                                  Index w = kRepWidth) {
    require(n >= 1, "gen_synth_dataset: need n >= 1");
    require(h >= 16 && w >= 12, "gen_synth_dataset: size too small, want at least 16x12");
    std::vector<SynthSample> out;
    out.reserve(n);
    for (Index i = 0; i < n; ++i) {
        std::mt19937 rng(seed * 7919u + static_cast<unsigned>(i));
        SynthSample s;

        detail::GarmentShape gs = detail::garment_shape(rng);
        // garments are shot on a light product backdrop, distinct from the
        // darker scene backdrop, so composition masks must localize to the
        // garment instead of degenerating to all-ones
        detail::SynthCanvas cloth(h, w, 0.65f, 0.67f, 0.72f);
        s.cloth_mask = Tensor<float>({h, w});
        detail::paint_garment(cloth, s.cloth_mask, gs, static_cast<int>(i % 4), rng);
        s.cloth = cloth.rgb;

        // person torso sits where the warp will land the garment torso
        detail::WarpAffine warp = detail::sample_warp(rng);
        detail::SynthCanvas person(h, w, 0.20f, 0.22f, 0.28f);
        s.body_mask = Tensor<float>({h, w});
        s.reserved_mask = Tensor<float>({h, w});
        s.keypoints = detail::paint_person(person, s.body_mask, s.reserved_mask,
                                           detail::warp_apply(gs.torso_x0, warp.sx, warp.dx),
                                           detail::warp_apply(gs.torso_x1, warp.sx, warp.dx),
                                           detail::warp_apply(gs.torso_y0, warp.sy, warp.dy),
                                           detail::warp_apply(gs.torso_y1, warp.sy, warp.dy),
                                           rng);
        s.person = person.rgb;

        s.theta = detail::warp_to_theta(warp);
        Tensor<float> grid = grid_from_params(s.theta, h, w);
        s.warped_cloth = grid_sample_plain(s.cloth, grid, PaddingMode::Border);
        Tensor<float> mask3 = Tensor<float>::from({1, h, w}, s.cloth_mask.data);
        Tensor<float> wm = grid_sample_plain(mask3, grid, PaddingMode::Zeros);
        s.warped_mask = Tensor<float>({h, w});
        for (Index p = 0; p < h * w; ++p) s.warped_mask[p] = wm[p] >= 0.5f ? 1.0f : 0.0f;

        s.worn = s.person;
        for (Index c = 0; c < 3; ++c)
            for (Index p = 0; p < h * w; ++p)
                if (s.warped_mask[p] >= 0.5f)
                    s.worn[c * h * w + p] = s.warped_cloth[c * h * w + p];

        out.push_back(std::move(s));
    }
    return out;
}

// ----------------------------------------------------------- disk layout

namespace detail {

inline std::string synth_stem(const std::string& dir, Index i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04zu", i);
    return dir + "/" + buf;
}

}  // namespace detail

inline void save_synth_dataset(const std::vector<SynthSample>& samples, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (Index i = 0; i < samples.size(); ++i) {
        const SynthSample& s = samples[i];
        std::string stem = detail::synth_stem(dir, i);
        save_image(s.person, stem + "_person.png");
        save_image(s.worn, stem + "_worn.png");
        save_image(s.cloth, stem + "_cloth.png");
        save_image(s.cloth_mask, stem + "_cloth_mask.png");
        save_image(s.warped_cloth, stem + "_warped.png");
        save_image(s.warped_mask, stem + "_warped_mask.png");
        save_image(s.body_mask, stem + "_body_mask.png");
        save_image(s.reserved_mask, stem + "_reserved_mask.png");
        save_keypoints(s.keypoints, stem + "_keypoints.json");
        save_ckpt(stem + "_theta.ckpt", {{"theta", s.theta}});
    }
}

inline std::vector<SynthSample> load_synth_dataset(const std::string& dir) {
    std::vector<SynthSample> out;
    for (Index i = 0;; ++i) {
        std::string stem = detail::synth_stem(dir, i);
        if (!std::filesystem::exists(stem + "_person.png")) break;
        SynthSample s;
        s.person = load_image(stem + "_person.png");
        s.worn = load_image(stem + "_worn.png");
        s.cloth = load_image(stem + "_cloth.png");
        s.cloth_mask = load_mask(stem + "_cloth_mask.png");
        s.warped_cloth = load_image(stem + "_warped.png");
        s.warped_mask = load_mask(stem + "_warped_mask.png");
        s.body_mask = load_mask(stem + "_body_mask.png");
        s.reserved_mask = load_mask(stem + "_reserved_mask.png");
        s.keypoints = load_keypoints(stem + "_keypoints.json");
        auto theta = load_ckpt(stem + "_theta.ckpt");
        auto it = theta.find("theta");
        require(it != theta.end(), "load_synth_dataset: no theta tensor in " + stem +
                                       "_theta.ckpt");
        s.theta = it->second;
        out.push_back(std::move(s));
    }
    require(!out.empty(), "load_synth_dataset: no samples found under " + dir);
    return out;
}

}  // namespace warpkit
