#pragma once

#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "warpkit/io/image.hpp"
#include "warpkit/tensor.hpp"

// Clothing-agnostic person representation: 18 pose-keypoint channels,
// one blurred body-shape channel, and a 3-channel reserved (face/hair)
// region, all at 256x192.

namespace warpkit {

constexpr Index kRepHeight = 256;
constexpr Index kRepWidth = 192;
constexpr Index kKeypointCount = 18;
constexpr Index kPoseBlock = 11;  // white rectangle side
// Body-shape blur realized as a down/up resample through this coarse grid.
constexpr Index kShapeCoarseH = 16;
constexpr Index kShapeCoarseW = 12;

struct Keypoint {
    double x = 0, y = 0;  // pixels in the 256x192 frame
    bool visible = false;
};

using Keypoints = std::array<Keypoint, kKeypointCount>;

struct PersonInputs {
    Tensor<float> image;          // [3,H,W] RGB in [0,1]
    Keypoints keypoints;          // 18 slots, 256x192 frame
    Tensor<float> body_mask;      // [H,W] binary
    Tensor<float> reserved_mask;  // [H,W] binary, face + hair
};

// Keypoints JSON: {"keypoints": [[x, y, v] x 18]}.
inline Keypoints load_keypoints(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "load_keypoints: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("load_keypoints: " + path + ": " + e.what());
    }
    require(j.contains("keypoints") && j["keypoints"].is_array() &&
                j["keypoints"].size() == kKeypointCount,
            "load_keypoints: " + path + ": want exactly 18 [x,y,v] entries under 'keypoints'");
    Keypoints kps;
    for (Index i = 0; i < kKeypointCount; ++i) {
        const auto& e = j["keypoints"][i];
        require(e.is_array() && e.size() == 3,
                "load_keypoints: " + path + ": entry " + std::to_string(i) + " is not [x,y,v]");
        kps[i].x = e[0].get<double>();
        kps[i].y = e[1].get<double>();
        kps[i].visible = e[2].get<double>() >= 0.5;
    }
    return kps;
}

inline void save_keypoints(const Keypoints& kps, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& k : kps) arr.push_back({k.x, k.y, k.visible ? 1 : 0});
    std::ofstream os(path);
    require(os.good(), "save_keypoints: cannot open " + path);
    os << nlohmann::json{{"keypoints", arr}}.dump(2) << "\n";
}

// Each visible keypoint becomes an 11x11 block of ones centered at its
// rounded coordinate, clipped at the borders; invisible slots stay zero.
inline Tensor<float> pose_heatmap(const Keypoints& kps) {
    Tensor<float> out({kKeypointCount, kRepHeight, kRepWidth});
    const long half = static_cast<long>(kPoseBlock) / 2;
    for (Index c = 0; c < kKeypointCount; ++c) {
        if (!kps[c].visible) continue;
        long cx = std::lround(kps[c].x);
        long cy = std::lround(kps[c].y);
        long y0 = std::max(cy - half, 0L), y1 = std::min(cy + half, static_cast<long>(kRepHeight) - 1);
        long x0 = std::max(cx - half, 0L), x1 = std::min(cx + half, static_cast<long>(kRepWidth) - 1);
        for (long y = y0; y <= y1; ++y)
            for (long x = x0; x <= x1; ++x)
                out.at3(c, static_cast<Index>(y), static_cast<Index>(x)) = 1.0f;
    }
    return out;
}

// Blurred body shape: mask through a 16x12 bottleneck and back up.
// The coarse grid also destroys old-garment silhouette detail.
inline Tensor<float> body_shape_channel(const Tensor<float>& body_mask) {
    require(body_mask.rank() == 2, "body_shape_channel: mask must be [H,W]");
    bool any = false;
    for (float v : body_mask.data) any |= v >= 0.5f;
    require(any, "body_shape_channel: empty body mask");
    Tensor<float> as3 = Tensor<float>::from({1, body_mask.dims[0], body_mask.dims[1]},
                                            body_mask.data);
    Tensor<float> coarse = bilinear_resize(as3, kShapeCoarseH, kShapeCoarseW);
    return bilinear_resize(coarse, kRepHeight, kRepWidth);
}

// The 22-channel map p.
struct PersonRepresentation {
    Tensor<float> map;  // [22,256,192]
};

inline PersonRepresentation assemble(const PersonInputs& in) {
    require(in.image.rank() == 3 && in.image.dims[0] == 3, "assemble: image must be [3,H,W]");
    require(in.body_mask.rank() == 2 && in.reserved_mask.rank() == 2,
            "assemble: masks must be [H,W]");
    require(in.body_mask.dims[0] == in.image.dims[1] && in.body_mask.dims[1] == in.image.dims[2],
            "assemble: body mask size does not match image");
    require(in.reserved_mask.dims == in.body_mask.dims,
            "assemble: reserved mask size does not match image");

    PersonRepresentation rep;
    rep.map = Tensor<float>({kKeypointCount + 1 + 3, kRepHeight, kRepWidth});

    Tensor<float> pose = pose_heatmap(in.keypoints);
    std::copy(pose.data.begin(), pose.data.end(), rep.map.data.begin());

    Tensor<float> mask_resized =
        bilinear_resize(Tensor<float>::from({1, in.body_mask.dims[0], in.body_mask.dims[1]},
                                            in.body_mask.data),
                        kRepHeight, kRepWidth);
    Tensor<float> shape = body_shape_channel(
        Tensor<float>::from({kRepHeight, kRepWidth}, mask_resized.data));
    Index plane = kRepHeight * kRepWidth;
    std::copy(shape.data.begin(), shape.data.end(),
              rep.map.data.begin() + static_cast<long>(kKeypointCount * plane));

    Tensor<float> img = bilinear_resize(in.image, kRepHeight, kRepWidth);
    Tensor<float> res = bilinear_resize(
        Tensor<float>::from({1, in.reserved_mask.dims[0], in.reserved_mask.dims[1]},
                            in.reserved_mask.data),
        kRepHeight, kRepWidth);
    for (Index c = 0; c < 3; ++c)
        for (Index p = 0; p < plane; ++p)
            rep.map[(kKeypointCount + 1 + c) * plane + p] =
                img[c * plane + p] * (res[p] >= 0.5f ? 1.0f : 0.0f);
    return rep;
}

}  // namespace warpkit
