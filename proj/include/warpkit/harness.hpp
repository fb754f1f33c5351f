#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>

#include "warpkit/shapectx.hpp"
#include "warpkit/synth.hpp"
#include "warpkit/tom.hpp"

// Experiments: TV-norm LARGE/SMALL split, misalignment-robustness study,
// learned-vs-baseline timing, report CSV emission.

namespace warpkit {

// Anisotropic total variation, forward differences over all channels,
// normalized by pixel count so splits are resolution independent.
inline double tv_norm(const Tensor<float>& image) {
    require(image.rank() == 3, "tv_norm: want [C,H,W]");
    Index c = image.dims[0], h = image.dims[1], w = image.dims[2];
    require(h >= 2 && w >= 2, "tv_norm: need H, W >= 2");
    double acc = 0.0;
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                if (x + 1 < w)
                    acc += std::abs(static_cast<double>(image.at3(ci, y, x + 1)) -
                                    image.at3(ci, y, x));
                if (y + 1 < h)
                    acc += std::abs(static_cast<double>(image.at3(ci, y + 1, x)) -
                                    image.at3(ci, y, x));
            }
    return acc / static_cast<double>(h * w);
}

struct TvSplit {
    std::vector<std::string> large;  // top-k by TV norm
    std::vector<std::string> small;  // bottom-k
};

// Deterministic split: order by TV norm, ties broken by name. Both
// halves are emitted in descending-TV order.
inline TvSplit split_tv(std::vector<std::pair<std::string, double>> garments, Index k = 50) {
    require(k >= 1, "split_tv: k must be >= 1");
    require(garments.size() >= 2 * k, "split_tv: need at least 2k = " + std::to_string(2 * k) +
                                          " garments, got " + std::to_string(garments.size()));
    std::sort(garments.begin(), garments.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    TvSplit split;
    for (Index i = 0; i < k; ++i) split.large.push_back(garments[i].first);
    for (Index i = garments.size() - k; i < garments.size(); ++i)
        split.small.push_back(garments[i].first);
    return split;
}

// Integer translation drawn uniformly from the L-inf ball of radius n,
// border-replicate padding. Simulates an imperfect matching stage.
inline Tensor<float> perturb(const Tensor<float>& image, long n, std::mt19937& rng) {
    require(image.rank() == 3, "perturb: want [C,H,W]");
    require(n >= 0, "perturb: radius must be >= 0");
    std::uniform_int_distribution<long> d(-n, n);
    long dx = d(rng), dy = d(rng);
    if (dx == 0 && dy == 0) return image;
    Index c = image.dims[0], h = image.dims[1], w = image.dims[2];
    Tensor<float> out(image.dims);
    for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                long sy = std::clamp(static_cast<long>(y) - dy, 0L, static_cast<long>(h) - 1);
                long sx = std::clamp(static_cast<long>(x) - dx, 0L, static_cast<long>(w) - 1);
                out.at3(ci, y, x) = image.at3(ci, static_cast<Index>(sy), static_cast<Index>(sx));
            }
    return out;
}

// ---------------------------------------------------------------- report

struct ReportRow {
    std::string method;
    std::string condition;
    double l1 = 0.0;
    double perceptual = 0.0;
    double tv = 0.0;
    double mean_mask = 0.0;
    double wall_clock_s = 0.0;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;

    // Byte-stable CSV: header row, %.9g numbers, LF endings.
    std::string to_csv() const {
        std::string out = "method,condition,l1,perceptual,tv_norm,mean_mask,wall_clock_s\n";
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.9g", v);
            return std::string(buf);
        };
        for (const ReportRow& r : rows) {
            require(r.method.find(',') == std::string::npos &&
                        r.condition.find(',') == std::string::npos,
                    "ExperimentReport: method/condition must not contain commas");
            out += r.method + "," + r.condition + "," + num(r.l1) + "," + num(r.perceptual) +
                   "," + num(r.tv) + "," + num(r.mean_mask) + "," + num(r.wall_clock_s) + "\n";
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        require(os.good(), "ExperimentReport: cannot open " + path);
        os << to_csv();
        require(os.good(), "ExperimentReport: write failed for " + path);
    }

    static ExperimentReport parse(const std::string& csv) {
        ExperimentReport rep;
        std::istringstream is(csv);
        std::string line;
        require(std::getline(is, line) &&
                    line == "method,condition,l1,perceptual,tv_norm,mean_mask,wall_clock_s",
                "ExperimentReport: bad or missing header row");
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            ReportRow r;
            std::string field;
            auto next = [&] {
                require(static_cast<bool>(std::getline(ls, field, ',')),
                        "ExperimentReport: short row: " + line);
                return field;
            };
            r.method = next();
            r.condition = next();
            r.l1 = std::stod(next());
            r.perceptual = std::stod(next());
            r.tv = std::stod(next());
            r.mean_mask = std::stod(next());
            r.wall_clock_s = std::stod(next());
            rep.rows.push_back(std::move(r));
        }
        return rep;
    }

    static ExperimentReport load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        require(is.good(), "ExperimentReport: cannot open " + path);
        std::ostringstream ss;
        ss << is.rdbuf();
        return parse(ss.str());
    }
};

// ------------------------------------------------------------- evaluation

inline double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

namespace detail {

inline double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    require(a.same_dims(b), "mean_abs_diff: dims mismatch");
    double acc = 0.0;
    for (Index i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.size());
}

// Mean of a [1,H,W] mask over region pixels (>= 0.5); 0 if region empty.
inline double mean_over_region(const Tensor<float>& mask, const Tensor<float>& region) {
    double acc = 0.0;
    Index n = 0;
    for (Index p = 0; p < region.size(); ++p) {
        if (region[p] < 0.5f) continue;
        acc += mask[p];
        ++n;
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace detail

// Plain (no-gradient) perceptual distance between two images.
inline double perceptual_distance(const PerceptualNet<float>& pnet, const Tensor<float>& a,
                                  const Tensor<float>& b) {
    Tape<float> tape;
    Var<float> va = tape.leaf(a), vb = tape.leaf(b);
    return static_cast<double>(tape.val(perceptual_loss(tape, pnet, va, vb))[0]);
}

struct EvalSample {
    Tensor<float> person;   // person rep at the net's resolution
    Tensor<float> warped;   // aligned garment (pre-perturbation)
    Tensor<float> target;   // ground truth worn image
    Tensor<float> region;   // garment region mask [H,W]
};

struct EvalResult {
    double l1 = 0.0;
    double perceptual = 0.0;
    double tv = 0.0;
    double mean_mask = 0.0;
    double wall_clock_s = 0.0;
};

// Mean metrics of one try-on net over a sample list; each garment is
// independently perturbed by radius n before the forward pass.
template <class T>
EvalResult evaluate_tom(const TomNet<T>& net, const PerceptualNet<float>& pnet,
                        const std::vector<EvalSample>& samples, long n_perturb,
                        std::mt19937& rng) {
    require(!samples.empty(), "evaluate_tom: empty sample list");
    EvalResult res;
    double t0 = now_seconds();
    for (const EvalSample& s : samples) {
        Tensor<float> warped = perturb(s.warped, n_perturb, rng);
        Tape<T> tape;
        VarSet<T> vars = leaf_params(tape, net.params);
        Var<T> person = tape.leaf(s.person.template cast<T>());
        Var<T> cloth = tape.leaf(warped.template cast<T>());
        auto fwd = tom_forward(tape, net, vars, person, cloth);
        Tensor<float> out = tape.val(fwd.composite).template cast<float>();
        res.l1 += detail::mean_abs_diff(out, s.target);
        res.perceptual += perceptual_distance(pnet, out, s.target);
        res.tv += tv_norm(out);
        res.mean_mask += fwd.mask.valid()
                             ? detail::mean_over_region(
                                   tape.val(fwd.mask).template cast<float>(), s.region)
                             : 1.0;
    }
    double inv = 1.0 / static_cast<double>(samples.size());
    res.l1 *= inv;
    res.perceptual *= inv;
    res.tv *= inv;
    res.mean_mask *= inv;
    res.wall_clock_s = now_seconds() - t0;
    return res;
}

// Robustness study: evaluates each variant's net at each perturbation
// radius; one report row per (variant, radius).
template <class T>
ExperimentReport robustness_experiment(
    const std::vector<std::pair<std::string, const TomNet<T>*>>& variants,
    const std::vector<long>& n_list, const std::vector<EvalSample>& samples,
    const PerceptualNet<float>& pnet, unsigned seed) {
    ExperimentReport report;
    for (const auto& [name, net] : variants) {
        require(net != nullptr, "robustness_experiment: missing net for variant " + name);
        for (long n : n_list) {
            // fresh stream per condition so conditions are order independent
            std::mt19937 rng(seed * 2654435761u + static_cast<unsigned>(n));
            EvalResult r = evaluate_tom(*net, pnet, samples, n, rng);
            report.rows.push_back(ReportRow{name, "N=" + std::to_string(n), r.l1, r.perceptual,
                                            r.tv, r.mean_mask, r.wall_clock_s});
        }
    }
    return report;
}

// [H,W] mask resize with re-thresholding.
inline Tensor<float> bilinear_threshold_mask(const Tensor<float>& mask, Index h, Index w) {
    require(mask.rank() == 2, "bilinear_threshold_mask: want [H,W]");
    Tensor<float> r = bilinear_resize(Tensor<float>::from({1, mask.dims[0], mask.dims[1]},
                                                          mask.data),
                                      h, w);
    Tensor<float> out({h, w});
    for (Index p = 0; p < h * w; ++p) out[p] = r[p] >= 0.5f ? 1.0f : 0.0f;
    return out;
}

// --------------------------------------------------- dataset preparation

namespace detail {

inline Tensor<float> resize_to(const Tensor<float>& t, Index h, Index w) {
    return (t.dims[1] == h && t.dims[2] == w) ? t : bilinear_resize(t, h, w);
}

}  // namespace detail

// 22-channel person representation resized to a working resolution.
inline Tensor<float> person_rep_at(const SynthSample& s, Index h, Index w) {
    PersonInputs in{s.person, s.keypoints, s.body_mask, s.reserved_mask};
    return detail::resize_to(assemble(in).map, h, w);
}

inline std::vector<GmmSample<float>> gmm_training_set(const std::vector<SynthSample>& ds, Index h,
                                                      Index w) {
    std::vector<GmmSample<float>> out;
    out.reserve(ds.size());
    for (const SynthSample& s : ds)
        out.push_back({person_rep_at(s, h, w), detail::resize_to(s.cloth, h, w),
                       detail::resize_to(s.warped_cloth, h, w)});
    return out;
}

// Perfect-alignment triplets; train_perturb > 0 shifts the garment input
// to simulate an imperfect matcher during training.
inline std::vector<TomSample<float>> tom_training_set(const std::vector<SynthSample>& ds, Index h,
                                                      Index w, long train_perturb = 0,
                                                      unsigned seed = 1) {
    std::mt19937 rng(seed);
    std::vector<TomSample<float>> out;
    out.reserve(ds.size());
    for (const SynthSample& s : ds) {
        Tensor<float> warped = detail::resize_to(s.warped_cloth, h, w);
        if (train_perturb > 0) warped = perturb(warped, train_perturb, rng);
        out.push_back({person_rep_at(s, h, w), std::move(warped),
                       detail::resize_to(s.worn, h, w)});
    }
    return out;
}

inline std::vector<EvalSample> eval_set(const std::vector<SynthSample>& ds, Index h, Index w) {
    std::vector<EvalSample> out;
    out.reserve(ds.size());
    for (const SynthSample& s : ds)
        out.push_back({person_rep_at(s, h, w), detail::resize_to(s.warped_cloth, h, w),
                       detail::resize_to(s.worn, h, w),
                       bilinear_threshold_mask(s.warped_mask, h, w)});
    return out;
}

// Timing comparison at full scale: learned matcher forward pass vs the
// shape-context baseline on the same sample. One row per sample each.
template <class T>
ExperimentReport speed_experiment(const GmmNet<T>& net, const std::vector<SynthSample>& samples) {
    ExperimentReport report;
    for (Index i = 0; i < samples.size(); ++i) {
        const SynthSample& s = samples[i];
        PersonInputs inputs{s.person, s.keypoints, s.body_mask, s.reserved_mask};
        Tensor<float> rep =
            bilinear_resize(assemble(inputs).map, net.arch.height, net.arch.width);
        Tensor<float> cloth = bilinear_resize(s.cloth, net.arch.height, net.arch.width);

        double t0 = now_seconds();
        Tape<T> tape;
        VarSet<T> vars = leaf_params(tape, net.params);
        auto fwd = gmm_forward(tape, net, vars, tape.leaf(rep.template cast<T>()),
                               tape.leaf(cloth.template cast<T>()));
        (void)fwd;
        double t_gmm = now_seconds() - t0;

        Tensor<float> mask_src = bilinear_threshold_mask(s.cloth_mask, net.arch.height,
                                                         net.arch.width);
        Tensor<float> mask_dst = bilinear_threshold_mask(s.warped_mask, net.arch.height,
                                                         net.arch.width);
        t0 = now_seconds();
        (void)match_and_fit(mask_src, mask_dst);
        double t_sc = now_seconds() - t0;

        std::string cond = "sample=" + std::to_string(i);
        report.rows.push_back(ReportRow{"gmm_forward", cond, 0, 0, 0, 0, t_gmm});
        report.rows.push_back(ReportRow{"scmm_match", cond, 0, 0, 0, 0, t_sc});
    }
    return report;
}

}  // namespace warpkit
