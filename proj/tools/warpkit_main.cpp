#include <CLI11.hpp>

#include "warpkit/gradcheck.hpp"
#include "warpkit/harness.hpp"
#include "warpkit/io/config.hpp"

// Command-line front end: every pipeline stage is reachable as a
// subcommand over PNG / JSON / config / checkpoint artifacts.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

namespace {

using namespace warpkit;

std::vector<Point> load_points(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "load_points: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        fail("load_points: " + path + ": " + e.what());
    }
    require(j.contains("points") && j["points"].is_array(),
            "load_points: " + path + " lacks a \"points\" array");
    std::vector<Point> pts;
    for (const auto& p : j["points"]) {
        require(p.is_array() && p.size() == 2, "load_points: " + path + ": want [x, y] pairs");
        pts.push_back(Point{p[0].get<double>(), p[1].get<double>()});
    }
    return pts;
}

void save_tps(const TpsCoefficients& c, const std::string& path) {
    Index n = c.sources.size();
    Tensor<float> affine({2, 3}), weights({n, 2}), sources({n, 2});
    for (Index d = 0; d < 2; ++d)
        for (Index k = 0; k < 3; ++k) affine.at2(d, k) = static_cast<float>(c.affine[d][k]);
    for (Index i = 0; i < n; ++i)
        for (Index d = 0; d < 2; ++d) {
            weights.at2(i, d) = static_cast<float>(c.weights[i][d]);
            sources.at2(i, d) = static_cast<float>(c.sources[i][d]);
        }
    save_ckpt(path, {{"affine", affine}, {"weights", weights}, {"sources", sources}});
}

PersonInputs load_person_dir(const std::string& dir) {
    PersonInputs in;
    in.image = load_image(dir + "/image.png");
    in.keypoints = load_keypoints(dir + "/keypoints.json");
    in.body_mask = load_mask(dir + "/body_mask.png");
    in.reserved_mask = load_mask(dir + "/reserved_mask.png");
    return in;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc;
    tc.steps = cfg.get_int("steps", tc.steps);
    tc.batch = cfg.get_int("batch", tc.batch);
    tc.lr = cfg.get_double("lr", tc.lr);
    tc.seed = static_cast<unsigned>(cfg.get_int("seed", tc.seed));
    tc.total_steps = cfg.get_int("total_steps", tc.total_steps);
    tc.base = static_cast<Index>(cfg.get_int("base", static_cast<long>(tc.base)));
    std::string size = cfg.get_str("size", "64x48");
    auto x = size.find('x');
    require(x != std::string::npos, "config: size must look like 64x48, got " + size);
    tc.height = static_cast<Index>(std::stol(size.substr(0, x)));
    tc.width = static_cast<Index>(std::stol(size.substr(x + 1)));
    return tc;
}

void save_curve(const std::vector<std::pair<long, double>>& curve, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "save_curve: cannot open " + path);
    os << "step,loss\n";
    char buf[64];
    for (const auto& [step, loss] : curve) {
        std::snprintf(buf, sizeof buf, "%ld,%.9g\n", step, loss);
        os << buf;
    }
    require(os.good(), "save_curve: write failed for " + path);
}

int run(CLI::App& app, int argc, char** argv) {
    // ---- gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic try-on dataset");
    long gen_n = 200;
    unsigned gen_seed = 1;
    std::string gen_size = "256x192", gen_out;
    gen->add_option("--n", gen_n, "sample count");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--size", gen_size, "HxW, default 256x192");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->callback([&] {
        auto x = gen_size.find('x');
        require(x != std::string::npos, "gen-synth: size must look like 256x192");
        Index h = static_cast<Index>(std::stol(gen_size.substr(0, x)));
        Index w = static_cast<Index>(std::stol(gen_size.substr(x + 1)));
        save_synth_dataset(gen_synth_dataset(static_cast<Index>(gen_n), gen_seed, h, w), gen_out);
        std::printf("wrote %ld samples to %s\n", gen_n, gen_out.c_str());
    });

    // ---- solve-tps
    auto* stps = app.add_subcommand("solve-tps", "Fit a TPS from point correspondences");
    std::string stps_src, stps_dst, stps_out;
    double stps_reg = 0.0;
    stps->add_option("--src", stps_src, "source points JSON {\"points\": [[x,y]...]}")->required();
    stps->add_option("--dst", stps_dst, "target points JSON")->required();
    stps->add_option("--reg", stps_reg, "solve regularization");
    stps->add_option("--out", stps_out, "coefficients checkpoint")->required();
    stps->callback([&] {
        auto src = load_points(stps_src), dst = load_points(stps_dst);
        save_tps(solve_tps(src, dst, stps_reg), stps_out);
        std::printf("fit %zu correspondences -> %s\n", src.size(), stps_out.c_str());
    });

    // ---- match-sc
    auto* msc = app.add_subcommand("match-sc", "Shape-context match two masks and fit a TPS");
    std::string msc_src, msc_dst, msc_out;
    long msc_points = static_cast<long>(kScDefaultPoints);
    double msc_reg = 1e-4;
    msc->add_option("--src", msc_src, "source mask PNG")->required();
    msc->add_option("--dst", msc_dst, "target mask PNG")->required();
    msc->add_option("--points", msc_points, "boundary points per shape");
    msc->add_option("--reg", msc_reg, "TPS regularization");
    msc->add_option("--out", msc_out, "coefficients checkpoint")->required();
    msc->callback([&] {
        auto coeffs = match_and_fit(load_mask(msc_src), load_mask(msc_dst),
                                    static_cast<Index>(msc_points), msc_reg);
        save_tps(coeffs, msc_out);
        std::printf("matched %ld boundary points -> %s\n", msc_points, msc_out.c_str());
    });

    // ---- build-rep
    auto* rep = app.add_subcommand("build-rep", "Assemble the 22-channel person representation");
    std::string rep_img, rep_kp, rep_body, rep_res, rep_out;
    rep->add_option("--image", rep_img, "person RGB PNG")->required();
    rep->add_option("--keypoints", rep_kp, "keypoints JSON")->required();
    rep->add_option("--body-mask", rep_body, "body mask PNG")->required();
    rep->add_option("--reserved-mask", rep_res, "face/hair mask PNG")->required();
    rep->add_option("--out", rep_out, "representation checkpoint")->required();
    rep->callback([&] {
        PersonInputs in{load_image(rep_img), load_keypoints(rep_kp), load_mask(rep_body),
                        load_mask(rep_res)};
        save_ckpt(rep_out, {{"person_rep", assemble(in).map}});
        std::printf("wrote person representation -> %s\n", rep_out.c_str());
    });

    // ---- train-gmm
    auto* tg = app.add_subcommand("train-gmm", "Train the geometric matcher");
    std::string tg_data, tg_cfg, tg_out, tg_curve;
    tg->add_option("--data", tg_data, "synthetic dataset directory")->required();
    tg->add_option("--config", tg_cfg, "key = value training config")->required();
    tg->add_option("--out", tg_out, "output checkpoint")->required();
    tg->add_option("--curve", tg_curve, "optional loss-curve CSV");
    tg->callback([&] {
        Config cfg = Config::load(tg_cfg);
        TrainConfig tc = train_config_from(cfg);
        auto ds = load_synth_dataset(tg_data);
        auto samples = gmm_training_set(ds, tc.height, tc.width);
        GmmArch arch;
        arch.height = tc.height;
        arch.width = tc.width;
        arch.base = tc.base;
        arch.seed = tc.seed;
        GmmNet<float> net = gmm_init<float>(arch);
        auto result = train_gmm(net, samples, tc, [](long step, double loss) {
            if (step % 100 == 0) std::printf("step %ld  loss %.6f\n", step, loss);
        });
        gmm_save(net, tg_out);
        if (!tg_curve.empty()) save_curve(result.loss_curve, tg_curve);
        std::printf("final loss %.6f -> %s\n", result.loss_curve.back().second, tg_out.c_str());
    });

    // ---- train-tom
    auto* tt = app.add_subcommand("train-tom", "Train the try-on renderer");
    std::string tt_data, tt_cfg, tt_out, tt_curve, tt_variant = "full";
    tt->add_option("--data", tt_data, "synthetic dataset directory")->required();
    tt->add_option("--config", tt_cfg, "key = value training config")->required();
    tt->add_option("--variant", tt_variant, "full | no_mask | no_mask_l1");
    tt->add_option("--out", tt_out, "output checkpoint")->required();
    tt->add_option("--curve", tt_curve, "optional loss-curve CSV");
    tt->callback([&] {
        Config cfg = Config::load(tt_cfg);
        TrainConfig tc = train_config_from(cfg);
        auto ds = load_synth_dataset(tt_data);
        auto samples = tom_training_set(ds, tc.height, tc.width,
                                        cfg.get_int("train_perturb", 0), tc.seed);
        TomArch arch;
        arch.height = tc.height;
        arch.width = tc.width;
        arch.base = tc.base;
        arch.variant = tom_variant_from_string(tt_variant);
        arch.seed = tc.seed;
        TomNet<float> net = tom_init<float>(arch);
        PerceptualNet<float> pnet = perceptual_init<float>();
        TomLossWeights weights;
        weights.l1 = cfg.get_double("lambda_l1", weights.l1);
        weights.vgg = cfg.get_double("lambda_vgg", weights.vgg);
        weights.mask = cfg.get_double("lambda_mask", weights.mask);
        auto result = train_tom(net, pnet, samples, tc, weights, [](long step, double loss) {
            if (step % 100 == 0) std::printf("step %ld  loss %.6f\n", step, loss);
        });
        tom_save(net, tt_out);
        if (!tt_curve.empty()) save_curve(result.loss_curve, tt_curve);
        std::printf("final loss %.6f -> %s\n", result.loss_curve.back().second, tt_out.c_str());
    });

    // ---- warp
    auto* wp = app.add_subcommand("warp", "Warp a garment onto a person representation");
    std::string wp_ckpt, wp_person, wp_cloth, wp_out, wp_grid;
    wp->add_option("--ckpt", wp_ckpt, "matcher checkpoint")->required();
    wp->add_option("--person", wp_person, "person representation checkpoint (build-rep)")
        ->required();
    wp->add_option("--cloth", wp_cloth, "garment PNG")->required();
    wp->add_option("--out", wp_out, "warped garment PNG")->required();
    wp->add_option("--dump-grid", wp_grid, "optional sampling-grid checkpoint");
    wp->callback([&] {
        GmmNet<float> net = gmm_load<float>(wp_ckpt);
        auto named = load_ckpt(wp_person);
        auto it = named.find("person_rep");
        require(it != named.end(), "warp: no person_rep tensor in " + wp_person);
        Tensor<float> person = detail::resize_to(it->second, net.arch.height, net.arch.width);
        Tensor<float> cloth =
            detail::resize_to(load_image(wp_cloth), net.arch.height, net.arch.width);
        Tape<float> tape;
        VarSet<float> vars = leaf_params(tape, net.params, /*trainable=*/false);
        auto fwd = gmm_forward(tape, net, vars, tape.leaf(person), tape.leaf(cloth));
        save_image(tape.val(fwd.warped), wp_out);
        if (!wp_grid.empty()) {
            const Tensor<float>& g = tape.val(fwd.grid);
            Index h = g.dims[1], w = g.dims[2];
            Tensor<float> gx({h, w}), gy({h, w});
            std::copy_n(g.data.begin(), h * w, gx.data.begin());
            std::copy_n(g.data.begin() + static_cast<long>(h * w), h * w, gy.data.begin());
            save_ckpt(wp_grid, {{"grid.x", gx}, {"grid.y", gy}});
        }
        std::printf("wrote %s\n", wp_out.c_str());
    });

    // ---- tryon
    auto* to = app.add_subcommand("tryon", "Full pipeline: match, warp, render, composite");
    std::string to_gmm, to_tom, to_dir, to_cloth, to_out, to_mask;
    to->add_option("--gmm", to_gmm, "matcher checkpoint")->required();
    to->add_option("--tom", to_tom, "renderer checkpoint")->required();
    to->add_option("--person-dir", to_dir,
                   "directory with image.png, keypoints.json, body_mask.png, reserved_mask.png")
        ->required();
    to->add_option("--cloth", to_cloth, "garment PNG")->required();
    to->add_option("--out", to_out, "output PNG")->required();
    to->add_option("--dump-mask", to_mask, "optional composition-mask PNG");
    to->callback([&] {
        GmmNet<float> gnet = gmm_load<float>(to_gmm);
        TomNet<float> tnet = tom_load<float>(to_tom);
        require(gnet.arch.height == tnet.arch.height && gnet.arch.width == tnet.arch.width,
                "tryon: matcher and renderer checkpoints disagree on resolution");
        Index h = gnet.arch.height, w = gnet.arch.width;
        PersonInputs in = load_person_dir(to_dir);
        Tensor<float> person = detail::resize_to(assemble(in).map, h, w);
        Tensor<float> cloth = detail::resize_to(load_image(to_cloth), h, w);

        Tape<float> tape;
        VarSet<float> gvars = leaf_params(tape, gnet.params, /*trainable=*/false);
        auto gfwd = gmm_forward(tape, gnet, gvars, tape.leaf(person), tape.leaf(cloth));
        VarSet<float> tvars = leaf_params(tape, tnet.params, /*trainable=*/false);
        auto tfwd = tom_forward(tape, tnet, tvars, tape.leaf(person), gfwd.warped);
        save_image(tape.val(tfwd.composite), to_out);
        if (!to_mask.empty()) {
            require(tfwd.mask.valid(), "tryon: this renderer variant has no composition mask");
            save_image(tape.val(tfwd.mask), to_mask);
        }
        std::printf("wrote %s\n", to_out.c_str());
    });

    // ---- perturb-eval
    auto* pe = app.add_subcommand("perturb-eval", "Misalignment-robustness study");
    std::string pe_cfg, pe_out;
    pe->add_option("--config", pe_cfg, "key = value experiment config")->required();
    pe->add_option("--out", pe_out, "report CSV")->required();
    pe->callback([&] {
        Config cfg = Config::load(pe_cfg);
        auto ds = load_synth_dataset(cfg.get_str("data"));
        long n_eval = cfg.get_int("n_eval", 20);
        unsigned seed = static_cast<unsigned>(cfg.get_int("seed", 1));
        std::vector<std::pair<std::string, TomNet<float>>> nets;
        for (const char* name : {"full", "no_mask", "no_mask_l1"}) {
            std::string key = std::string("tom_") + name;
            if (cfg.has(key)) nets.emplace_back(name, tom_load<float>(cfg.get_str(key)));
        }
        require(!nets.empty(), "perturb-eval: config names no tom_* checkpoints");
        Index h = nets.front().second.arch.height, w = nets.front().second.arch.width;
        auto samples = eval_set(ds, h, w);
        if (static_cast<long>(samples.size()) > n_eval)
            samples.resize(static_cast<size_t>(n_eval));
        std::vector<std::pair<std::string, const TomNet<float>*>> variants;
        for (auto& [name, net] : nets) variants.emplace_back(name, &net);
        PerceptualNet<float> pnet = perceptual_init<float>();
        ExperimentReport report =
            robustness_experiment(variants, {0, 5, 10, 15, 20}, samples, pnet, seed);
        report.save(pe_out);
        std::printf("wrote %zu rows -> %s\n", report.rows.size(), pe_out.c_str());
    });

    // ---- split-tv
    auto* sp = app.add_subcommand("split-tv", "Split garments into LARGE/SMALL by TV norm");
    std::string sp_dir, sp_out;
    long sp_k = 50;
    sp->add_option("--dir", sp_dir, "directory of garment PNGs")->required();
    sp->add_option("--k", sp_k, "pairs per side");
    sp->add_option("--out", sp_out, "split JSON")->required();
    sp->callback([&] {
        std::vector<std::pair<std::string, double>> garments;
        for (const auto& entry : std::filesystem::directory_iterator(sp_dir)) {
            if (entry.path().extension() != ".png") continue;
            garments.emplace_back(entry.path().filename().string(),
                                  tv_norm(load_image(entry.path().string())));
        }
        TvSplit split = split_tv(std::move(garments), static_cast<Index>(sp_k));
        nlohmann::json j;
        j["large"] = split.large;
        j["small"] = split.small;
        std::ofstream os(sp_out, std::ios::binary);
        require(os.good(), "split-tv: cannot open " + sp_out);
        os << j.dump(2) << "\n";
        std::printf("wrote %ldx2 names -> %s\n", sp_k, sp_out.c_str());
    });

    // ---- grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient verification");
    unsigned gc_seed = 7;
    gc->add_option("--seed", gc_seed, "RNG seed");
    bool gc_failed = false;
    gc->callback([&] {
        GradCheckReport report = grad_check_suite(gc_seed);
        for (const auto& e : report.entries)
            std::printf("%-24s %.3e\n", e.name.c_str(), e.max_rel_err);
        std::printf("max relative error: %.3e\n", report.max_rel_err());
        gc_failed = report.max_rel_err() >= 1e-4;
    });

    app.require_subcommand(1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::printf("%s", app.help().c_str());
        return 0;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
        return 1;
    }
    return gc_failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"warpkit: desk-scale garment try-on pipeline"};
    try {
        return run(app, argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
