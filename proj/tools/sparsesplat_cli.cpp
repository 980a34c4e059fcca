// sparsesplat command-line driver: synth | init | train | render | eval.

#include "sparsesplat/camera.hpp"
#include "sparsesplat/error.hpp"
#include "sparsesplat/features.hpp"
#include "sparsesplat/image.hpp"
#include "sparsesplat/initializer.hpp"
#include "sparsesplat/metrics.hpp"
#include "sparsesplat/parallel.hpp"
#include "sparsesplat/ply.hpp"
#include "sparsesplat/rasterizer.hpp"
#include "sparsesplat/synthetic.hpp"
#include "sparsesplat/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace sparsesplat;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("MCGS_SEED");
    if (s == nullptr || *s == '\0') {
        return std::nullopt;
    }
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') {
        throw Error(ErrorCode::InvalidArgument, std::string("MCGS_SEED is not an unsigned integer: ") + s);
    }
    return v;
}

std::vector<double> parse_doubles(const std::string& text, std::size_t expected, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, std::string("bad number in ") + what + ": '" + item + "'");
        }
    }
    if (out.size() != expected) {
        throw Error(ErrorCode::ParseError,
                    std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
    }
    return out;
}

void write_depth_raw(const fs::path& path, const RenderOutput& out) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    const std::uint32_t h = static_cast<std::uint32_t>(out.height);
    const std::uint32_t w = static_cast<std::uint32_t>(out.width);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    for (double d : out.depth_normalized) {
        const float v = static_cast<float>(d);
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    if (!f) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

std::string view_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%03d", id);
    return buf;
}

struct SynthArgs {
    std::string preset = "cluster";
    int gaussians = 100;
    int views = 8;
    int heldout = -1;
    int width = 64;
    int height = 64;
    int sh_degree = 1;
    int matches = 200;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    SceneOptions opt;
    opt.preset = parse_scene_preset(a.preset);
    opt.n_gaussians = a.gaussians;
    opt.n_views = a.views;
    opt.n_heldout = a.heldout;
    opt.width = a.width;
    opt.height = a.height;
    opt.sh_degree = a.sh_degree;
    opt.seed = env_seed().value_or(a.seed);
    const SyntheticScene scene = make_scene(opt);
    const CorrespondenceSet matches = generate_matches(scene, a.matches, a.noise, opt.seed + 1);
    write_dataset(a.out, scene, matches);
    std::cout << "views=" << scene.views.size() << " heldout=" << scene.heldout.size()
              << " gaussians=" << scene.gt_field.size() << " matches=" << matches.size() << '\n';
    return 0;
}

struct InitArgs {
    std::string cameras;
    std::string matches;
    std::string out;
    bool filter_outliers = false;
    int outlier_k = 8;
    double outlier_std = 2.0;
    int fill = -1;
    int resolution = 32;
    std::string bbox;
    bool no_sparse_init = false;
    std::uint64_t seed = 0;
};

int run_init(const InitArgs& a) {
    const auto views = load_cameras(a.cameras, true);
    const CorrespondenceSet matches = read_matches(a.matches);
    PointCloudSeed cloud = build_seed_cloud(matches, views);
    if (a.filter_outliers) {
        cloud = filter_outliers(cloud, a.outlier_k, a.outlier_std);
    }
    BoundingBox box;
    if (!a.bbox.empty()) {
        const auto v = parse_doubles(a.bbox, 6, "--bbox");
        box.min = {v[0], v[1], v[2]};
        box.max = {v[3], v[4], v[5]};
    } else if (const auto b = matched_bounds(cloud, 0.1)) {
        box = *b;
    } else {
        box = camera_bounds(views);
    }
    if (a.no_sparse_init) {
        cloud = PointCloudSeed{};
    }
    const int n_fill = a.fill < 0 ? default_fill_count(views.size()) : a.fill;
    if (n_fill > 0) {
        cloud = random_fill(cloud, box, n_fill, a.resolution, env_seed().value_or(a.seed));
    }
    write_seed_ply(a.out, cloud);
    std::cout << "matched=" << cloud.count(PointSource::Matched) << " filled=" << cloud.count(PointSource::Filled)
              << '\n';
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string seed_ply;
    std::string config;
    std::string out;
    std::string features;
    std::string preset;
    bool no_mvc_prune = false;
    bool no_eadr = false;
    long total_iters = -1;
    long checkpoint_every = 0;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    TrainConfig config;
    if (!a.preset.empty()) {
        config = TrainConfig::for_preset(parse_train_preset(a.preset));
    }
    if (!a.config.empty()) {
        config = load_config_file(a.config, config);
    }
    if (a.total_iters >= 0) {
        config.total_iters = a.total_iters;
    }
    if (a.seed) {
        config.rng_seed = *a.seed;
    }
    if (const auto s = env_seed()) {
        config.rng_seed = *s;
    }
    if (a.no_mvc_prune) {
        config.mvc_prune = false;
    }
    if (a.no_eadr) {
        config.eadr = false;
    }
    config.validate();

    const fs::path data(a.data);
    const fs::path cams = fs::is_directory(data) ? data / "cameras.json" : data;
    const auto views = load_cameras(cams, true);
    const PointCloudSeed seed = read_seed_ply(a.seed_ply);

    FeatureStack features;
    if (config.mvc_prune) {
        features = a.features.empty() ? pyramid_feature_stack(views, config.level_dims)
                                      : read_feature_stack(a.features);
        features.validate();
        for (const auto& v : views) {
            const FeatureMap& map = features.for_view(v.view_id);
            if (map.width != v.width || map.height != v.height) {
                throw Error(ErrorCode::FeatureViewMismatch,
                            "feature map size differs from view " + std::to_string(v.view_id));
            }
        }
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    TrainState state = init_state(seed, views, config);
    train(state, views, config.mvc_prune ? &features : nullptr, config,
          [&](const TrainState& s, const LossBreakdown& loss) {
              if (a.checkpoint_every > 0 && s.iter % a.checkpoint_every == 0) {
                  save_checkpoint(out / ("checkpoint_" + std::to_string(s.iter)), s);
              }
              if (!a.quiet && (s.iter % 500 == 0 || s.iter == config.total_iters)) {
                  std::cerr << "iter " << s.iter << " loss " << loss.total << " gaussians " << s.field.size() << '\n';
              }
          });

    write_loss_csv(out / "loss.csv", state.history);
    {
        std::ofstream ev(out / "events.csv");
        ev << "iter,event,prune_step,tau,before,after\n";
        for (const auto& e : state.events) {
            ev << e.iter << ',' << to_string(e.kind) << ',' << e.prune_step << ',' << e.tau << ',' << e.before << ','
               << e.after << '\n';
        }
    }
    save_checkpoint(out / "final", state);
    const double final_loss = state.history.empty() ? 0.0 : state.history.back().loss.total;
    std::cout << "iters=" << state.iter << " n_gaussians=" << state.field.size() << " final_loss=" << final_loss
              << '\n';
    return 0;
}

struct RenderArgs {
    std::string checkpoint;
    std::string cameras;
    std::string out;
    std::optional<int> view;
    std::string background = "0,0,0";
};

int run_render(const RenderArgs& a) {
    const GaussianField field = load_checkpoint_field(a.checkpoint);
    const auto views = load_cameras(a.cameras, false);
    const auto bg = parse_doubles(a.background, 3, "--background");
    if (a.view) {
        (void)find_view(views, *a.view);
    }
    const fs::path out(a.out);
    fs::create_directories(out);
    for (const auto& v : views) {
        if (a.view && v.view_id != *a.view) {
            continue;
        }
        const RenderOutput r = render(field, v, {bg[0], bg[1], bg[2]});
        const std::string name = view_name(v.view_id);
        write_png_rgb8(out / (name + ".png"), r.color_image());
        Image depth = r.depth_image(true);
        double max_depth = 0.0;
        for (double d : depth.data) {
            max_depth = std::max(max_depth, d);
        }
        if (max_depth > 0.0) {
            for (double& d : depth.data) {
                d /= max_depth;
            }
        }
        write_png_gray16(out / (name + "_depth.png"), depth);
        write_depth_raw(out / (name + "_depth.bin"), r);
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string cameras;
    std::string masks;
    std::string out;
    int fps_renders = 100;
    std::string background = "0,0,0";
};

int run_eval(const EvalArgs& a) {
    const GaussianField field = load_checkpoint_field(a.checkpoint);
    fs::path cams(a.cameras);
    if (fs::is_directory(cams)) {
        cams = fs::exists(cams / "heldout" / "cameras.json") ? cams / "heldout" / "cameras.json" : cams / "cameras.json";
    }
    const auto views = load_cameras(cams, true);
    const auto bgv = parse_doubles(a.background, 3, "--background");
    const Eigen::Vector3d bg(bgv[0], bgv[1], bgv[2]);

    nlohmann::json report;
    report["checkpoint"] = a.checkpoint;
    report["n_gaussians"] = field.size();
    nlohmann::json per_view = nlohmann::json::array();
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    for (const auto& v : views) {
        const Image rendered = render(field, v, bg).color_image();
        std::vector<bool> mask;
        const std::vector<bool>* mask_ptr = nullptr;
        if (!a.masks.empty()) {
            const fs::path mp = fs::path(a.masks) / (view_name(v.view_id) + ".png");
            if (fs::exists(mp)) {
                int w = 0;
                int h = 0;
                mask = read_png_mask(mp, w, h);
                if (w != v.width || h != v.height) {
                    throw Error(ErrorCode::ShapeMismatch, "mask " + mp.string() + " does not match its view");
                }
                mask_ptr = &mask;
            }
        }
        const double p = psnr(rendered, v.image, mask_ptr);
        const double s = ssim(rendered, v.image, mask_ptr);
        psnr_sum += p;
        ssim_sum += s;
        per_view.push_back({{"view_id", v.view_id}, {"psnr", p}, {"ssim", s}, {"masked", mask_ptr != nullptr}});
    }
    const double n = views.empty() ? 1.0 : static_cast<double>(views.size());
    report["views"] = per_view;
    report["mean_psnr"] = psnr_sum / n;
    report["mean_ssim"] = ssim_sum / n;

    double fps = 0.0;
    if (!views.empty() && a.fps_renders > 0) {
        (void)render(field, views.front(), bg);
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < a.fps_renders; ++i) {
            (void)render(field, views[static_cast<std::size_t>(i) % views.size()], bg);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        fps = secs > 0.0 ? a.fps_renders / secs : 0.0;
    }
    report["fps"] = fps;
    report["fps_renders"] = a.fps_renders;
    report["threads"] = num_threads();
    report["lpips"] = nullptr;
    report["notes"] = "LPIPS not computed: it requires a pretrained network; compare on PSNR/SSIM only";

    const std::string text = report.dump(2);
    if (a.out.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream f(a.out);
        f << text << '\n';
        if (!f) {
            throw Error(ErrorCode::IoError, "cannot write " + a.out);
        }
        std::cout << "mean_psnr=" << report["mean_psnr"].get<double>()
                  << " mean_ssim=" << report["mean_ssim"].get<double>() << " n_gaussians=" << field.size() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-view Gaussian splatting trainer"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
    s->add_option("--preset", synth.preset, "cluster | plane | shell")->capture_default_str();
    s->add_option("--gaussians", synth.gaussians)->capture_default_str();
    s->add_option("--views", synth.views)->capture_default_str();
    s->add_option("--heldout", synth.heldout, "Held-out views (default: same as --views)");
    s->add_option("--width", synth.width)->capture_default_str();
    s->add_option("--height", synth.height)->capture_default_str();
    s->add_option("--sh-degree", synth.sh_degree)->capture_default_str();
    s->add_option("--matches", synth.matches)->capture_default_str();
    s->add_option("--noise", synth.noise, "Pixel noise std of the matches")->capture_default_str();
    s->add_option("--seed", synth.seed)->capture_default_str();
    s->add_option("--out", synth.out)->required();

    InitArgs init;
    auto* in = app.add_subcommand("init", "Build the seed point cloud");
    in->add_option("--cameras", init.cameras)->required();
    in->add_option("--matches", init.matches)->required();
    in->add_option("--out", init.out)->required();
    in->add_flag("--filter-outliers", init.filter_outliers);
    in->add_option("--outlier-k", init.outlier_k)->capture_default_str();
    in->add_option("--outlier-std", init.outlier_std)->capture_default_str();
    in->add_option("--fill", init.fill, "Random fill candidates (default 10*views*100, max 5000)");
    in->add_option("--resolution", init.resolution)->capture_default_str();
    in->add_option("--bbox", init.bbox, "xmin,ymin,zmin,xmax,ymax,zmax");
    in->add_flag("--no-sparse-init", init.no_sparse_init, "Drop the triangulated points");
    in->add_option("--seed", init.seed)->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Optimize a Gaussian field");
    t->add_option("--data", tr.data, "Dataset directory or cameras.json")->required();
    t->add_option("--seed-ply", tr.seed_ply)->required();
    t->add_option("--out", tr.out)->required();
    t->add_option("--config", tr.config, "key = value config file");
    t->add_option("--preset", tr.preset, "forward_facing | panoramic");
    t->add_option("--features", tr.features, "Feature-stack file replacing the built-in provider");
    t->add_flag("--no-mvc-prune", tr.no_mvc_prune);
    t->add_flag("--no-eadr", tr.no_eadr);
    t->add_option("--total-iters", tr.total_iters);
    t->add_option("--checkpoint-every", tr.checkpoint_every);
    t->add_option("--seed", tr.seed);
    t->add_flag("--quiet", tr.quiet);

    RenderArgs rd;
    auto* r = app.add_subcommand("render", "Render a checkpoint");
    r->add_option("--checkpoint", rd.checkpoint)->required();
    r->add_option("--cameras", rd.cameras)->required();
    r->add_option("--out", rd.out)->required();
    r->add_option("--view", rd.view, "Render only this view id");
    r->add_option("--background", rd.background)->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a checkpoint on held-out views");
    e->add_option("--checkpoint", ev.checkpoint)->required();
    e->add_option("--cameras", ev.cameras, "Held-out cameras.json or dataset directory")->required();
    e->add_option("--masks", ev.masks, "Directory of view_XXX.png masks");
    e->add_option("--out", ev.out, "JSON report path (stdout when absent)");
    e->add_option("--fps-renders", ev.fps_renders)->capture_default_str();
    e->add_option("--background", ev.background)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) {
            return app.exit(err);
        }
        std::cerr << "error: invalid_argument: " << err.what() << '\n';
        return 2;
    }

    try {
        set_num_threads(threads);
        if (s->parsed()) return run_synth(synth);
        if (in->parsed()) return run_init(init);
        if (t->parsed()) return run_train(tr);
        if (r->parsed()) return run_render(rd);
        if (e->parsed()) return run_eval(ev);
    } catch (const Error& err) {
        std::cerr << "error: " << to_string(err.code()) << ": " << err.what() << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: internal: " << err.what() << '\n';
        return 1;
    }
    return 1;
}
