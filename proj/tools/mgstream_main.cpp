#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgs/binio.hpp"
#include "mgs/config.hpp"
#include "mgs/errors.hpp"
#include "mgs/io.hpp"
#include "mgs/metrics.hpp"
#include "mgs/rasterizer.hpp"
#include "mgs/scenesim.hpp"
#include "mgs/stream.hpp"
#include "mgs/threads.hpp"

namespace fs = std::filesystem;

namespace {

void cmd_scene_gen(const std::string& name, const std::string& outdir) {
    std::vector<mgs::SceneSpec> specs;
    if (name == "all")
        specs = mgs::standard_scenes();
    else
        specs.push_back(mgs::standard_scene(name));
    for (const auto& spec : specs) {
        std::string dir = name == "all" ? (fs::path(outdir) / spec.name).string() : outdir;
        mgs::GroundTruth gt = mgs::build_scene(spec);
        mgs::export_scene(gt, dir);
        std::printf("scene %s: %zu gaussians, %d frames, %d views -> %s\n", spec.name.c_str(),
                    gt.sets[0].size(), spec.frames, spec.rig.cameras, dir.c_str());
    }
}

void cmd_fit(const std::string& dir, int iters, int count, uint64_t seed,
             const std::string& out) {
    mgs::GroundTruth gt = mgs::load_scene_dir(dir);
    std::vector<mgs::Image> frames(gt.renders[0].begin() + 1, gt.renders[0].end());
    std::vector<mgs::Camera> cams(gt.cams.begin() + 1, gt.cams.end());
    mgs::GaussianSet set = mgs::fit_frame0(frames, cams, iters, count, seed);
    std::string path = out.empty() ? (fs::path(dir) / "fit0.mgsply").string() : out;
    mgs::save_gaussians(path, set);
    double held = mgs::psnr(mgs::render(set, gt.cams[0]).rgb, gt.renders[0][0]);
    std::printf("fit %d gaussians, %d iters: held-out psnr %.3f dB -> %s\n", count, iters, held,
                path.c_str());
}

void cmd_stream(const std::string& dir, const std::string& config_path, const std::string& out) {
    mgs::PipelineConfig cfg;
    if (!config_path.empty()) cfg = mgs::load_config(config_path);
    mgs::GroundTruth gt = mgs::load_scene_dir(dir);
    std::string out_dir = !out.empty()           ? out
                          : !cfg.out_dir.empty() ? cfg.out_dir
                                                 : (fs::path(dir) / "stream").string();
    mgs::StreamReport rep = mgs::run_stream(gt, cfg, out_dir);
    std::printf("stream %s: %zu frames, %" PRIu64 " delta bytes, ewarp %.6g -> %s\n",
                gt.spec.name.c_str(), rep.frames.size() + 1, rep.bytes_deltas, rep.ewarp_total,
                out_dir.c_str());
}

void cmd_render(const std::string& set_path, const std::string& cam_path, const std::string& out,
                int view) {
    mgs::GaussianSet set = mgs::load_gaussians(set_path);
    std::vector<mgs::Camera> cams = mgs::load_cameras_json(cam_path);
    if (view < 0 || size_t(view) >= cams.size())
        throw mgs::ConfigError("view index " + std::to_string(view) + " out of range (have " +
                               std::to_string(cams.size()) + " cameras)");
    mgs::Image img = mgs::render(set, cams[size_t(view)]).rgb;
    mgs::save_png_rgb8(out, img);
    std::printf("rendered %zu gaussians at view %d -> %s\n", set.size(), view, out.c_str());
}

void cmd_eval(const std::string& dir, const std::string& stream_dir_opt) {
    mgs::GroundTruth gt = mgs::load_scene_dir(dir);
    std::string sdir =
        stream_dir_opt.empty() ? (fs::path(dir) / "stream").string() : stream_dir_opt;
    std::vector<mgs::GaussianSet> sets = mgs::replay_stream(sdir);

    nlohmann::json j;
    j["frames"] = nlohmann::json::array();
    std::vector<mgs::Image> held;
    held.reserve(sets.size());
    for (size_t t = 0; t < sets.size(); ++t)
        held.push_back(mgs::render(sets[t], gt.cams[0]).rgb);
    for (size_t t = 0; t < sets.size(); ++t) {
        if (t >= size_t(gt.spec.frames)) break;
        double full = mgs::psnr(held[t], gt.renders[t][0]);
        const mgs::BoolMask& dyn = gt.dyn_mask[t][0];
        double dynp = dyn.count() > 0 ? mgs::psnr(held[t], gt.renders[t][0], &dyn)
                                      : std::numeric_limits<double>::infinity();
        nlohmann::json jf;
        jf["frame"] = t;
        jf["psnr_full"] = std::isfinite(full) ? nlohmann::json(full) : nlohmann::json("inf");
        jf["psnr_dyn"] = std::isfinite(dynp) ? nlohmann::json(dynp) : nlohmann::json("inf");
        j["frames"].push_back(std::move(jf));
        std::printf("frame %zu: psnr_full %.3f, psnr_dyn %.3f\n", t, full, dynp);
    }
    if (sets.size() >= 2 && sets.size() <= size_t(gt.spec.frames)) {
        std::vector<mgs::FlowField> fprev, fzero;
        std::vector<mgs::BoolMask> mprev, mzero;
        for (size_t t = 1; t < sets.size(); ++t) {
            fprev.push_back(gt.flow_bwd[t - 1][0]);
            fzero.push_back(gt.flow_bwd0[t - 1][0]);
            mprev.push_back(gt.vis_bwd[t - 1][0]);
            mzero.push_back(gt.vis_bwd0[t - 1][0]);
        }
        mgs::WarpReport wr = mgs::e_warp(held, fprev, fzero, mprev, mzero);
        j["ewarp_total"] = wr.total;
        std::printf("ewarp_total %.6g\n", wr.total);
    }
    mgs::write_file_atomic((fs::path(sdir) / "eval.json").string(), j.dump(2) + "\n");
}

} // namespace

int main(int argc, char** argv) {
    mgs::init_threads_from_env();

    CLI::App app{"streamable dynamic-scene gaussian splatting pipeline"};
    app.require_subcommand(1);

    auto* scene = app.add_subcommand("scene", "scene generation");
    scene->require_subcommand(1);
    auto* gen = scene->add_subcommand("gen", "build a standard scene and export ground truth");
    std::string gen_name, gen_out;
    gen->add_option("name", gen_name, "static | mover | two-movers-static-between | emerging | all")
        ->required();
    gen->add_option("outdir", gen_out, "output directory")->required();

    auto* fit = app.add_subcommand("fit", "fit a frame-0 model on the training views");
    std::string fit_dir, fit_out;
    int fit_iters = 2000, fit_count = 200;
    uint64_t fit_seed = 7;
    fit->add_option("dir", fit_dir, "scene directory")->required();
    fit->add_option("--iters", fit_iters, "optimization iterations");
    fit->add_option("--count", fit_count, "number of gaussians");
    fit->add_option("--seed", fit_seed, "init seed");
    fit->add_option("--out", fit_out, "output path (default <dir>/fit0.mgsply)");

    auto* st = app.add_subcommand("stream", "run the per-frame training stream");
    std::string st_dir, st_config, st_out;
    st->add_option("dir", st_dir, "scene directory")->required();
    st->add_option("--config", st_config, "key=value config file");
    st->add_option("--out", st_out, "output directory (default <dir>/stream)");

    auto* rd = app.add_subcommand("render", "render a gaussian set to PNG");
    std::string rd_set, rd_cams, rd_png;
    int rd_view = 0;
    rd->add_option("gaussians", rd_set, "MGSPLY1 file")->required();
    rd->add_option("camera", rd_cams, "cameras.json")->required();
    rd->add_option("out", rd_png, "output PNG")->required();
    rd->add_option("--view", rd_view, "camera index");

    auto* ev = app.add_subcommand("eval", "replay a stream and recompute metrics");
    std::string ev_dir, ev_stream;
    ev->add_option("dir", ev_dir, "scene directory")->required();
    ev->add_option("--stream", ev_stream, "stream directory (default <dir>/stream)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) cmd_scene_gen(gen_name, gen_out);
        if (fit->parsed()) cmd_fit(fit_dir, fit_iters, fit_count, fit_seed, fit_out);
        if (st->parsed()) cmd_stream(st_dir, st_config, st_out);
        if (rd->parsed()) cmd_render(rd_set, rd_cams, rd_png, rd_view);
        if (ev->parsed()) cmd_eval(ev_dir, ev_stream);
    } catch (const mgs::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const mgs::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const mgs::TrainingDivergence& e) {
        std::fprintf(stderr, "training divergence: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
