#include "mgs/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "mgs/binio.hpp"
#include "mgs/errors.hpp"
#include "mgs/io.hpp"
#include "mgs/metrics.hpp"
#include "mgs/rasterizer.hpp"
#include "mgs/rng.hpp"

namespace fs = std::filesystem;

namespace mgs {
namespace {

using nlohmann::json;

json finite_or_inf(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

std::string delta_name(int t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "delta_%04d.mgsdlt", t);
    return buf;
}

// Every 10th iteration plus the last, for the per-frame logs.
json sampled_losses(const std::vector<double>& losses) {
    json arr = json::array();
    for (size_t i = 0; i < losses.size(); ++i)
        if (i % 10 == 0 || i + 1 == losses.size())
            arr.push_back(json::array({i, losses[i]}));
    return arr;
}

json config_to_json(const PipelineConfig& c) {
    json j;
    j["flow_tau"] = c.flow_tau;
    j["diff_thresh"] = c.diff_thresh;
    j["morph_kernel"] = c.morph_kernel;
    j["eps"] = c.eps;
    j["min_samples"] = c.min_samples;
    j["use_clustering"] = c.use_clustering;
    j["top_n"] = c.top_n;
    j["deform_iters"] = c.deform_iters;
    j["optim_iters"] = c.optim_iters;
    j["lambda"] = c.lambda;
    j["percentile"] = c.percentile;
    j["lr_grid"] = c.lr_grid;
    j["lr_mlp"] = c.lr_mlp;
    j["seed"] = c.seed;
    j["flow_source"] = c.flow_source;
    j["lk_levels"] = c.lk_levels;
    return j;
}

void write_report(const std::string& out_dir, const GroundTruth& gt, const PipelineConfig& cfg,
                  const StreamReport& rep) {
    json j;
    j["scene"] = gt.spec.name;
    j["config"] = config_to_json(cfg);
    j["frames"] = json::array();
    for (const FrameRecord& r : rep.frames) {
        json jf;
        jf["frame"] = r.frame;
        jf["psnr_full"] = finite_or_inf(r.psnr_full);
        jf["psnr_dyn"] = finite_or_inf(r.psnr_dyn);
        jf["gm"] = r.gm;
        jf["gnew"] = r.gnew;
        jf["bytes"] = r.bytes;
        jf["epair_prev"] = r.epair_prev;
        jf["epair_zero"] = r.epair_zero;
        j["frames"].push_back(std::move(jf));
    }
    j["ewarp_total"] = rep.ewarp_total;
    j["bytes_deltas"] = rep.bytes_deltas;
    j["bytes_with_frame0"] = rep.bytes_with_frame0;
    write_file_atomic((fs::path(out_dir) / "report.json").string(), j.dump(2) + "\n");

    std::string csv = "frame,psnr_full,psnr_dyn,gm,gnew,bytes,epair_prev,epair_zero\n";
    char buf[256];
    for (const FrameRecord& r : rep.frames) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%lld,%lld,%llu,%.9g,%.9g\n", r.frame,
                      r.psnr_full, r.psnr_dyn, (long long)r.gm, (long long)r.gnew,
                      (unsigned long long)r.bytes, r.epair_prev, r.epair_zero);
        csv += buf;
    }
    write_file_atomic((fs::path(out_dir) / "report.csv").string(), csv);
}

} // namespace

StreamReport run_stream(const GroundTruth& gt, const PipelineConfig& cfg,
                        const std::string& out_dir) {
    const int T = gt.spec.frames;
    const int V = gt.spec.rig.cameras;
    if (V < 2) throw ContractViolation("stream needs a held-out view plus training views");
    fs::create_directories(fs::path(out_dir) / "logs");

    std::vector<Camera> cams_train(gt.cams.begin() + 1, gt.cams.end());
    GaussianSet model = cfg.model_init.empty() ? gt.sets[0] : load_gaussians(cfg.model_init);
    save_gaussians((fs::path(out_dir) / "frame0.mgsply").string(), model);

    TrainConfig tc = cfg.train_config();
    StreamReport rep;
    rep.out_dir = out_dir;

    std::vector<Image> held(static_cast<size_t>(T));
    held[0] = render(model, gt.cams[0]).rgb;
    std::vector<double> seconds;

    for (int t = 1; t < T; ++t) {
        std::vector<Image> frames_t, frames_prev;
        std::vector<FlowField> flows;
        frames_t.reserve(V - 1);
        frames_prev.reserve(V - 1);
        flows.reserve(V - 1);
        for (int v = 1; v < V; ++v) {
            frames_t.push_back(gt.renders[size_t(t)][size_t(v)]);
            frames_prev.push_back(gt.renders[size_t(t - 1)][size_t(v)]);
            if (cfg.flow_source == "gt")
                flows.push_back(gt.flow_fwd[size_t(t - 1)][size_t(v)]);
            else
                flows.push_back(
                    estimate_flow(frames_prev.back(), frames_t.back(), cfg.lk_levels));
        }

        FrameResult fr = process_frame(model, t, frames_t, frames_prev, flows, cams_train, tc);

        std::string dpath = (fs::path(out_dir) / delta_name(t)).string();
        save_delta(dpath, fr.delta);

        FrameRecord rec;
        rec.frame = t;
        rec.gm = int64_t(fr.g_m.size());
        rec.gnew = int64_t(fr.g_new.size());
        rec.bytes = uint64_t(fs::file_size(dpath));
        held[size_t(t)] = render(fr.set, gt.cams[0]).rgb;
        rec.psnr_full = psnr(held[size_t(t)], gt.renders[size_t(t)][0]);
        const BoolMask& dyn = gt.dyn_mask[size_t(t)][0];
        rec.psnr_dyn = dyn.count() > 0 ? psnr(held[size_t(t)], gt.renders[size_t(t)][0], &dyn)
                                       : std::numeric_limits<double>::infinity();
        rep.frames.push_back(rec);
        rep.bytes_deltas += rec.bytes;
        seconds.push_back(fr.seconds);

        json log;
        log["frame"] = t;
        log["gm"] = rec.gm;
        log["gnew"] = rec.gnew;
        log["deform_losses"] = sampled_losses(fr.deform_losses);
        log["optim_losses"] = sampled_losses(fr.optim_losses);
        char lname[64];
        std::snprintf(lname, sizeof lname, "log_%04d.json", t);
        write_file_atomic((fs::path(out_dir) / "logs" / lname).string(), log.dump(2) + "\n");

        model = fr.set;
    }

    // Temporal consistency of the held-out renders under the exact flows.
    if (T >= 2) {
        std::vector<FlowField> fprev, fzero;
        std::vector<BoolMask> mprev, mzero;
        for (int t = 1; t < T; ++t) {
            fprev.push_back(gt.flow_bwd[size_t(t - 1)][0]);
            fzero.push_back(gt.flow_bwd0[size_t(t - 1)][0]);
            mprev.push_back(gt.vis_bwd[size_t(t - 1)][0]);
            mzero.push_back(gt.vis_bwd0[size_t(t - 1)][0]);
        }
        WarpReport wr = e_warp(held, fprev, fzero, mprev, mzero);
        rep.ewarp_total = wr.total;
        for (int t = 1; t < T; ++t) {
            rep.frames[size_t(t - 1)].epair_prev = wr.epair_prev[size_t(t - 1)];
            rep.frames[size_t(t - 1)].epair_zero = wr.epair_zero[size_t(t - 1)];
        }
    }

    rep.bytes_with_frame0 =
        rep.bytes_deltas + uint64_t(fs::file_size(fs::path(out_dir) / "frame0.mgsply"));
    write_report(out_dir, gt, cfg, rep);

    json jt;
    jt["frame_seconds"] = seconds;
    double total = 0;
    for (double s : seconds) total += s;
    jt["total_seconds"] = total;
    write_file_atomic((fs::path(out_dir) / "timings.json").string(), jt.dump(2) + "\n");
    return rep;
}

std::vector<GaussianSet> replay_stream(const std::string& out_dir) {
    std::vector<GaussianSet> out;
    out.push_back(load_gaussians((fs::path(out_dir) / "frame0.mgsply").string()));
    for (int t = 1;; ++t) {
        fs::path p = fs::path(out_dir) / delta_name(t);
        if (!fs::exists(p)) break;
        FrameDelta d = load_delta(p.string());
        if (d.frame_index != t)
            throw FormatError(p.string() + ": frame index " + std::to_string(d.frame_index) +
                              ", expected " + std::to_string(t));
        out.push_back(apply_delta(out.back(), d));
    }
    return out;
}

GaussianSet fit_frame0(const std::vector<Image>& frames, const std::vector<Camera>& cams,
                       int iters, int count, uint64_t seed, double lambda) {
    if (cams.size() < 2) throw ContractViolation("fit_frame0 needs at least 2 views");
    if (frames.size() != cams.size())
        throw ContractViolation("fit_frame0: one image per camera required");
    if (count < 1 || iters < 0) throw ContractViolation("fit_frame0: bad count/iters");

    // Candidate box: camera rays sampled between 30% and 130% of each
    // camera's distance to the world origin (the rigs look at the origin).
    std::vector<Vec3> ray_points;
    for (const Camera& cam : cams) {
        Vec3 c = cam.center();
        // Rows of R are the camera axes in world coordinates.
        Vec3 fwd{cam.R.m[6], cam.R.m[7], cam.R.m[8]};
        double d0 = c.norm();
        ray_points.push_back(c + fwd * (0.3 * d0));
        ray_points.push_back(c + fwd * (1.3 * d0));
    }
    Aabb box;
    box.min = box.max = ray_points[0];
    for (const Vec3& p : ray_points) box.expand(p);
    Vec3 ext = box.extent();
    box.min -= ext * 0.25;
    box.max += ext * 0.25;

    Rng rng(seed);
    auto visible_everywhere = [&](const Vec3& p) {
        for (const Camera& cam : cams) {
            Vec3 pc = cam.to_camera(p);
            if (pc.z < 0.5) return false;
            Vec2 px = cam.project(p);
            if (px.x < 0 || px.y < 0 || px.x > cam.width - 1 || px.y > cam.height - 1)
                return false;
        }
        return true;
    };

    const int n = count;
    std::vector<double> pos(size_t(n) * 3), qrot(size_t(n) * 4), lgo(size_t(n), 0.0),
        sh(size_t(n) * 12);
    std::vector<float> scale(size_t(n) * 3);
    long attempts = 0, placed = 0;
    const long max_attempts = 20000L * n;
    while (placed < n) {
        if (++attempts > max_attempts)
            throw ContractViolation("fit_frame0: camera frustums share too little volume");
        Vec3 p{rng.uniform(box.min.x, box.max.x), rng.uniform(box.min.y, box.max.y),
               rng.uniform(box.min.z, box.max.z)};
        if (!visible_everywhere(p)) continue;
        size_t i = size_t(placed);
        pos[i * 3 + 0] = p.x;
        pos[i * 3 + 1] = p.y;
        pos[i * 3 + 2] = p.z;
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double qn = q.norm();
        if (qn < 1e-9) q = {1, 0, 0, 0}, qn = 1;
        qrot[i * 4 + 0] = q.w / qn;
        qrot[i * 4 + 1] = q.x / qn;
        qrot[i * 4 + 2] = q.y / qn;
        qrot[i * 4 + 3] = q.z / qn;
        for (int k = 0; k < 3; ++k) scale[i * 3 + k] = float(0.22 * (0.75 + 0.5 * rng.uniform()));
        for (int ch = 0; ch < 3; ++ch) {
            sh[i * 12 + ch * 4] = (0.5 + 0.3 * (rng.uniform() - 0.5)) / kShC0;
            for (int k = 1; k < 4; ++k) sh[i * 12 + ch * 4 + k] = 0.01 * (2 * rng.uniform() - 1);
        }
        ++placed;
    }

    auto build_set = [&]() {
        GaussianSet set;
        set.g.resize(size_t(n));
        for (size_t i = 0; i < size_t(n); ++i) {
            Gaussian3D& g = set.g[i];
            g.u = {float(pos[i * 3]), float(pos[i * 3 + 1]), float(pos[i * 3 + 2])};
            g.q = {float(qrot[i * 4]), float(qrot[i * 4 + 1]), float(qrot[i * 4 + 2]),
                   float(qrot[i * 4 + 3])};
            g.s = {scale[i * 3], scale[i * 3 + 1], scale[i * 3 + 2]};
            g.o = float(1.0 / (1.0 + std::exp(-lgo[i])));
            for (int k = 0; k < 12; ++k) g.sh[k] = float(sh[i * 12 + k]);
        }
        set.recompute_bbox();
        return set;
    };

    // Adam over the four parameter groups; scales stay fixed.
    struct Group {
        std::vector<double>* p;
        double lr;
        std::vector<double> m, v;
    };
    Group groups[4] = {{&pos, 2e-3, {}, {}},
                       {&qrot, 2e-3, {}, {}},
                       {&lgo, 5e-2, {}, {}},
                       {&sh, 2.5e-2, {}, {}}};
    for (auto& gr : groups) {
        gr.m.assign(gr.p->size(), 0.0);
        gr.v.assign(gr.p->size(), 0.0);
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-15;

    const int nviews = int(cams.size());
    for (int it = 0; it < iters; ++it) {
        int view = it % nviews;
        GaussianSet set = build_set();
        RenderedImage img = render(set, cams[size_t(view)]);
        LossResult loss = loss_color(img.rgb, frames[size_t(view)], lambda);
        if (!std::isfinite(loss.value)) throw TrainingDivergence("non-finite fit loss", it);
        GaussianGrads grads = render_backward(set, cams[size_t(view)], loss.grad);

        std::vector<double> dpos(pos.size()), dq(qrot.size()), dlgo(lgo.size()), dsh(sh.size());
        for (size_t i = 0; i < size_t(n); ++i) {
            dpos[i * 3 + 0] = grads.du[i].x;
            dpos[i * 3 + 1] = grads.du[i].y;
            dpos[i * 3 + 2] = grads.du[i].z;
            for (int k = 0; k < 4; ++k) dq[i * 4 + k] = grads.dq[i][k];
            double o = 1.0 / (1.0 + std::exp(-lgo[i]));
            dlgo[i] = grads.dopacity[i] * o * (1.0 - o);
            for (int k = 0; k < 12; ++k) dsh[i * 12 + k] = grads.dsh[i][k];
        }
        std::vector<double>* dgs[4] = {&dpos, &dq, &dlgo, &dsh};
        double step = it + 1;
        double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
        for (int gidx = 0; gidx < 4; ++gidx) {
            Group& gr = groups[gidx];
            const std::vector<double>& d = *dgs[gidx];
            for (size_t k = 0; k < gr.p->size(); ++k) {
                if (!std::isfinite(d[k]))
                    throw TrainingDivergence("non-finite fit gradient", it);
                gr.m[k] = b1 * gr.m[k] + (1 - b1) * d[k];
                gr.v[k] = b2 * gr.v[k] + (1 - b2) * d[k] * d[k];
                (*gr.p)[k] -= gr.lr * (gr.m[k] / c1) / (std::sqrt(gr.v[k] / c2) + eps);
            }
        }
    }

    // Store unit quaternions; the raw optimization vector is only a
    // parameterization.
    for (size_t i = 0; i < size_t(n); ++i) {
        double nq = std::sqrt(qrot[i * 4] * qrot[i * 4] + qrot[i * 4 + 1] * qrot[i * 4 + 1] +
                              qrot[i * 4 + 2] * qrot[i * 4 + 2] + qrot[i * 4 + 3] * qrot[i * 4 + 3]);
        if (nq < 1e-12) {
            qrot[i * 4] = 1;
            qrot[i * 4 + 1] = qrot[i * 4 + 2] = qrot[i * 4 + 3] = 0;
            nq = 1;
        }
        for (int k = 0; k < 4; ++k) qrot[i * 4 + k] /= nq;
    }
    return build_set();
}

} // namespace mgs
