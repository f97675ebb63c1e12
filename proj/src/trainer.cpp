#include "mgs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mgs/errors.hpp"
#include "mgs/metrics.hpp"
#include "mgs/ntc.hpp"

namespace mgs {

LossResult loss_color(const Image& rendered, const Image& target, double lambda) {
    if (!rendered.same_shape(target))
        throw ContractViolation("loss_color: image shapes differ");
    if (lambda < 0.0 || lambda > 1.0)
        throw ContractViolation("loss_color: lambda outside [0,1]");

    LossResult res;
    Image dgrad;
    double dsv = dssim_with_grad(rendered, target, &dgrad);

    const size_t n = rendered.v.size();
    double l1 = 0;
    res.grad = Image(rendered.w, rendered.h, rendered.c);
    const double wl1 = (1.0 - lambda) / double(n);
    for (size_t i = 0; i < n; ++i) {
        double d = rendered.v[i] - target.v[i];
        l1 += std::abs(d);
        double g = d > 0 ? wl1 : (d < 0 ? -wl1 : 0.0);
        res.grad.v[i] = g + lambda * dgrad.v[i];
    }
    res.value = (1.0 - lambda) * (l1 / double(n)) + lambda * dsv;
    return res;
}

namespace {

// Linear-interpolation percentile over the full per-pixel error distribution,
// matching rank = p/100 * (n-1) on the sorted values.
double percentile_value(std::vector<double> values, double p) {
    if (values.empty()) throw ContractViolation("percentile of empty set");
    std::sort(values.begin(), values.end());
    double rank = std::clamp(p, 0.0, 100.0) / 100.0 * double(values.size() - 1);
    size_t lo = size_t(rank);
    if (lo + 1 >= values.size()) return values.back();
    double frac = rank - double(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

// Gradient of the normalization map x -> x/|x| applied to the 4-vector q,
// pulled back from dy: (dy - qhat (qhat . dy)) / |q|.
std::array<double, 4> normalize_backward(const std::array<double, 4>& q,
                                         const std::array<double, 4>& dy) {
    double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    double n = std::sqrt(n2);
    double dot = 0;
    std::array<double, 4> qh;
    for (int i = 0; i < 4; ++i) qh[i] = q[i] / n;
    for (int i = 0; i < 4; ++i) dot += qh[i] * dy[i];
    std::array<double, 4> dx;
    for (int i = 0; i < 4; ++i) dx[i] = (dy[i] - qh[i] * dot) / n;
    return dx;
}

// Pull a gradient wrt the stored (post-update, normalized) quaternion back to
// the identity-shifted rotation offset: stored = normalize(q_prev *
// normalize(1 + dq)). The float32 rounding between map output and application
// is treated as the identity.
std::array<double, 4> rotation_offset_backward(const Quat& q_prev,
                                               const std::array<float, 4>& dq_f,
                                               const std::array<double, 4>& dstored) {
    std::array<double, 4> u = {1.0 + double(dq_f[0]), double(dq_f[1]), double(dq_f[2]),
                               double(dq_f[3])};
    double nu = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]);
    std::array<double, 4> v = {u[0] / nu, u[1] / nu, u[2] / nu, u[3] / nu};

    Quat r = quat_multiply(q_prev, Quat{v[0], v[1], v[2], v[3]});
    std::array<double, 4> dr = normalize_backward({r.w, r.x, r.y, r.z}, dstored);

    // r = L(q_prev) v; dv = L^T dr.
    const double w = q_prev.w, x = q_prev.x, y = q_prev.y, z = q_prev.z;
    const double L[4][4] = {{w, -x, -y, -z}, {x, w, -z, y}, {y, z, w, -x}, {z, -y, x, w}};
    std::array<double, 4> dv = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) dv[j] += L[i][j] * dr[i];

    return normalize_backward(u, dv); // du/d(dq) is the identity
}

void check_views(size_t cams, size_t images, const char* what) {
    if (cams == 0) throw ContractViolation("training requires at least one camera");
    if (images != cams)
        throw ContractViolation(std::string(what) + ": one image per camera required");
}

} // namespace

std::vector<BoolMask> attention_maps(const std::vector<Image>& rendered,
                                     const std::vector<Image>& targets, double percentile) {
    if (rendered.size() != targets.size())
        throw ContractViolation("attention_maps: view count mismatch");
    std::vector<BoolMask> out;
    out.reserve(rendered.size());
    for (size_t v = 0; v < rendered.size(); ++v) {
        const Image& r = rendered[v];
        const Image& t = targets[v];
        if (!r.same_shape(t)) throw ContractViolation("attention_maps: shape mismatch");
        std::vector<double> err(size_t(r.w) * r.h);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) {
                double e = 0;
                for (int ch = 0; ch < r.c; ++ch) e += std::abs(r.at(ch, y, x) - t.at(ch, y, x));
                err[size_t(y) * r.w + x] = e / double(r.c);
            }
        double tau = percentile_value(err, percentile);
        BoolMask m(r.w, r.h);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) m.at(y, x) = err[size_t(y) * r.w + x] > tau ? 1 : 0;
        out.push_back(std::move(m));
    }
    return out;
}

IndexSet select_new_gaussians(const GaussianSet& deformed, const IndexSet& g_m,
                              const std::vector<Camera>& cams,
                              const std::vector<BoolMask>& attention, int top_n) {
    check_views(cams.size(), attention.size(), "select_new_gaussians");
    std::vector<GimBuffer> gims;
    gims.reserve(cams.size());
    for (const Camera& cam : cams) gims.push_back(render_gim(deformed, cam, top_n));
    IndexSet hits = backproject(gims, attention);
    return index_intersection(hits, g_m);
}

DeformResult deform_stage(const GaussianSet& prev, const IndexSet& g_m,
                          const std::vector<Image>& targets, const std::vector<Camera>& cams,
                          const TrainConfig& cfg) {
    check_views(cams.size(), targets.size(), "deform_stage");
    if (!is_sorted_unique(g_m)) throw ContractViolation("deform_stage: g_m not sorted-unique");

    DeformResult res;
    if (g_m.empty()) {
        res.set = prev;
        return res;
    }

    const size_t n = g_m.size();
    std::vector<Vec3> positions(n); // frozen at the previous frame
    for (size_t i = 0; i < n; ++i) positions[i] = prev.g[size_t(g_m[i])].pos();

    NeuralMap map(HashGridConfig{}, 7, cfg.seed, prev.bbox);

    std::vector<double> out, dout;
    std::vector<std::array<float, 3>> du(n);
    std::vector<std::array<float, 4>> dq(n);
    auto decode = [&](const std::vector<double>& o) {
        for (size_t i = 0; i < n; ++i) {
            const double* row = &o[i * 7];
            du[i] = {float(row[0]), float(row[1]), float(row[2])};
            dq[i] = {float(row[3]), float(row[4]), float(row[5]), float(row[6])};
        }
    };

    const int nviews = int(cams.size());
    for (int it = 0; it < cfg.deform_iters; ++it) {
        int view = it % nviews;
        map.forward(positions, &out);
        decode(out);
        GaussianSet def = apply_deformation(prev, g_m, du, dq);

        RenderedImage img = render(def, cams[view]);
        LossResult loss = loss_color(img.rgb, targets[view], cfg.loss_lambda);
        if (!std::isfinite(loss.value))
            throw TrainingDivergence("non-finite deformation loss", it);
        res.losses.push_back(loss.value);

        GaussianGrads grads = render_backward(def, cams[view], loss.grad);
        dout.assign(n * 7, 0.0);
        for (size_t i = 0; i < n; ++i) {
            size_t gi = size_t(g_m[i]);
            dout[i * 7 + 0] = grads.du[gi].x;
            dout[i * 7 + 1] = grads.du[gi].y;
            dout[i * 7 + 2] = grads.du[gi].z;
            std::array<double, 4> dd =
                rotation_offset_backward(prev.g[gi].rot(), dq[i], grads.dq[gi]);
            for (int k = 0; k < 4; ++k) dout[i * 7 + 3 + k] = dd[k];
        }
        map.backward_and_step(positions, dout, cfg.lr_grid, cfg.lr_mlp);
    }

    // Offsets are read out after the last step; with zero iterations the map
    // still holds its zero output layer and the result is bit-identical.
    map.forward(positions, &out);
    decode(out);
    res.set = apply_deformation(prev, g_m, du, dq);
    res.du = std::move(du);
    res.dq = std::move(dq);
    return res;
}

OptimizeResult optimize_stage(const GaussianSet& deformed, const IndexSet& g_new,
                              const std::vector<Image>& targets,
                              const std::vector<Camera>& cams, const TrainConfig& cfg) {
    check_views(cams.size(), targets.size(), "optimize_stage");
    if (!is_sorted_unique(g_new)) throw ContractViolation("optimize_stage: g_new not sorted-unique");

    OptimizeResult res;
    if (g_new.empty()) {
        res.set = deformed;
        return res;
    }

    const size_t n = g_new.size();
    std::vector<Vec3> positions(n); // current-frame (deformed) positions
    for (size_t i = 0; i < n; ++i) positions[i] = deformed.g[size_t(g_new[i])].pos();

    NeuralMap map(HashGridConfig{}, 12, cfg.seed + 1, deformed.bbox);

    std::vector<double> out, dout;
    std::vector<std::array<float, 12>> dsh(n);
    auto decode = [&](const std::vector<double>& o) {
        for (size_t i = 0; i < n; ++i)
            for (int k = 0; k < 12; ++k) dsh[i][k] = float(o[i * 12 + k]);
    };

    const int nviews = int(cams.size());
    for (int it = 0; it < cfg.optim_iters; ++it) {
        int view = it % nviews;
        map.forward(positions, &out);
        decode(out);
        GaussianSet cur = apply_sh_offsets(deformed, g_new, dsh);

        RenderedImage img = render(cur, cams[view]);
        LossResult loss = loss_color(img.rgb, targets[view], cfg.loss_lambda);
        if (!std::isfinite(loss.value)) throw TrainingDivergence("non-finite color loss", it);
        res.losses.push_back(loss.value);

        GaussianGrads grads = render_backward(cur, cams[view], loss.grad);
        dout.assign(n * 12, 0.0);
        for (size_t i = 0; i < n; ++i) {
            size_t gi = size_t(g_new[i]);
            for (int k = 0; k < 12; ++k) dout[i * 12 + k] = grads.dsh[gi][k];
        }
        map.backward_and_step(positions, dout, cfg.lr_grid, cfg.lr_mlp);
    }

    map.forward(positions, &out);
    decode(out);
    res.set = apply_sh_offsets(deformed, g_new, dsh);
    res.dsh = std::move(dsh);
    return res;
}

FrameResult process_frame(const GaussianSet& prev, int frame_index,
                          const std::vector<Image>& frames_t,
                          const std::vector<Image>& frames_prev,
                          const std::vector<FlowField>& flows, const std::vector<Camera>& cams,
                          const TrainConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    check_views(cams.size(), frames_t.size(), "process_frame(t)");
    check_views(cams.size(), frames_prev.size(), "process_frame(t-1)");
    if (flows.size() != cams.size())
        throw ContractViolation("process_frame: one flow field per camera required");

    FrameResult res;

    // Motion masks on the t-1 grid.
    for (size_t v = 0; v < cams.size(); ++v) {
        BoolMask fm = flow_mask(flows[v], cfg.flow_tau);
        BoolMask dm =
            temporal_diff_mask(frames_t[v], frames_prev[v], cfg.diff_thresh, cfg.morph_kernel);
        res.motion_masks.push_back(motion_mask(fm, dm));
    }

    // Back-project through the previous frame's model.
    std::vector<GimBuffer> gims;
    gims.reserve(cams.size());
    for (size_t v = 0; v < cams.size(); ++v)
        gims.push_back(render_gim(prev, cams[v], cfg.gim_top_n));
    MotionSelectResult sel = select_motion_related(prev, gims, res.motion_masks, cfg.cluster_eps,
                                                   cfg.cluster_min_samples, cfg.use_clustering);
    res.g_m = sel.g_m;

    DeformResult def = deform_stage(prev, res.g_m, frames_t, cams, cfg);
    res.deform_losses = def.losses;

    // Attention-gated SH refresh on the residual error of the deformed model.
    std::vector<Image> rendered_d;
    rendered_d.reserve(cams.size());
    for (size_t v = 0; v < cams.size(); ++v) rendered_d.push_back(render(def.set, cams[v]).rgb);
    std::vector<BoolMask> attn = attention_maps(rendered_d, frames_t, cfg.attention_percentile);
    res.g_new = select_new_gaussians(def.set, res.g_m, cams, attn, cfg.gim_top_n);

    OptimizeResult opt = optimize_stage(def.set, res.g_new, frames_t, cams, cfg);
    res.optim_losses = opt.losses;

    res.delta.frame_index = frame_index;
    res.delta.g_m = res.g_m;
    res.delta.g_new = res.g_new;
    res.delta.du = def.du;
    res.delta.dq = def.dq;
    res.delta.dsh = opt.dsh;

    // The canonical frame state is the delta applied to the previous frame,
    // the same arithmetic a replay performs.
    res.set = apply_delta(prev, res.delta);

    auto t1 = std::chrono::steady_clock::now();
    res.seconds = std::chrono::duration<double>(t1 - t0).count();
    return res;
}

} // namespace mgs
