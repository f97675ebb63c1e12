#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "mgs/metrics.hpp"
#include "mgs/rng.hpp"
#include "mgs/trainer.hpp"

using namespace mgs;

namespace {

Camera front_camera(int w, int h, double f, double eye_x = 0.0) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    cam.R.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    cam.t = {-eye_x, 0, 0};
    return cam;
}

Gaussian3D make_gaussian(Vec3 u, double scale, double opacity, Vec3 rgb) {
    Gaussian3D g;
    g.u = {float(u.x), float(u.y), float(u.z)};
    g.q = {1, 0, 0, 0};
    g.s = {float(scale), float(scale), float(scale)};
    g.o = float(opacity);
    for (int c = 0; c < 3; ++c) {
        double v = c == 0 ? rgb.x : (c == 1 ? rgb.y : rgb.z);
        g.sh[size_t(c * 4)] = float(v / kShC0);
        for (int k = 1; k < 4; ++k) g.sh[size_t(c * 4 + k)] = 0;
    }
    return g;
}

// Backdrop plus a small bright mover in front of it.
GaussianSet wall_and_mover() {
    GaussianSet set;
    set.g.push_back(make_gaussian({0, 0, 4.0}, 2.0, 0.95, {0.25, 0.3, 0.35}));
    set.g.push_back(make_gaussian({0, 0, 2.5}, 0.22, 0.9, {0.9, 0.6, 0.1}));
    set.recompute_bbox();
    return set;
}

bool sets_bitwise_equal(const GaussianSet& a, const GaussianSet& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.g.data(), b.g.data(), a.size() * sizeof(Gaussian3D)) == 0;
}

bool gaussian_bitwise_equal(const Gaussian3D& a, const Gaussian3D& b) {
    return std::memcmp(&a, &b, sizeof(Gaussian3D)) == 0;
}

Image random_image(Rng& rng, int w, int h) {
    Image img(w, h, 3);
    for (double& v : img.v) v = rng.uniform(0.0, 1.0);
    return img;
}

} // namespace

TEST_CASE("loss_color blends L1 and D-SSIM with the stated weights") {
    Rng rng(71);
    Image target = random_image(rng, 12, 12);
    Image rendered = target;
    // keep every per-element difference away from the L1 kink
    for (double& v : rendered.v) v += (rng.uniform(0.0, 1.0) < 0.5 ? -1 : 1) * rng.uniform(0.1, 0.4);

    double l1 = 0;
    for (size_t i = 0; i < target.v.size(); ++i) l1 += std::fabs(rendered.v[i] - target.v[i]);
    l1 /= double(target.v.size());
    double ds = dssim(rendered, target);

    LossResult a = loss_color(rendered, target, 0.0);
    CHECK(a.value == doctest::Approx(l1).epsilon(1e-12));
    for (size_t i = 0; i < target.v.size(); ++i) {
        double sign = rendered.v[i] > target.v[i] ? 1.0 : -1.0;
        CHECK(a.grad.v[i] == doctest::Approx(sign / double(target.v.size())).epsilon(1e-12));
    }

    Image dgrad(12, 12, 3);
    double dval = dssim_with_grad(rendered, target, &dgrad);
    LossResult b = loss_color(rendered, target, 1.0);
    CHECK(b.value == doctest::Approx(dval).epsilon(1e-12));
    for (size_t i = 0; i < target.v.size(); ++i)
        CHECK(b.grad.v[i] == doctest::Approx(dgrad.v[i]).epsilon(1e-9));

    LossResult m = loss_color(rendered, target, 0.2);
    CHECK(m.value == doctest::Approx(0.8 * l1 + 0.2 * ds).epsilon(1e-12));
}

TEST_CASE("loss_color gradient matches finite differences") {
    Rng rng(72);
    Image target = random_image(rng, 12, 12);
    Image rendered = target;
    for (double& v : rendered.v) v += (rng.uniform(0.0, 1.0) < 0.5 ? -1 : 1) * rng.uniform(0.1, 0.4);

    LossResult res = loss_color(rendered, target, 0.2);
    int checked = 0;
    for (int probe = 0; probe < 30; ++probe) {
        size_t i = size_t(rng.uniform_int(0, int64_t(rendered.v.size()) - 1));
        const double h = 1e-6, x0 = rendered.v[i];
        rendered.v[i] = x0 + h;
        double lp = loss_color(rendered, target, 0.2).value;
        rendered.v[i] = x0 - h;
        double lm = loss_color(rendered, target, 0.2).value;
        rendered.v[i] = x0;
        double fd = (lp - lm) / (2 * h);
        CHECK(std::fabs(fd - res.grad.v[i]) <= 1e-4 * std::max(1.0, std::fabs(res.grad.v[i])));
        ++checked;
    }
    CHECK(checked == 30);
}

TEST_CASE("attention_maps thresholds strictly above the linear-interp percentile") {
    // [DERIVED] errors 0.01..1.00 over 100 pixels; the 99th linear-interp
    // percentile is 0.9901, so exactly the largest-error pixel survives.
    Image target(10, 10, 3), rendered(10, 10, 3);
    for (int p = 0; p < 100; ++p)
        for (int c = 0; c < 3; ++c) rendered.at(c, p / 10, p % 10) = double(p + 1) / 100.0;

    std::vector<BoolMask> maps =
        attention_maps({rendered}, {target}, 99.0);
    REQUIRE(maps.size() == 1);
    CHECK(maps[0].count() == 1);
    CHECK(maps[0].at(9, 9) == 1);

    // flat error distribution: nothing is strictly above its own percentile
    Image flat(10, 10, 3);
    for (double& v : flat.v) v = 0.5;
    std::vector<BoolMask> none = attention_maps({flat}, {target}, 50.0);
    CHECK(none[0].count() == 0);

    // percentile 0 keeps everything above the minimum
    std::vector<BoolMask> low = attention_maps({rendered}, {target}, 0.0);
    CHECK(low[0].count() == 99);
}

TEST_CASE("select_new_gaussians matches a GIM-derived oracle and stays inside g_m") {
    GaussianSet set;
    set.g.push_back(make_gaussian({-0.8, 0, 2.5}, 0.3, 0.9, {1, 0, 0}));
    set.g.push_back(make_gaussian({0.0, 0, 2.5}, 0.3, 0.9, {0, 1, 0}));
    set.g.push_back(make_gaussian({0.8, 0, 2.5}, 0.3, 0.9, {0, 0, 1}));
    set.recompute_bbox();
    std::vector<Camera> cams = {front_camera(48, 48, 40.0)};
    std::vector<BoolMask> attention = {BoolMask(48, 48, 1)};

    for (int top_n : {1, 2}) {
        IndexSet oracle;
        GimBuffer gim = render_gim(set, cams[0], top_n);
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x)
                for (int k = 0; k < gim.count(y, x); ++k) oracle.push_back(gim.id(y, x, k));
        normalize_index_set(oracle);

        IndexSet all = {0, 1, 2};
        CHECK(select_new_gaussians(set, all, cams, attention, top_n) == oracle);

        IndexSet restricted = {0, 2};
        IndexSet got = select_new_gaussians(set, restricted, cams, attention, top_n);
        CHECK(got == index_intersection(oracle, restricted));
        CHECK(index_subset(got, restricted));
    }

    // attention off everywhere: nothing selected
    std::vector<BoolMask> off = {BoolMask(48, 48)};
    IndexSet all = {0, 1, 2};
    CHECK(select_new_gaussians(set, all, cams, off, 1).empty());
}

TEST_CASE("deform_stage with zero iterations or empty g_m is a bitwise no-op") {
    GaussianSet prev = wall_and_mover();
    std::vector<Camera> cams = {front_camera(32, 32, 30.0)};
    std::vector<Image> targets = {render(prev, cams[0]).rgb};

    TrainConfig cfg;
    cfg.deform_iters = 0;
    IndexSet gm = {0, 1};
    DeformResult r = deform_stage(prev, gm, targets, cams, cfg);
    CHECK(sets_bitwise_equal(r.set, prev));
    CHECK(r.losses.empty());
    REQUIRE(r.du.size() == gm.size());
    for (auto& d : r.du)
        for (float v : d) CHECK(v == 0.0f);
    for (auto& d : r.dq)
        for (float v : d) CHECK(v == 0.0f);

    cfg.deform_iters = 3;
    DeformResult e = deform_stage(prev, {}, targets, cams, cfg);
    CHECK(sets_bitwise_equal(e.set, prev));
    CHECK(e.du.empty());
}

TEST_CASE("optimize_stage with zero iterations or empty g_new is a bitwise no-op") {
    GaussianSet prev = wall_and_mover();
    std::vector<Camera> cams = {front_camera(32, 32, 30.0)};
    std::vector<Image> targets = {render(prev, cams[0]).rgb};

    TrainConfig cfg;
    cfg.optim_iters = 0;
    OptimizeResult r = optimize_stage(prev, {1}, targets, cams, cfg);
    CHECK(sets_bitwise_equal(r.set, prev));
    REQUIRE(r.dsh.size() == 1);
    for (float v : r.dsh[0]) CHECK(v == 0.0f);

    cfg.optim_iters = 3;
    OptimizeResult e = optimize_stage(prev, {}, targets, cams, cfg);
    CHECK(sets_bitwise_equal(e.set, prev));
    CHECK(e.dsh.empty());
}

TEST_CASE("deform_stage recovers a rigid translation of the mover") {
    GaussianSet prev = wall_and_mover();
    GaussianSet truth = prev;
    truth.g[1].u[0] += 0.3f;
    truth.g[1].u[1] += 0.15f;

    std::vector<Camera> cams = {front_camera(32, 32, 35.0), front_camera(32, 32, 35.0, 0.6)};
    std::vector<Image> targets;
    for (const Camera& cam : cams) targets.push_back(render(truth, cam).rgb);

    TrainConfig cfg;
    cfg.deform_iters = 80;
    cfg.seed = 3;
    DeformResult r = deform_stage(prev, {1}, targets, cams, cfg);
    REQUIRE(r.losses.size() == 80);
    CHECK(r.losses.back() < 0.6 * r.losses.front());

    double before = 0, after = 0;
    for (size_t v = 0; v < cams.size(); ++v) {
        before += psnr(render(prev, cams[v]).rgb, targets[v]);
        after += psnr(render(r.set, cams[v]).rgb, targets[v]);
    }
    CHECK(after > before + 1.0);

    // the untouched backdrop must not move at all
    CHECK(gaussian_bitwise_equal(r.set.g[0], prev.g[0]));
}

TEST_CASE("optimize_stage recolors only the selected gaussian") {
    GaussianSet truth = wall_and_mover();
    GaussianSet miscolored = truth;
    miscolored.g[1].sh[0] += float(0.5 / kShC0);
    miscolored.g[1].sh[4] -= float(0.3 / kShC0);

    std::vector<Camera> cams = {front_camera(32, 32, 35.0), front_camera(32, 32, 35.0, 0.6)};
    std::vector<Image> targets;
    for (const Camera& cam : cams) targets.push_back(render(truth, cam).rgb);

    TrainConfig cfg;
    cfg.optim_iters = 80;
    cfg.seed = 4;
    OptimizeResult r = optimize_stage(miscolored, {1}, targets, cams, cfg);
    REQUIRE(r.losses.size() == 80);
    CHECK(r.losses.back() < 0.6 * r.losses.front());

    CHECK(gaussian_bitwise_equal(r.set.g[0], miscolored.g[0]));
    CHECK(std::memcmp(r.set.g[1].u.data(), miscolored.g[1].u.data(), 3 * sizeof(float)) == 0);
    CHECK(std::memcmp(r.set.g[1].q.data(), miscolored.g[1].q.data(), 4 * sizeof(float)) == 0);
    CHECK(std::memcmp(r.set.g[1].s.data(), miscolored.g[1].s.data(), 3 * sizeof(float)) == 0);
    CHECK(r.set.g[1].o == miscolored.g[1].o);
    bool sh_changed = std::memcmp(r.set.g[1].sh.data(), miscolored.g[1].sh.data(),
                                  12 * sizeof(float)) != 0;
    CHECK(sh_changed);
}

TEST_CASE("process_frame on a static pair leaves the model bitwise untouched") {
    GaussianSet prev = wall_and_mover();
    std::vector<Camera> cams = {front_camera(32, 32, 30.0), front_camera(32, 32, 30.0, 0.6)};
    std::vector<Image> frames;
    for (const Camera& cam : cams) frames.push_back(render(prev, cam).rgb);
    std::vector<FlowField> flows(2, FlowField(32, 32));

    TrainConfig cfg;
    cfg.morph_kernel = 5;
    cfg.deform_iters = 5;
    cfg.optim_iters = 5;
    FrameResult r = process_frame(prev, 3, frames, frames, flows, cams, cfg);

    CHECK(sets_bitwise_equal(r.set, prev));
    CHECK(r.g_m.empty());
    CHECK(r.g_new.empty());
    CHECK(r.delta.frame_index == 3);
    CHECK(r.delta.g_m.empty());
    CHECK(r.delta.g_new.empty());
    for (const BoolMask& m : r.motion_masks) CHECK(m.count() == 0);
}

TEST_CASE("process_frame on a moving pair produces a replayable delta") {
    GaussianSet prev = wall_and_mover();
    GaussianSet moved = prev;
    moved.g[1].u[0] += 0.35f;

    std::vector<Camera> cams = {front_camera(48, 48, 42.0), front_camera(48, 48, 42.0, 0.6)};
    std::vector<Image> frames_prev, frames_t;
    for (const Camera& cam : cams) {
        frames_prev.push_back(render(prev, cam).rgb);
        frames_t.push_back(render(moved, cam).rgb);
    }
    // constant forward flow; the temporal-difference mask narrows it down
    std::vector<FlowField> flows(2, FlowField(48, 48));
    for (FlowField& f : flows)
        for (Vec2& v : f.v) v = {6.0, 0.0};

    TrainConfig cfg;
    cfg.morph_kernel = 5;
    cfg.cluster_eps = 3.0;
    cfg.cluster_min_samples = 1;
    cfg.deform_iters = 10;
    cfg.optim_iters = 5;
    FrameResult r = process_frame(prev, 1, frames_t, frames_prev, flows, cams, cfg);

    REQUIRE_FALSE(r.g_m.empty());
    CHECK(index_contains(r.g_m, 1));
    CHECK(is_sorted_unique(r.g_m));
    CHECK(index_subset(r.g_new, r.g_m));
    CHECK(r.delta.frame_index == 1);
    CHECK(r.delta.g_m == r.g_m);
    CHECK(r.deform_losses.size() == 10);

    bool any_mask = false;
    for (const BoolMask& m : r.motion_masks) any_mask = any_mask || m.count() > 0;
    CHECK(any_mask);

    GaussianSet replayed = apply_delta(prev, r.delta);
    CHECK(sets_bitwise_equal(replayed, r.set));

    for (size_t i = 0; i < prev.size(); ++i)
        if (!index_contains(r.g_m, int32_t(i)))
            CHECK(gaussian_bitwise_equal(r.set.g[i], prev.g[i]));
}
