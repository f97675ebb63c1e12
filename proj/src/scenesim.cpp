#include "mgs/scenesim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mgs/binio.hpp"
#include "mgs/errors.hpp"
#include "mgs/io.hpp"
#include "mgs/morphology.hpp"
#include "mgs/rasterizer.hpp"

namespace fs = std::filesystem;

namespace mgs {
namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

Quat axis_angle(const Vec3& axis, double degrees) {
    double n = axis.norm();
    if (n < 1e-12) throw ContractViolation("rotation axis has zero length");
    double half = degrees * kPi / 360.0;
    double s = std::sin(half) / n;
    return {std::cos(half), axis.x * s, axis.y * s, axis.z * s};
}

// OpenCV-style look-at: camera x right, y down, z forward, world up +y.
Camera look_at(const Vec3& eye, const Vec3& target, int w, int h, double focal) {
    Vec3 f = (target - eye);
    double fn = f.norm();
    if (fn < 1e-9) throw ContractViolation("camera eye coincides with target");
    f = f * (1.0 / fn);
    Vec3 up{0, 1, 0};
    Vec3 xc = f.cross(up);
    double xn = xc.norm();
    if (xn < 1e-9) throw ContractViolation("camera looks along the up axis");
    xc = xc * (1.0 / xn);
    Vec3 yc = f.cross(xc);

    Camera cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    cam.R.m = {xc.x, xc.y, xc.z, yc.x, yc.y, yc.z, f.x, f.y, f.z};
    cam.t = (cam.R * eye) * -1.0;
    return cam;
}

void sample_blob(Rng& rng, const BlobSpec& b, int32_t label, GaussianSet* set,
                 std::vector<int32_t>* labels) {
    for (int i = 0; i < b.count; ++i) {
        Vec3 dir = rng.normal3();
        double dn = dir.norm();
        if (dn < 1e-9) dir = {1, 0, 0}, dn = 1;
        double r = b.radius * std::cbrt(rng.uniform());
        Vec3 u = b.center + dir * (r / dn);

        Gaussian3D g;
        g.u = {float(u.x), float(u.y), float(u.z)};
        for (int k = 0; k < 3; ++k) g.s[k] = float(b.gscale * (0.75 + 0.5 * rng.uniform()));
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        double qn = q.norm();
        if (qn < 1e-9) q = {1, 0, 0, 0}, qn = 1;
        g.q = {float(q.w / qn), float(q.x / qn), float(q.y / qn), float(q.z / qn)};
        g.o = float(b.opacity);

        const double base[3] = {b.base_color.x, b.base_color.y, b.base_color.z};
        for (int ch = 0; ch < 3; ++ch) {
            double c = base[ch] + b.shade_jitter * (2.0 * rng.uniform() - 1.0);
            c = clampd(c, 0.05, 0.95);
            g.sh[ch * 4] = float(c / kShC0);
            for (int k = 1; k < 4; ++k) g.sh[ch * 4 + k] = float(0.02 * (2.0 * rng.uniform() - 1.0));
        }
        set->g.push_back(g);
        labels->push_back(label);
    }
}

void sample_wall(Rng& rng, GaussianSet* set, std::vector<int32_t>* labels) {
    const int nx = 12, ny = 10;
    const double spacing = 1.5;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            Gaussian3D g;
            double x = (i - 0.5 * (nx - 1)) * spacing;
            double y = (j - 0.5 * (ny - 1)) * spacing;
            double z = -4.0 + 0.04 * (rng.uniform() - 0.5);
            g.u = {float(x), float(y), float(z)};
            g.s = {0.8f, 0.8f, 0.06f};
            g.q = {1, 0, 0, 0};
            g.o = 0.96f;
            const double base[3] = {0.3, 0.34, 0.46};
            for (int ch = 0; ch < 3; ++ch) {
                double c = clampd(base[ch] + 0.15 * (2.0 * rng.uniform() - 1.0), 0.05, 0.95);
                g.sh[ch * 4] = float(c / kShC0);
            }
            set->g.push_back(g);
            labels->push_back(0);
        }
}

void validate_spec(const SceneSpec& spec) {
    if (spec.frames < 2) throw ContractViolation("scene needs at least 2 frames");
    if (spec.rig.cameras < 2) throw ContractViolation("rig needs at least 2 cameras");
    if (spec.rig.width < 16 || spec.rig.height < 16 || spec.rig.focal <= 0)
        throw ContractViolation("bad rig image geometry");
    if (spec.rig.radius <= 0) throw ContractViolation("rig radius must be positive");
    auto check_blob = [](const BlobSpec& b) {
        if (b.count < 1 || b.radius <= 0 || b.gscale <= 0)
            throw ContractViolation("blob needs count >= 1 and positive extents");
        if (b.opacity < 0 || b.opacity > 1) throw ContractViolation("blob opacity outside [0,1]");
    };
    for (const auto& b : spec.statics) check_blob(b);
    for (const auto& m : spec.movers) {
        check_blob(m.blob);
        if (m.rot_deg_per_frame != 0 && m.rot_axis.norm() < 1e-12)
            throw ContractViolation("mover rotation axis has zero length");
    }
    for (const auto& e : spec.emergers) {
        check_blob(e.blob);
        if (e.attach_mover < 0 || size_t(e.attach_mover) >= spec.movers.size())
            throw ContractViolation("emerging object attached to a missing mover");
        if (e.appear_frame < 1 || e.appear_frame >= spec.frames)
            throw ContractViolation("emergence frame outside 1..T-1");
    }
}

std::vector<Camera> build_rig(const RigSpec& rig) {
    std::vector<Camera> cams;
    cams.reserve(rig.cameras);
    for (int i = 0; i < rig.cameras; ++i) {
        double theta = (-0.5 * rig.arc_deg + rig.arc_deg * i / (rig.cameras - 1)) * kPi / 180.0;
        Vec3 eye = rig.target +
                   Vec3{rig.radius * std::sin(theta), (i % 2 ? rig.y_high : rig.y_low),
                        rig.radius * std::cos(theta)};
        cams.push_back(look_at(eye, rig.target, rig.width, rig.height, rig.focal));
    }
    return cams;
}

struct RigidFrame {
    Quat r;      // rotation about c0
    Mat3 rot;
    Vec3 c0;
    Vec3 ct;
};

RigidFrame mover_rigid(const MoverSpec& m, int t) {
    RigidFrame rf;
    rf.r = axis_angle(m.rot_axis.norm() < 1e-12 ? Vec3{0, 1, 0} : m.rot_axis,
                      m.rot_deg_per_frame * t);
    rf.rot = quat_to_rotmat(rf.r);
    rf.c0 = m.blob.center;
    rf.ct = m.blob.center + m.velocity * double(t);
    return rf;
}

void apply_rigid(const RigidFrame& rf, Gaussian3D* g) {
    Vec3 u0 = g->pos();
    Vec3 u = rf.ct + rf.rot * (u0 - rf.c0);
    g->u = {float(u.x), float(u.y), float(u.z)};
    // rf.r is unit by construction and g->q is stored normalized, so the
    // product needs no renormalization; skipping it keeps frame 0 a bitwise
    // no-op and lets consumers rebuild any frame from sets[0] bit-exactly.
    Quat q = quat_multiply(rf.r, g->rot());
    g->q = {float(q.w), float(q.x), float(q.y), float(q.z)};
}

// Inclusive pixel rect under a splat's support radius.
void mark_influence(const Splat2D& s, BoolMask* m) {
    int x0 = std::max(0, int(std::ceil(s.mean.x - s.radius)));
    int x1 = std::min(m->w - 1, int(std::floor(s.mean.x + s.radius)));
    int y0 = std::max(0, int(std::ceil(s.mean.y - s.radius)));
    int y1 = std::min(m->h - 1, int(std::floor(s.mean.y + s.radius)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (splat_alpha(s, x, y) > 0.0) m->at(y, x) = 1;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json blob_to_json(const BlobSpec& b) {
    return {{"count", b.count},
            {"center", vec3_to_json(b.center)},
            {"radius", b.radius},
            {"base_color", vec3_to_json(b.base_color)},
            {"shade_jitter", b.shade_jitter},
            {"gscale", b.gscale},
            {"opacity", b.opacity}};
}

BlobSpec blob_from_json(const json& j) {
    BlobSpec b;
    b.count = j.at("count");
    b.center = vec3_from_json(j.at("center"));
    b.radius = j.at("radius");
    b.base_color = vec3_from_json(j.at("base_color"));
    b.shade_jitter = j.at("shade_jitter");
    b.gscale = j.at("gscale");
    b.opacity = j.at("opacity");
    return b;
}

json spec_to_json(const SceneSpec& s) {
    json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["frames"] = s.frames;
    j["rig"] = {{"cameras", s.rig.cameras},   {"radius", s.rig.radius},
                {"arc_deg", s.rig.arc_deg},   {"y_low", s.rig.y_low},
                {"y_high", s.rig.y_high},     {"target", vec3_to_json(s.rig.target)},
                {"width", s.rig.width},       {"height", s.rig.height},
                {"focal", s.rig.focal}};
    j["backdrop_wall"] = s.backdrop_wall;
    j["statics"] = json::array();
    for (const auto& b : s.statics) j["statics"].push_back(blob_to_json(b));
    j["movers"] = json::array();
    for (const auto& m : s.movers)
        j["movers"].push_back({{"blob", blob_to_json(m.blob)},
                               {"velocity", vec3_to_json(m.velocity)},
                               {"rot_axis", vec3_to_json(m.rot_axis)},
                               {"rot_deg_per_frame", m.rot_deg_per_frame}});
    j["emergers"] = json::array();
    for (const auto& e : s.emergers)
        j["emergers"].push_back({{"blob", blob_to_json(e.blob)},
                                 {"appear_frame", e.appear_frame},
                                 {"attach_mover", e.attach_mover}});
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.name = j.at("name");
    s.seed = j.at("seed");
    s.frames = j.at("frames");
    const json& r = j.at("rig");
    s.rig.cameras = r.at("cameras");
    s.rig.radius = r.at("radius");
    s.rig.arc_deg = r.at("arc_deg");
    s.rig.y_low = r.at("y_low");
    s.rig.y_high = r.at("y_high");
    s.rig.target = vec3_from_json(r.at("target"));
    s.rig.width = r.at("width");
    s.rig.height = r.at("height");
    s.rig.focal = r.at("focal");
    s.backdrop_wall = j.at("backdrop_wall");
    for (const auto& b : j.at("statics")) s.statics.push_back(blob_from_json(b));
    for (const auto& m : j.at("movers")) {
        MoverSpec ms;
        ms.blob = blob_from_json(m.at("blob"));
        ms.velocity = vec3_from_json(m.at("velocity"));
        ms.rot_axis = vec3_from_json(m.at("rot_axis"));
        ms.rot_deg_per_frame = m.at("rot_deg_per_frame");
        s.movers.push_back(ms);
    }
    for (const auto& e : j.at("emergers")) {
        EmergingSpec es;
        es.blob = blob_from_json(e.at("blob"));
        es.appear_frame = e.at("appear_frame");
        es.attach_mover = e.at("attach_mover");
        s.emergers.push_back(es);
    }
    return s;
}

std::string frame_view_name(const char* stem, int t, int v, const char* ext) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s_t%03d_v%02d.%s", stem, t, v, ext);
    return buf;
}

} // namespace

GaussianSet scene_frame_set(const SceneSpec& spec, const GaussianSet& frame0,
                            const std::vector<int32_t>& labels, int t) {
    if (t < 0 || t >= spec.frames) throw ContractViolation("frame index outside the script");
    if (labels.size() != frame0.size())
        throw ContractViolation("labels do not cover the frame-0 set");
    GaussianSet set = frame0;

    std::vector<RigidFrame> rigs;
    rigs.reserve(spec.movers.size());
    for (const auto& m : spec.movers) rigs.push_back(mover_rigid(m, t));

    for (size_t i = 0; i < set.g.size(); ++i) {
        int32_t l = labels[i];
        if (label_is_mover(l)) {
            apply_rigid(rigs[size_t(l - 1)], &set.g[i]);
        } else if (label_is_emerging(l)) {
            const EmergingSpec& e = spec.emergers[size_t(-l - 1)];
            apply_rigid(rigs[size_t(e.attach_mover)], &set.g[i]);
            set.g[i].o = t >= e.appear_frame ? float(e.blob.opacity) : 0.0f;
        }
    }
    return set;
}

GroundTruth build_scene(const SceneSpec& spec) {
    validate_spec(spec);
    GroundTruth gt;
    gt.spec = spec;
    gt.cams = build_rig(spec.rig);

    // Sampling order is part of the scene identity: wall, statics, movers,
    // emergers, each in spec order.
    Rng rng(spec.seed);
    GaussianSet frame0;
    if (spec.backdrop_wall) sample_wall(rng, &frame0, &gt.labels);
    for (const auto& b : spec.statics) sample_blob(rng, b, 0, &frame0, &gt.labels);
    for (size_t k = 0; k < spec.movers.size(); ++k)
        sample_blob(rng, spec.movers[k].blob, int32_t(k + 1), &frame0, &gt.labels);
    for (size_t k = 0; k < spec.emergers.size(); ++k)
        sample_blob(rng, spec.emergers[k].blob, -int32_t(k + 1), &frame0, &gt.labels);
    frame0.recompute_bbox();

    const int T = spec.frames;
    const int V = spec.rig.cameras;
    gt.sets.reserve(T);
    for (int t = 0; t < T; ++t) gt.sets.push_back(scene_frame_set(spec, frame0, gt.labels, t));

    gt.renders.resize(T);
    std::vector<std::vector<GimBuffer>> gims(T);
    for (int t = 0; t < T; ++t) {
        gt.renders[t].reserve(V);
        gims[t].reserve(V);
        for (int v = 0; v < V; ++v) {
            gt.renders[t].push_back(render(gt.sets[t], gt.cams[v]).rgb);
            gims[t].push_back(render_gim(gt.sets[t], gt.cams[v], 1));
        }
    }

    auto top1 = [&](int t, int v, int y, int x) -> int32_t {
        const GimBuffer& g = gims[t][v];
        return g.count(y, x) > 0 ? g.id(y, x, 0) : -1;
    };
    auto top1_weight = [&](int t, int v, int y, int x) -> double {
        const GimBuffer& g = gims[t][v];
        return g.count(y, x) > 0 ? g.weight(y, x, 0) : 0.0;
    };
    auto displacement = [&](int ta, int tb, int v, int32_t id) -> Vec2 {
        Vec2 pa = gt.cams[v].project(gt.sets[ta].g[size_t(id)].pos());
        Vec2 pb = gt.cams[v].project(gt.sets[tb].g[size_t(id)].pos());
        return pb - pa;
    };
    auto flow_between = [&](int ta, int tb, int v) {
        FlowField f(spec.rig.width, spec.rig.height);
        for (int y = 0; y < f.h; ++y)
            for (int x = 0; x < f.w; ++x) {
                int32_t id = top1(ta, v, y, x);
                if (id >= 0) f.at(y, x) = displacement(ta, tb, v, id);
            }
        return f;
    };

    // Warp validity: same top-1 Gaussian at both ends of the flow vector, and
    // a solid (weight >= 0.5) hit at both when the pixel is not background.
    auto visibility = [&](int ta, int tb, int v, const FlowField& flow) {
        BoolMask vis(flow.w, flow.h);
        for (int y = 0; y < flow.h; ++y)
            for (int x = 0; x < flow.w; ++x) {
                Vec2 fl = flow.at(y, x);
                double px = x + fl.x, py = y + fl.y;
                if (px < 0 || py < 0 || px > flow.w - 1 || py > flow.h - 1) continue;
                int nx = int(std::lround(px)), ny = int(std::lround(py));
                int32_t ia = top1(ta, v, y, x);
                int32_t ib = top1(tb, v, ny, nx);
                if (ia != ib) continue;
                if (ia >= 0 &&
                    (top1_weight(ta, v, y, x) < 0.5 || top1_weight(tb, v, ny, nx) < 0.5))
                    continue;
                vis.at(y, x) = 1;
            }
        return vis;
    };

    gt.flow_fwd.resize(T - 1);
    gt.flow_bwd.resize(T - 1);
    gt.flow_bwd0.resize(T - 1);
    gt.vis_fwd.resize(T - 1);
    gt.vis_bwd.resize(T - 1);
    gt.vis_bwd0.resize(T - 1);
    for (int t = 1; t < T; ++t) {
        for (int v = 0; v < V; ++v) {
            gt.flow_fwd[t - 1].push_back(flow_between(t - 1, t, v));
            gt.flow_bwd[t - 1].push_back(flow_between(t, t - 1, v));
            gt.flow_bwd0[t - 1].push_back(flow_between(t, 0, v));
            gt.vis_fwd[t - 1].push_back(visibility(t - 1, t, v, gt.flow_fwd[t - 1][v]));
            gt.vis_bwd[t - 1].push_back(visibility(t, t - 1, v, gt.flow_bwd[t - 1][v]));
            gt.vis_bwd0[t - 1].push_back(visibility(t, 0, v, gt.flow_bwd0[t - 1][v]));
        }
    }

    auto top1_dynamic = [&](int t, int v) {
        BoolMask m(spec.rig.width, spec.rig.height);
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                int32_t id = top1(t, v, y, x);
                m.at(y, x) = (id >= 0 && !label_is_static(gt.labels[size_t(id)])) ? 1 : 0;
            }
        return m;
    };
    gt.dyn_mask.resize(T);
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            int pair = t == 0 ? 1 : t - 1;
            BoolMask a = top1_dynamic(t, v);
            BoolMask b = top1_dynamic(pair, v);
            for (size_t i = 0; i < a.v.size(); ++i) a.v[i] = (a.v[i] | b.v[i]) ? 1 : 0;
            gt.dyn_mask[t].push_back(std::move(a));
        }

    gt.influence.resize(T);
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            BoolMask m(spec.rig.width, spec.rig.height);
            for (size_t i = 0; i < gt.sets[t].g.size(); ++i) {
                if (label_is_static(gt.labels[i])) continue;
                Splat2D s;
                if (project_gaussian(gt.sets[t].g[i], gt.cams[v], int32_t(i), &s))
                    mark_influence(s, &m);
            }
            gt.influence[t].push_back(std::move(m));
        }

    return gt;
}

BoolMask static_region_mask(const GroundTruth& gt, int view, int frame_a, int frame_b,
                            int margin_px) {
    if (view < 0 || size_t(view) >= gt.cams.size())
        throw ContractViolation("static_region_mask: view out of range");
    if (frame_a < 0 || frame_b < 0 || size_t(frame_a) >= gt.influence.size() ||
        size_t(frame_b) >= gt.influence.size())
        throw ContractViolation("static_region_mask: frame out of range");
    if (margin_px < 0) throw ContractViolation("static_region_mask: negative margin");
    BoolMask u = gt.influence[size_t(frame_a)][size_t(view)];
    const BoolMask& b = gt.influence[size_t(frame_b)][size_t(view)];
    for (size_t i = 0; i < u.v.size(); ++i) u.v[i] = (u.v[i] | b.v[i]) ? 1 : 0;
    if (margin_px > 0) u = dilate(u, 2 * margin_px + 1);
    for (auto& px : u.v) px = px ? 0 : 1;
    return u;
}

std::vector<SceneSpec> standard_scenes() {
    std::vector<SceneSpec> out;

    {
        SceneSpec s;
        s.name = "static";
        s.seed = 101;
        s.frames = 4;
        s.backdrop_wall = false;
        s.statics.push_back({45, {0, 0, 0.5}, 1.4, {0.55, 0.5, 0.42}, 0.13, 0.24, 0.92});
        s.statics.push_back({20, {2.2, -1.0, -1.0}, 0.8, {0.3, 0.55, 0.4}, 0.12, 0.2, 0.9});
        out.push_back(std::move(s));
    }
    {
        SceneSpec s;
        s.name = "mover";
        s.seed = 202;
        s.frames = 10;
        s.backdrop_wall = true;
        s.statics.push_back({22, {-3.2, 1.4, -0.5}, 0.8, {0.32, 0.6, 0.38}, 0.12, 0.2, 0.9});
        MoverSpec m;
        m.blob = {48, {-0.7, -0.2, 1.0}, 1.15, {0.78, 0.55, 0.35}, 0.14, 0.22, 0.92};
        m.velocity = {0.17, 0.012, 0};
        m.rot_axis = {0.25, 1, 0.1};
        m.rot_deg_per_frame = 0.9;
        s.movers.push_back(std::move(m));
        out.push_back(std::move(s));
    }
    {
        SceneSpec s;
        s.name = "two-movers-static-between";
        s.seed = 303;
        s.frames = 10;
        s.backdrop_wall = true;
        s.statics.push_back({24, {0, 0, 0.5}, 0.6, {0.35, 0.62, 0.4}, 0.12, 0.18, 0.9});
        MoverSpec a;
        a.blob = {30, {-3.4, 0.1, 0.6}, 0.85, {0.8, 0.5, 0.3}, 0.13, 0.2, 0.92};
        a.velocity = {0.17, 0, 0};
        s.movers.push_back(std::move(a));
        MoverSpec b;
        b.blob = {30, {3.4, -0.2, 0.4}, 0.85, {0.75, 0.6, 0.3}, 0.13, 0.2, 0.92};
        b.velocity = {-0.17, 0.015, 0};
        s.movers.push_back(std::move(b));
        out.push_back(std::move(s));
    }
    {
        SceneSpec s;
        s.name = "emerging";
        s.seed = 404;
        s.frames = 10;
        s.backdrop_wall = true;
        MoverSpec m;
        m.blob = {48, {-0.7, -0.2, 1.0}, 1.15, {0.42, 0.48, 0.6}, 0.12, 0.22, 0.92};
        m.velocity = {0.15, 0.01, 0};
        m.rot_axis = {0, 1, 0};
        m.rot_deg_per_frame = 0.6;
        s.movers.push_back(std::move(m));
        EmergingSpec e;
        e.blob = {22, {-0.55, -0.08, 1.6}, 0.5, {0.88, 0.1, 0.08}, 0.05, 0.16, 0.85};
        e.appear_frame = 1;
        e.attach_mover = 0;
        s.emergers.push_back(std::move(e));
        out.push_back(std::move(s));
    }
    return out;
}

SceneSpec standard_scene(const std::string& name) {
    for (auto& s : standard_scenes())
        if (s.name == name) return s;
    throw ConfigError("unknown scene: " + name);
}

void save_cameras_json(const std::string& path, const std::vector<Camera>& cams) {
    json arr = json::array();
    for (const Camera& c : cams) {
        json jc;
        jc["width"] = c.width;
        jc["height"] = c.height;
        jc["fx"] = c.fx;
        jc["fy"] = c.fy;
        jc["cx"] = c.cx;
        jc["cy"] = c.cy;
        jc["R"] = c.R.m;
        jc["t"] = vec3_to_json(c.t);
        arr.push_back(std::move(jc));
    }
    write_file_atomic(path, arr.dump(2) + "\n");
}

std::vector<Camera> load_cameras_json(const std::string& path) {
    json arr;
    try {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open " + path);
        in >> arr;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    std::vector<Camera> cams;
    try {
        for (const auto& jc : arr) {
            Camera c;
            c.width = jc.at("width");
            c.height = jc.at("height");
            c.fx = jc.at("fx");
            c.fy = jc.at("fy");
            c.cx = jc.at("cx");
            c.cy = jc.at("cy");
            const auto& r = jc.at("R");
            if (r.size() != 9) throw FormatError(path + ": R must have 9 entries");
            for (size_t i = 0; i < 9; ++i) c.R.m[i] = r.at(i);
            c.t = vec3_from_json(jc.at("t"));
            if (c.width <= 0 || c.height <= 0) throw FormatError(path + ": bad image size");
            cams.push_back(c);
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return cams;
}

void export_scene(const GroundTruth& gt, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "gt");

    json root = spec_to_json(gt.spec);
    root["held_out_view"] = 0;
    root["labels"] = gt.labels;
    write_file_atomic((fs::path(dir) / "scene.json").string(), root.dump(2) + "\n");
    save_cameras_json((fs::path(dir) / "cameras.json").string(), gt.cams);

    const int T = gt.spec.frames;
    const int V = gt.spec.rig.cameras;
    char buf[128];
    for (int t = 0; t < T; ++t) {
        std::snprintf(buf, sizeof buf, "set_%04d.mgsply", t);
        save_gaussians((fs::path(dir) / "gt" / buf).string(), gt.sets[size_t(t)]);
    }
    auto gtp = [&](const std::string& name) { return (fs::path(dir) / "gt" / name).string(); };
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            const Image& img = gt.renders[size_t(t)][size_t(v)];
            save_image(gtp(frame_view_name("frame", t, v, "mgsimg")), img);
            save_png_rgb8(gtp(frame_view_name("frame", t, v, "png")), img);
            save_png_mask1(gtp(frame_view_name("dyn", t, v, "png")),
                           gt.dyn_mask[size_t(t)][size_t(v)]);
            save_png_mask1(gtp(frame_view_name("infl", t, v, "png")),
                           gt.influence[size_t(t)][size_t(v)]);
        }
    for (int t = 1; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            save_flow(gtp(frame_view_name("flow_fwd", t, v, "mgsflo")),
                      gt.flow_fwd[size_t(t - 1)][size_t(v)]);
            save_flow(gtp(frame_view_name("flow_bwd", t, v, "mgsflo")),
                      gt.flow_bwd[size_t(t - 1)][size_t(v)]);
            save_flow(gtp(frame_view_name("flow_bwd0", t, v, "mgsflo")),
                      gt.flow_bwd0[size_t(t - 1)][size_t(v)]);
            save_png_mask1(gtp(frame_view_name("vis_fwd", t, v, "png")),
                           gt.vis_fwd[size_t(t - 1)][size_t(v)]);
        }
}

GroundTruth load_scene_dir(const std::string& dir) {
    fs::path sj = fs::path(dir) / "scene.json";
    json root;
    try {
        std::ifstream in(sj);
        if (!in) throw FormatError("cannot open " + sj.string());
        in >> root;
    } catch (const json::exception& e) {
        throw FormatError(sj.string() + ": " + e.what());
    }
    SceneSpec spec;
    std::vector<int32_t> labels;
    try {
        spec = spec_from_json(root);
        labels = root.at("labels").get<std::vector<int32_t>>();
    } catch (const json::exception& e) {
        throw FormatError(sj.string() + ": " + e.what());
    }
    GroundTruth gt = build_scene(spec);
    if (gt.labels != labels)
        throw FormatError(sj.string() + ": stored labels do not match the rebuilt scene");
    return gt;
}

} // namespace mgs
