// Tiled OpenMP rasterizer vs the serial reference on the same scenes.
// MGS_THREADS controls the parallel path's thread count.

#include <benchmark/benchmark.h>

#include <cmath>

#include "mgs/rasterizer.hpp"
#include "mgs/rasterizer_ref.hpp"
#include "mgs/rng.hpp"
#include "mgs/threads.hpp"

namespace {

using namespace mgs;

GaussianSet make_scene(int count) {
    Rng rng(42);
    GaussianSet set;
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        g.u = {float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)),
               float(rng.uniform(2.0, 6.0))};
        Quat q = quat_normalize({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        g.q = {float(q.w), float(q.x), float(q.y), float(q.z)};
        for (int k = 0; k < 3; ++k) g.s[size_t(k)] = float(std::exp(rng.uniform(-3.0, -0.9)));
        g.o = float(rng.uniform(0.05, 0.95));
        for (int c = 0; c < 3; ++c) {
            g.sh[size_t(c * 4)] = float(rng.uniform(0.0, 1.0) / kShC0);
            for (int k = 1; k < 4; ++k) g.sh[size_t(c * 4 + k)] = float(rng.uniform(-0.3, 0.3));
        }
        set.g.push_back(g);
    }
    set.recompute_bbox();
    return set;
}

Camera make_camera() {
    Camera cam;
    cam.width = 128;
    cam.height = 128;
    cam.fx = cam.fy = 110.0;
    cam.cx = 0.5 * (cam.width - 1);
    cam.cy = 0.5 * (cam.height - 1);
    cam.R.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    cam.t = {0, 0, 0};
    return cam;
}

void BM_render_tiled(benchmark::State& state) {
    GaussianSet set = make_scene(int(state.range(0)));
    Camera cam = make_camera();
    for (auto _ : state) {
        RenderedImage img = render(set, cam);
        benchmark::DoNotOptimize(img.rgb.v.data());
    }
}
BENCHMARK(BM_render_tiled)->Arg(50)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_render_reference(benchmark::State& state) {
    GaussianSet set = make_scene(int(state.range(0)));
    Camera cam = make_camera();
    for (auto _ : state) {
        RenderedImage img = ref_render(set, cam);
        benchmark::DoNotOptimize(img.rgb.v.data());
    }
}
BENCHMARK(BM_render_reference)->Arg(50)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_gim_tiled(benchmark::State& state) {
    GaussianSet set = make_scene(int(state.range(0)));
    Camera cam = make_camera();
    for (auto _ : state) {
        GimBuffer gim = render_gim(set, cam, 3);
        benchmark::DoNotOptimize(gim.ids.data());
    }
}
BENCHMARK(BM_gim_tiled)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_gim_reference(benchmark::State& state) {
    GaussianSet set = make_scene(int(state.range(0)));
    Camera cam = make_camera();
    for (auto _ : state) {
        GimBuffer gim = ref_render_gim(set, cam, 3);
        benchmark::DoNotOptimize(gim.ids.data());
    }
}
BENCHMARK(BM_gim_reference)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_render_backward(benchmark::State& state) {
    GaussianSet set = make_scene(int(state.range(0)));
    Camera cam = make_camera();
    Image dL(cam.width, cam.height, 3);
    for (double& v : dL.v) v = 1.0;
    for (auto _ : state) {
        GaussianGrads g = render_backward(set, cam, dL);
        benchmark::DoNotOptimize(g.du.data());
    }
}
BENCHMARK(BM_render_backward)->Arg(50)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
    mgs::init_threads_from_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
