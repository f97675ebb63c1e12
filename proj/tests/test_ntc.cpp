#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "mgs/errors.hpp"
#include "mgs/ntc.hpp"
#include "mgs/rng.hpp"

using namespace mgs;

namespace {

Aabb unit_box() {
    Aabb b;
    b.min = {-1, -1, -1};
    b.max = {1, 1, 1};
    return b;
}

std::vector<Vec3> random_positions(Rng& rng, int n) {
    std::vector<Vec3> p;
    for (int i = 0; i < n; ++i)
        p.push_back({rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95),
                     rng.uniform(-0.95, 0.95)});
    return p;
}

} // namespace

TEST_CASE("hash-grid level resolutions follow the pinned geometric schedule") {
    // [DERIVED] floor(16 * exp(l * ln(32)/15) + 1e-9) for l = 0..15
    HashGridConfig cfg;
    const int want[16] = {16,  20,  25,  32,  40,  50,  64,  80,
                          101, 128, 161, 203, 256, 322, 406, 512};
    for (int l = 0; l < 16; ++l) CHECK(cfg.level_resolution(l) == want[l]);
    CHECK(cfg.feature_dim() == 64);
}

TEST_CASE("a fresh map is the exact zero update") {
    Rng rng(51);
    NeuralMap map(HashGridConfig{}, 7, 99, unit_box());
    std::vector<Vec3> pos = random_positions(rng, 16);
    std::vector<double> out;
    map.forward(pos, &out);
    REQUIRE(out.size() == 16 * 7);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("construction is deterministic per seed") {
    NeuralMap a(HashGridConfig{}, 7, 12, unit_box());
    NeuralMap b(HashGridConfig{}, 7, 12, unit_box());
    NeuralMap c(HashGridConfig{}, 7, 13, unit_box());
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
    CHECK(a.grid_param_count() ==
          size_t(HashGridConfig{}.levels) * (1 << 15) * HashGridConfig{}.features_per_level);
}

TEST_CASE("backward matches central finite differences across grid and MLP") {
    Rng rng(52);
    NeuralMap map(HashGridConfig{}, 5, 7, unit_box());
    // knock every parameter off its init (the output layer starts at zero)
    std::vector<double>& p = map.params();
    for (double& v : p) v += rng.uniform(-0.05, 0.05);

    std::vector<Vec3> pos = random_positions(rng, 12);
    std::vector<double> w(12 * 5);
    for (double& v : w) v = rng.uniform(-1, 1);

    auto loss = [&]() {
        std::vector<double> out;
        map.forward(pos, &out);
        double L = 0;
        for (size_t i = 0; i < out.size(); ++i) L += w[i] * out[i];
        return L;
    };

    std::vector<double> grad;
    map.backward(pos, w, &grad);
    REQUIRE(grad.size() == p.size());

    // probe touched grid entries plus a spread of MLP weights
    std::vector<size_t> probes;
    size_t found = 0;
    for (size_t i = 0; i < map.grid_param_count() && found < 60; ++i)
        if (std::fabs(grad[i]) > 1e-12) {
            probes.push_back(i);
            ++found;
        }
    REQUIRE(found == 60);
    for (size_t i = map.grid_param_count(); i < p.size(); i += 97) probes.push_back(i);

    int checked = 0;
    for (size_t idx : probes) {
        const double x0 = p[idx], h = 1e-5;
        p[idx] = x0 + h;
        double lp = loss();
        p[idx] = x0 - h;
        double lm = loss();
        p[idx] = x0;
        double fd = (lp - lm) / (2 * h);
        if (std::fabs(grad[idx]) < 1e-8 && std::fabs(fd) < 1e-8) continue;
        CHECK(std::fabs(fd - grad[idx]) <=
              1e-3 * std::max({std::fabs(fd), std::fabs(grad[idx]), 1e-6}));
        ++checked;
    }
    CHECK(checked > 80);
}

TEST_CASE("adaptive steps fit a small target and diverge loudly on bad gradients") {
    Rng rng(53);
    NeuralMap map(HashGridConfig{}, 3, 21, unit_box());
    std::vector<Vec3> pos = random_positions(rng, 10);
    std::vector<double> target(10 * 3);
    for (double& v : target) v = rng.uniform(-0.5, 0.5);

    auto loss_and_grad = [&](std::vector<double>* dL) {
        std::vector<double> out;
        map.forward(pos, &out);
        double L = 0;
        dL->assign(out.size(), 0.0);
        for (size_t i = 0; i < out.size(); ++i) {
            double d = out[i] - target[i];
            L += 0.5 * d * d;
            (*dL)[i] = d;
        }
        return L;
    };

    std::vector<double> dL;
    double first = loss_and_grad(&dL);
    for (int it = 0; it < 400; ++it) {
        loss_and_grad(&dL);
        map.backward_and_step(pos, dL, 2e-2, 2e-3);
    }
    double last = loss_and_grad(&dL);
    CHECK(last < first / 10.0);
    CHECK(map.step_count() == 400);

    std::vector<double> bad(dL.size(), std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(map.backward_and_step(pos, bad, 2e-2, 2e-3), TrainingDivergence);
}

TEST_CASE("save/load round-trips the container") {
    namespace fs = std::filesystem;
    Rng rng(54);
    NeuralMap map(HashGridConfig{}, 7, 31, unit_box());
    std::vector<double>& p = map.params();
    for (double& v : p) v += rng.uniform(-0.05, 0.05);

    fs::path f1 = fs::temp_directory_path() / "mgs_test_map1.mgsntc";
    fs::path f2 = fs::temp_directory_path() / "mgs_test_map2.mgsntc";
    map.save(f1.string());
    NeuralMap loaded = NeuralMap::load(f1.string());
    CHECK(loaded.output_dim() == 7);
    CHECK(loaded.step_count() == 0);
    CHECK(loaded.grid_config().levels == 16);
    loaded.save(f2.string());

    // float32 storage: a save/load/save cycle is a fixpoint
    std::vector<uint8_t> b1, b2;
    {
        FILE* f = fopen(f1.string().c_str(), "rb");
        REQUIRE(f);
        fseek(f, 0, SEEK_END);
        b1.resize(size_t(ftell(f)));
        fseek(f, 0, SEEK_SET);
        REQUIRE(fread(b1.data(), 1, b1.size(), f) == b1.size());
        fclose(f);
        f = fopen(f2.string().c_str(), "rb");
        REQUIRE(f);
        fseek(f, 0, SEEK_END);
        b2.resize(size_t(ftell(f)));
        fseek(f, 0, SEEK_SET);
        REQUIRE(fread(b2.data(), 1, b2.size(), f) == b2.size());
        fclose(f);
    }
    CHECK(b1 == b2);

    // loaded map evaluates deterministically
    std::vector<Vec3> pos = random_positions(rng, 8);
    std::vector<double> o1, o2;
    loaded.forward(pos, &o1);
    NeuralMap::load(f2.string()).forward(pos, &o2);
    CHECK(o1 == o2);

    // corrupt magic
    b1[0] ^= 0xFF;
    fs::path f3 = fs::temp_directory_path() / "mgs_test_map3.mgsntc";
    {
        FILE* f = fopen(f3.string().c_str(), "wb");
        fwrite(b1.data(), 1, b1.size(), f);
        fclose(f);
    }
    CHECK_THROWS_AS(NeuralMap::load(f3.string()), FormatError);
    fs::remove(f1);
    fs::remove(f2);
    fs::remove(f3);
}

TEST_CASE("apply_deformation updates exactly the selected members") {
    GaussianSet set;
    for (int i = 0; i < 4; ++i) {
        Gaussian3D g;
        g.u = {float(i), float(i) * 2, float(i) * 3};
        g.q = {0.9f, 0.1f, -0.2f, 0.3f};
        g.s = {0.5f, 0.5f, 0.5f};
        g.o = 0.7f;
        g.sh[0] = 1.0f;
        set.g.push_back(g);
    }
    set.recompute_bbox();

    IndexSet g_m{1, 3};
    std::vector<std::array<float, 3>> du{{0.5f, -0.25f, 0.125f}, {0, 0, 0}};
    std::vector<std::array<float, 4>> dq{{0.02f, -0.01f, 0.03f, 0.005f}, {0, 0, 0, 0}};
    GaussianSet out = apply_deformation(set, g_m, du, dq);

    // untouched members are bitwise identical
    for (int i : {0, 2})
        CHECK(std::memcmp(&out.g[size_t(i)], &set.g[size_t(i)], sizeof(Gaussian3D)) == 0);

    // member 1: double-precision update rounded to float32
    for (int k = 0; k < 3; ++k)
        CHECK(out.g[1].u[size_t(k)] ==
              float(double(set.g[1].u[size_t(k)]) + double(du[0][size_t(k)])));
    Quat shift = quat_normalize({1.0 + double(dq[0][0]), double(dq[0][1]), double(dq[0][2]),
                                 double(dq[0][3])});
    Quat want = quat_normalize(quat_multiply(set.g[1].rot(), shift));
    CHECK(out.g[1].q[0] == float(want.w));
    CHECK(out.g[1].q[1] == float(want.x));
    CHECK(out.g[1].q[2] == float(want.y));
    CHECK(out.g[1].q[3] == float(want.z));

    // member 3 got the all-zero row: bitwise no-op, no renormalization drift
    CHECK(std::memcmp(&out.g[3], &set.g[3], sizeof(Gaussian3D)) == 0);

    // degenerate rotation update
    std::vector<std::array<float, 4>> bad_dq{{-1.0f, 0, 0, 0}, {0, 0, 0, 0}};
    CHECK_THROWS_AS(apply_deformation(set, g_m, du, bad_dq), DegenerateInput);

    // out-of-range index
    IndexSet oob{1, 9};
    CHECK_THROWS_AS(apply_deformation(set, oob, du, dq), FormatError);
}

TEST_CASE("apply_sh_offsets adds to the selected coefficients only") {
    GaussianSet set;
    for (int i = 0; i < 3; ++i) {
        Gaussian3D g;
        for (int k = 0; k < 12; ++k) g.sh[size_t(k)] = float(k) * 0.1f + float(i);
        set.g.push_back(g);
    }
    set.recompute_bbox();
    IndexSet g_new{2};
    std::vector<std::array<float, 12>> dsh(1);
    for (int k = 0; k < 12; ++k) dsh[0][size_t(k)] = float(k) * -0.01f;
    GaussianSet out = apply_sh_offsets(set, g_new, dsh);
    CHECK(std::memcmp(&out.g[0], &set.g[0], sizeof(Gaussian3D)) == 0);
    CHECK(std::memcmp(&out.g[1], &set.g[1], sizeof(Gaussian3D)) == 0);
    for (int k = 0; k < 12; ++k)
        CHECK(out.g[2].sh[size_t(k)] ==
              float(double(set.g[2].sh[size_t(k)]) + double(dsh[0][size_t(k)])));
    CHECK(out.g[2].u == set.g[2].u);
    CHECK(out.g[2].q == set.g[2].q);
}
