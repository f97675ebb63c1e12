#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mgs/config.hpp"
#include "mgs/errors.hpp"
#include "mgs/image.hpp"
#include "mgs/io.hpp"
#include "mgs/rng.hpp"

using namespace mgs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

GaussianSet random_set(Rng& rng, size_t n) {
    GaussianSet set;
    for (size_t i = 0; i < n; ++i) {
        Gaussian3D g;
        for (int k = 0; k < 3; ++k) g.u[size_t(k)] = float(rng.uniform(-2.0, 2.0));
        Quat q = quat_normalize({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        g.q = {float(q.w), float(q.x), float(q.y), float(q.z)};
        for (int k = 0; k < 3; ++k) g.s[size_t(k)] = float(rng.uniform(0.05, 0.5));
        g.o = float(rng.uniform(0.1, 0.99));
        for (int k = 0; k < 12; ++k) g.sh[size_t(k)] = float(rng.uniform(-1.0, 1.0));
        set.g.push_back(g);
    }
    set.recompute_bbox();
    return set;
}

size_t varint_len(uint64_t v) {
    size_t n = 1;
    while (v >= 0x80) {
        v >>= 7;
        ++n;
    }
    return n;
}

// Layout: 16-byte header, u32 + gap varints + 28 bytes per g_m entry,
// u32 + gap varints + 48 bytes per g_new entry. Gaps start from -1.
size_t expected_delta_size(const FrameDelta& d) {
    size_t n = 16 + 4 + 4 + 28 * d.g_m.size() + 48 * d.g_new.size();
    int64_t prev = -1;
    for (int32_t i : d.g_m) {
        n += varint_len(uint64_t(int64_t(i) - prev));
        prev = i;
    }
    prev = -1;
    for (int32_t i : d.g_new) {
        n += varint_len(uint64_t(int64_t(i) - prev));
        prev = i;
    }
    return n;
}

FrameDelta make_delta(Rng& rng, int frame, const IndexSet& gm, const IndexSet& gnew) {
    FrameDelta d;
    d.frame_index = frame;
    d.g_m = gm;
    d.g_new = gnew;
    for (size_t i = 0; i < gm.size(); ++i) {
        std::array<float, 3> du;
        std::array<float, 4> dq;
        for (float& v : du) v = float(rng.uniform(-0.2, 0.2));
        for (float& v : dq) v = float(rng.uniform(-0.05, 0.05));
        d.du.push_back(du);
        d.dq.push_back(dq);
    }
    for (size_t i = 0; i < gnew.size(); ++i) {
        std::array<float, 12> dsh;
        for (float& v : dsh) v = float(rng.uniform(-0.3, 0.3));
        d.dsh.push_back(dsh);
    }
    return d;
}

bool delta_equal(const FrameDelta& a, const FrameDelta& b) {
    if (a.frame_index != b.frame_index || a.g_m != b.g_m || a.g_new != b.g_new) return false;
    if (std::memcmp(a.du.data(), b.du.data(), a.du.size() * sizeof(a.du[0])) != 0) return false;
    if (std::memcmp(a.dq.data(), b.dq.data(), a.dq.size() * sizeof(a.dq[0])) != 0) return false;
    return std::memcmp(a.dsh.data(), b.dsh.data(), a.dsh.size() * sizeof(a.dsh[0])) == 0;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(MGS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

} // namespace

TEST_CASE("gaussian container round-trips bitwise with the stated size") {
    Rng rng(81);
    fs::path dir = temp_dir("mgs_io_ply");
    for (size_t n : {size_t(0), size_t(1), size_t(57)}) {
        GaussianSet set = random_set(rng, n);
        fs::path p = dir / ("set_" + std::to_string(n) + ".mgsply");
        save_gaussians(p.string(), set);
        CHECK(fs::file_size(p) == 16 + 92 * n);
        GaussianSet back = load_gaussians(p.string());
        REQUIRE(back.size() == n);
        if (n) CHECK(std::memcmp(back.g.data(), set.g.data(), n * sizeof(Gaussian3D)) == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("gaussian container rejects corruption") {
    Rng rng(82);
    fs::path dir = temp_dir("mgs_io_ply_bad");
    fs::path p = dir / "set.mgsply";
    save_gaussians(p.string(), random_set(rng, 9));
    std::vector<uint8_t> bytes = slurp(p);

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 5);
    spit(dir / "trunc.mgsply", truncated);
    CHECK_THROWS_AS(load_gaussians((dir / "trunc.mgsply").string()), FormatError);

    std::vector<uint8_t> flipped = bytes;
    flipped[20] ^= 0x40;  // payload byte: crc must catch it
    spit(dir / "flip.mgsply", flipped);
    CHECK_THROWS_AS(load_gaussians((dir / "flip.mgsply").string()), FormatError);

    std::vector<uint8_t> magic = bytes;
    magic[0] = 'X';
    spit(dir / "magic.mgsply", magic);
    CHECK_THROWS_AS(load_gaussians((dir / "magic.mgsply").string()), FormatError);

    CHECK_THROWS_AS(load_gaussians((dir / "missing.mgsply").string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("delta container round-trips and matches the layout size formula") {
    Rng rng(83);
    fs::path dir = temp_dir("mgs_io_dlt");

    // gaps straddle the 1/2/3-byte varint boundaries
    IndexSet gm = {0, 126, 127, 128, 16382, 16511, 2113662};
    IndexSet gnew = {126, 16382, 2113662};
    FrameDelta d = make_delta(rng, 42, gm, gnew);

    std::vector<uint8_t> enc = encode_delta(d);
    CHECK(enc.size() == expected_delta_size(d));
    CHECK(delta_encoded_size(d) == enc.size());

    fs::path p = dir / "delta.mgsdlt";
    save_delta(p.string(), d);
    CHECK(fs::file_size(p) == enc.size());
    CHECK(delta_equal(load_delta(p.string()), d));

    FrameDelta empty;
    empty.frame_index = 7;
    CHECK(delta_encoded_size(empty) == 24);
    save_delta((dir / "empty.mgsdlt").string(), empty);
    CHECK(fs::file_size(dir / "empty.mgsdlt") == 24);
    CHECK(delta_equal(load_delta((dir / "empty.mgsdlt").string()), empty));
    fs::remove_all(dir);
}

TEST_CASE("delta container enforces its invariants") {
    Rng rng(84);
    FrameDelta bad_subset = make_delta(rng, 1, {2, 5}, {3});
    CHECK_THROWS_AS(encode_delta(bad_subset), ContractViolation);

    FrameDelta unsorted = make_delta(rng, 1, {5, 2}, {});
    CHECK_THROWS_AS(encode_delta(unsorted), ContractViolation);

    FrameDelta counts = make_delta(rng, 1, {1, 2}, {});
    counts.du.pop_back();
    CHECK_THROWS_AS(encode_delta(counts), ContractViolation);

    fs::path dir = temp_dir("mgs_io_dlt_bad");
    FrameDelta good = make_delta(rng, 3, {0, 4}, {4});
    save_delta((dir / "d.mgsdlt").string(), good);
    std::vector<uint8_t> bytes = slurp(dir / "d.mgsdlt");
    bytes[17] ^= 0x01;  // payload corruption -> crc mismatch
    spit(dir / "d.mgsdlt", bytes);
    CHECK_THROWS_AS(load_delta((dir / "d.mgsdlt").string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("apply_delta does double arithmetic with float32 storage") {
    Rng rng(85);
    GaussianSet prev = random_set(rng, 4);
    FrameDelta d = make_delta(rng, 1, {1, 3}, {3});

    GaussianSet next = apply_delta(prev, d);
    REQUIRE(next.size() == prev.size());
    CHECK(std::memcmp(&next.g[0], &prev.g[0], sizeof(Gaussian3D)) == 0);
    CHECK(std::memcmp(&next.g[2], &prev.g[2], sizeof(Gaussian3D)) == 0);

    for (int slot = 0; slot < 2; ++slot) {
        size_t gi = slot == 0 ? 1 : 3;
        for (int k = 0; k < 3; ++k)
            CHECK(next.g[gi].u[size_t(k)] ==
                  float(double(prev.g[gi].u[size_t(k)]) + double(d.du[size_t(slot)][size_t(k)])));
        Quat dq{1.0 + double(d.dq[size_t(slot)][0]), double(d.dq[size_t(slot)][1]),
                double(d.dq[size_t(slot)][2]), double(d.dq[size_t(slot)][3])};
        Quat q = quat_normalize(quat_multiply(
            Quat{double(prev.g[gi].q[0]), double(prev.g[gi].q[1]), double(prev.g[gi].q[2]),
                 double(prev.g[gi].q[3])},
            quat_normalize(dq)));
        CHECK(next.g[gi].q[0] == float(q.w));
        CHECK(next.g[gi].q[1] == float(q.x));
        CHECK(next.g[gi].q[2] == float(q.y));
        CHECK(next.g[gi].q[3] == float(q.z));
        CHECK(std::memcmp(next.g[gi].s.data(), prev.g[gi].s.data(), 3 * sizeof(float)) == 0);
        CHECK(next.g[gi].o == prev.g[gi].o);
    }
    for (int k = 0; k < 12; ++k)
        CHECK(next.g[3].sh[size_t(k)] ==
              float(double(prev.g[3].sh[size_t(k)]) + double(d.dsh[0][size_t(k)])));
    for (int k = 0; k < 12; ++k) CHECK(next.g[1].sh[size_t(k)] == prev.g[1].sh[size_t(k)]);

    FrameDelta oob = make_delta(rng, 1, {9}, {});
    CHECK_THROWS_AS(apply_delta(prev, oob), FormatError);

    FrameDelta dead = make_delta(rng, 1, {0}, {});
    dead.dq[0] = {-1.0f, 0.0f, 0.0f, 0.0f};
    CHECK_THROWS_AS(apply_delta(prev, dead), DegenerateInput);
}

TEST_CASE("image container round-trips and PNG export writes real PNGs") {
    Rng rng(86);
    fs::path dir = temp_dir("mgs_io_img");
    Image img(13, 9, 3);
    for (double& v : img.v) v = rng.uniform(0.0, 1.0);

    save_image((dir / "img.mgsimg").string(), img);
    Image back = load_image((dir / "img.mgsimg").string());
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(back.v[i] == double(float(img.v[i])));

    save_png_rgb8((dir / "img.png").string(), img);
    std::vector<uint8_t> png = slurp(dir / "img.png");
    REQUIRE(png.size() > 8);
    const uint8_t magic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    CHECK(std::memcmp(png.data(), magic, 8) == 0);

    BoolMask m(13, 9);
    m.at(2, 3) = 1;
    save_png_mask1((dir / "mask.png").string(), m);
    std::vector<uint8_t> mp = slurp(dir / "mask.png");
    CHECK(std::memcmp(mp.data(), magic, 8) == 0);
    fs::remove_all(dir);
}

TEST_CASE("config parser: defaults, full coverage, comments") {
    PipelineConfig d = parse_config_text("");
    CHECK(d.flow_tau == 1.0);
    CHECK(d.morph_kernel == 20);
    CHECK(d.eps == 2.0);
    CHECK(d.top_n == 1);
    CHECK(d.deform_iters == 100);
    CHECK(d.lambda == 0.2);
    CHECK(d.percentile == 99.0);
    CHECK(d.flow_source == "gt");
    CHECK(d.use_clustering);
    CHECK(d.out_dir.empty());

    PipelineConfig c = parse_config_text(
        "# full config\n"
        "flow_tau = 1.5\n"
        "diff_thresh = 8\n"
        "morph_kernel = 11\n"
        "eps = 0.75\n"
        "min_samples = 4\n"
        "use_clustering = false\n"
        "top_n = 3   # inline comment\n"
        "deform_iters = 12\n"
        "optim_iters = 7\n"
        "lambda = 0.35\n"
        "percentile = 97.5\n"
        "lr_grid = 0.01\n"
        "lr_mlp = 0.001\n"
        "seed = 99\n"
        "flow_source = lk\n"
        "lk_levels = 2\n"
        "out_dir = /tmp/somewhere\n"
        "model_init = init.mgsply\n");
    CHECK(c.flow_tau == 1.5);
    CHECK(c.diff_thresh == 8.0);
    CHECK(c.morph_kernel == 11);
    CHECK(c.eps == 0.75);
    CHECK(c.min_samples == 4);
    CHECK_FALSE(c.use_clustering);
    CHECK(c.top_n == 3);
    CHECK(c.deform_iters == 12);
    CHECK(c.optim_iters == 7);
    CHECK(c.lambda == 0.35);
    CHECK(c.percentile == 97.5);
    CHECK(c.lr_grid == 0.01);
    CHECK(c.lr_mlp == 0.001);
    CHECK(c.seed == 99);
    CHECK(c.flow_source == "lk");
    CHECK(c.lk_levels == 2);
    CHECK(c.out_dir == "/tmp/somewhere");
    CHECK(c.model_init == "init.mgsply");

    TrainConfig t = c.train_config();
    CHECK(t.cluster_eps == 0.75);
    CHECK(t.gim_top_n == 3);
    CHECK(t.attention_percentile == 97.5);
    CHECK(t.seed == 99);
}

TEST_CASE("config parser rejects malformed and out-of-range input") {
    using doctest::Contains;
    CHECK_THROWS_WITH_AS(parse_config_text("\n\nbogus_key = 1\n"), Contains("line 3"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("eps = 1\neps = 2\n"), Contains("duplicate"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("just a line\n"), Contains("key=value"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("eps = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("top_n = 3x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("top_n = 6\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("top_n = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("lambda = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("percentile = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("eps = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("flow_source = sift\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("deform_iters = -1\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("cli: argument and input errors map to documented exit codes") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("scene gen no-such-scene /tmp/mgs_cli_nowhere") == 2);
    CHECK(run_cli("fit /nonexistent-scene-dir") == 3);

    fs::path dir = temp_dir("mgs_cli_bad");
    spit(dir / "corrupt.mgsply", {'M', 'G', 'X', '!'});
    spit(dir / "cams.json", {'[', ']'});
    CHECK(run_cli("render " + (dir / "corrupt.mgsply").string() + " " +
                  (dir / "cams.json").string() + " " + (dir / "out.png").string()) == 3);

    std::string bad_cfg = (dir / "bad.cfg").string();
    spit(dir / "bad.cfg", {'t', 'o', 'p', '_', 'n', '=', '9', '\n'});
    CHECK(run_cli("stream " + dir.string() + " --config " + bad_cfg) == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli: scene gen, fit, stream, eval and render complete end to end") {
    fs::path dir = temp_dir("mgs_cli_happy");
    fs::path scene = dir / "static";

    REQUIRE(run_cli("scene gen static " + scene.string()) == 0);
    CHECK(fs::exists(scene / "scene.json"));
    CHECK(fs::exists(scene / "cameras.json"));

    REQUIRE(run_cli("fit " + scene.string() + " --iters 0 --count 32") == 0);
    REQUIRE(fs::exists(scene / "fit0.mgsply"));
    CHECK(fs::file_size(scene / "fit0.mgsply") == 16 + 92 * 32);

    std::string cfg_text = "deform_iters = 2\noptim_iters = 2\nmorph_kernel = 5\n";
    spit(dir / "quick.cfg", std::vector<uint8_t>(cfg_text.begin(), cfg_text.end()));
    REQUIRE(run_cli("stream " + scene.string() + " --config " + (dir / "quick.cfg").string()) ==
            0);
    CHECK(fs::exists(scene / "stream" / "report.json"));
    CHECK(fs::exists(scene / "stream" / "report.csv"));
    CHECK(fs::exists(scene / "stream" / "delta_0001.mgsdlt"));

    REQUIRE(run_cli("eval " + scene.string()) == 0);
    CHECK(fs::exists(scene / "stream" / "eval.json"));

    fs::path png = dir / "view0.png";
    REQUIRE(run_cli("render " + (scene / "fit0.mgsply").string() + " " +
                    (scene / "cameras.json").string() + " " + png.string()) == 0);
    std::vector<uint8_t> bytes = slurp(png);
    const uint8_t magic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    REQUIRE(bytes.size() > 8);
    CHECK(std::memcmp(bytes.data(), magic, 8) == 0);

    CHECK(run_cli("render " + (scene / "fit0.mgsply").string() + " " +
                  (scene / "cameras.json").string() + " " + png.string() + " --view 99") == 2);
    fs::remove_all(dir);
}
