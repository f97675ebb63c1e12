#include "mgs/ntc.hpp"

#include <algorithm>
#include <cmath>

#include "mgs/binio.hpp"
#include "mgs/rng.hpp"

namespace mgs {

int HashGridConfig::level_resolution(int level) const {
    if (levels == 1) return base_resolution;
    double growth = std::log(double(finest_resolution) / base_resolution) / (levels - 1);
    // The small bias keeps exact powers (e.g. 2^(l/3) at l divisible by 3)
    // from flooring one short.
    return int(std::floor(base_resolution * std::exp(growth * level) + 1e-9));
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;
constexpr double kBoxPad = 0.05;

inline uint32_t spatial_hash(uint32_t x, uint32_t y, uint32_t z, uint32_t table_size) {
    return (x ^ (y * 2654435761u) ^ (z * 805459861u)) & (table_size - 1);
}

struct CornerRef {
    size_t index;   // grid parameter index of the corner's first feature
    double weight;  // trilinear weight
};

} // namespace

NeuralMap::NeuralMap(const HashGridConfig& grid_cfg, int output_dim, uint64_t seed,
                     const Aabb& scene_box)
    : gcfg_(grid_cfg), out_dim_(output_dim) {
    if (output_dim < 1) throw ContractViolation("NeuralMap output_dim must be >= 1");
    Vec3 ext = scene_box.extent();
    Vec3 pad = ext * kBoxPad;
    box_.min = scene_box.min - pad;
    box_.max = scene_box.max + pad;

    grid_count_ = size_t(gcfg_.levels) * gcfg_.table_size * gcfg_.features_per_level;
    init_offsets();
    p_.assign(b3_ + out_dim_, 0.0);
    m_.assign(p_.size(), 0.0);
    v_.assign(p_.size(), 0.0);

    // Pinned draw order: grid table, then the two hidden layers (He-scaled
    // normals). The output layer stays zero so the fresh map is the identity.
    Rng rng(seed);
    for (size_t i = 0; i < grid_count_; i++) p_[i] = rng.uniform(-1e-4, 1e-4);
    double he1 = std::sqrt(2.0 / gcfg_.feature_dim());
    for (size_t i = 0; i < size_t(kHidden) * gcfg_.feature_dim(); i++)
        p_[w1_ + i] = rng.normal() * he1;
    double he2 = std::sqrt(2.0 / kHidden);
    for (size_t i = 0; i < size_t(kHidden) * kHidden; i++) p_[w2_ + i] = rng.normal() * he2;
}

void NeuralMap::init_offsets() {
    int in = gcfg_.feature_dim();
    w1_ = grid_count_;
    b1_ = w1_ + size_t(kHidden) * in;
    w2_ = b1_ + kHidden;
    b2_ = w2_ + size_t(kHidden) * kHidden;
    w3_ = b2_ + kHidden;
    b3_ = w3_ + size_t(out_dim_) * kHidden;
}

// Collects the 8 corner references and weights for one position at one level.
// Positions are normalized into [0,1]^3 by the padded box and clamped.
static void corners_at(const HashGridConfig& g, const Aabb& box, const Vec3& pos, int level,
                       CornerRef out[8]) {
    Vec3 ext = box.extent();
    double nx = ext.x > 0 ? clampd((pos.x - box.min.x) / ext.x, 0, 1) : 0.5;
    double ny = ext.y > 0 ? clampd((pos.y - box.min.y) / ext.y, 0, 1) : 0.5;
    double nz = ext.z > 0 ? clampd((pos.z - box.min.z) / ext.z, 0, 1) : 0.5;
    int res = g.level_resolution(level);
    double sx = nx * (res - 1), sy = ny * (res - 1), sz = nz * (res - 1);
    int x0 = std::min(int(sx), res - 2), y0 = std::min(int(sy), res - 2),
        z0 = std::min(int(sz), res - 2);
    double fx = sx - x0, fy = sy - y0, fz = sz - z0;
    size_t level_base = size_t(level) * g.table_size * g.features_per_level;
    int k = 0;
    for (int dz = 0; dz <= 1; dz++)
        for (int dy = 0; dy <= 1; dy++)
            for (int dx = 0; dx <= 1; dx++) {
                uint32_t h = spatial_hash(uint32_t(x0 + dx), uint32_t(y0 + dy), uint32_t(z0 + dz),
                                          uint32_t(g.table_size));
                double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                out[k++] = {level_base + size_t(h) * g.features_per_level, w};
            }
}

void NeuralMap::forward(const std::vector<Vec3>& positions, std::vector<double>* outputs) const {
    const int n = int(positions.size());
    const int in = gcfg_.feature_dim();
    outputs->assign(size_t(n) * out_dim_, 0.0);
#pragma omp parallel for schedule(static) if (n > 16)
    for (int i = 0; i < n; i++) {
        std::vector<double> e(in, 0.0), h1(kHidden), h2(kHidden);
        CornerRef c[8];
        for (int l = 0; l < gcfg_.levels; l++) {
            corners_at(gcfg_, box_, positions[i], l, c);
            for (int k = 0; k < 8; k++)
                for (int f = 0; f < gcfg_.features_per_level; f++)
                    e[l * gcfg_.features_per_level + f] += c[k].weight * p_[c[k].index + f];
        }
        for (int r = 0; r < kHidden; r++) {
            double s = p_[b1_ + r];
            for (int q = 0; q < in; q++) s += p_[w1_ + size_t(r) * in + q] * e[q];
            h1[r] = s > 0 ? s : 0;
        }
        for (int r = 0; r < kHidden; r++) {
            double s = p_[b2_ + r];
            for (int q = 0; q < kHidden; q++) s += p_[w2_ + size_t(r) * kHidden + q] * h1[q];
            h2[r] = s > 0 ? s : 0;
        }
        for (int r = 0; r < out_dim_; r++) {
            double s = p_[b3_ + r];
            for (int q = 0; q < kHidden; q++) s += p_[w3_ + size_t(r) * kHidden + q] * h2[q];
            (*outputs)[size_t(i) * out_dim_ + r] = s;
        }
    }
}

void NeuralMap::backward(const std::vector<Vec3>& positions, const std::vector<double>& dL_doutputs,
                         std::vector<double>* dparams) const {
    const int n = int(positions.size());
    const int in = gcfg_.feature_dim();
    if (dL_doutputs.size() != size_t(n) * out_dim_)
        throw ContractViolation("NeuralMap backward: gradient shape mismatch");
    dparams->assign(p_.size(), 0.0);
    std::vector<double>& dp = *dparams;

    // Serial over the batch: scatter-adds into the grid table and the shared
    // MLP parameters stay in a fixed order.
    std::vector<double> e(in), h1(kHidden), h2(kHidden), pre1(kHidden), pre2(kHidden);
    std::vector<double> dh2(kHidden), dh1(kHidden), de(in);
    std::vector<CornerRef> corners(size_t(gcfg_.levels) * 8);
    for (int i = 0; i < n; i++) {
        // Recompute the forward intermediates for this row.
        std::fill(e.begin(), e.end(), 0.0);
        for (int l = 0; l < gcfg_.levels; l++) {
            corners_at(gcfg_, box_, positions[i], l, &corners[size_t(l) * 8]);
            for (int k = 0; k < 8; k++) {
                const CornerRef& cr = corners[size_t(l) * 8 + k];
                for (int f = 0; f < gcfg_.features_per_level; f++)
                    e[l * gcfg_.features_per_level + f] += cr.weight * p_[cr.index + f];
            }
        }
        for (int r = 0; r < kHidden; r++) {
            double s = p_[b1_ + r];
            for (int q = 0; q < in; q++) s += p_[w1_ + size_t(r) * in + q] * e[q];
            pre1[r] = s;
            h1[r] = s > 0 ? s : 0;
        }
        for (int r = 0; r < kHidden; r++) {
            double s = p_[b2_ + r];
            for (int q = 0; q < kHidden; q++) s += p_[w2_ + size_t(r) * kHidden + q] * h1[q];
            pre2[r] = s;
            h2[r] = s > 0 ? s : 0;
        }

        const double* dout = &dL_doutputs[size_t(i) * out_dim_];
        std::fill(dh2.begin(), dh2.end(), 0.0);
        for (int r = 0; r < out_dim_; r++) {
            dp[b3_ + r] += dout[r];
            for (int q = 0; q < kHidden; q++) {
                dp[w3_ + size_t(r) * kHidden + q] += dout[r] * h2[q];
                dh2[q] += p_[w3_ + size_t(r) * kHidden + q] * dout[r];
            }
        }
        std::fill(dh1.begin(), dh1.end(), 0.0);
        for (int r = 0; r < kHidden; r++) {
            double d = pre2[r] > 0 ? dh2[r] : 0.0;
            if (d == 0.0) continue;
            dp[b2_ + r] += d;
            for (int q = 0; q < kHidden; q++) {
                dp[w2_ + size_t(r) * kHidden + q] += d * h1[q];
                dh1[q] += p_[w2_ + size_t(r) * kHidden + q] * d;
            }
        }
        std::fill(de.begin(), de.end(), 0.0);
        for (int r = 0; r < kHidden; r++) {
            double d = pre1[r] > 0 ? dh1[r] : 0.0;
            if (d == 0.0) continue;
            dp[b1_ + r] += d;
            for (int q = 0; q < in; q++) {
                dp[w1_ + size_t(r) * in + q] += d * e[q];
                de[q] += p_[w1_ + size_t(r) * in + q] * d;
            }
        }
        for (int l = 0; l < gcfg_.levels; l++)
            for (int k = 0; k < 8; k++) {
                const CornerRef& cr = corners[size_t(l) * 8 + k];
                for (int f = 0; f < gcfg_.features_per_level; f++)
                    dp[cr.index + f] += cr.weight * de[l * gcfg_.features_per_level + f];
            }
    }
}

void NeuralMap::backward_and_step(const std::vector<Vec3>& positions,
                                  const std::vector<double>& dL_doutputs, double lr_grid,
                                  double lr_mlp) {
    std::vector<double> dp;
    backward(positions, dL_doutputs, &dp);
    for (size_t i = 0; i < dp.size(); i++)
        if (!std::isfinite(dp[i]))
            throw TrainingDivergence(
                std::string("non-finite gradient in ") + (i < grid_count_ ? "grid" : "mlp") +
                    " parameter " + std::to_string(i),
                int(step_));
    step_++;
    double c1 = 1.0 - std::pow(kBeta1, double(step_));
    double c2 = 1.0 - std::pow(kBeta2, double(step_));
    const size_t split = grid_count_;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(p_.size()); i++) {
        double g = dp[i];
        m_[i] = kBeta1 * m_[i] + (1 - kBeta1) * g;
        v_[i] = kBeta2 * v_[i] + (1 - kBeta2) * g * g;
        double lr = size_t(i) < split ? lr_grid : lr_mlp;
        p_[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kAdamEps);
    }
}

void NeuralMap::save(const std::string& path) const {
    ByteWriter w;
    w.put_magic("MGSNTC1");
    w.put_u32(uint32_t(gcfg_.levels));
    w.put_u32(uint32_t(gcfg_.base_resolution));
    w.put_u32(uint32_t(gcfg_.finest_resolution));
    w.put_u32(uint32_t(gcfg_.table_size));
    w.put_u32(uint32_t(gcfg_.features_per_level));
    w.put_u32(uint32_t(out_dim_));
    w.put_u32(uint32_t(step_));
    for (double v : {box_.min.x, box_.min.y, box_.min.z, box_.max.x, box_.max.y, box_.max.z})
        w.put_f64(v);
    for (double v : p_) w.put_f32(float(v));
    write_file_atomic(path, w.bytes);
}

NeuralMap NeuralMap::load(const std::string& path) {
    std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic("MGSNTC1");
    NeuralMap map;
    map.gcfg_.levels = int(r.get_u32());
    map.gcfg_.base_resolution = int(r.get_u32());
    map.gcfg_.finest_resolution = int(r.get_u32());
    map.gcfg_.table_size = int(r.get_u32());
    map.gcfg_.features_per_level = int(r.get_u32());
    map.out_dim_ = int(r.get_u32());
    map.step_ = int64_t(r.get_u32());
    if (map.gcfg_.levels < 1 || map.gcfg_.levels > 64 || map.gcfg_.table_size < 1 ||
        map.out_dim_ < 1 || map.out_dim_ > 4096 || map.gcfg_.features_per_level < 1 ||
        map.gcfg_.features_per_level > 64)
        r.fail("implausible map configuration");
    map.box_.min = {r.get_f64(), r.get_f64(), r.get_f64()};
    map.box_.max = {r.get_f64(), r.get_f64(), r.get_f64()};
    map.grid_count_ = size_t(map.gcfg_.levels) * map.gcfg_.table_size * map.gcfg_.features_per_level;
    map.init_offsets();
    map.p_.resize(map.b3_ + map.out_dim_);
    for (double& v : map.p_) v = r.get_f32();
    r.expect_end();
    map.m_.assign(map.p_.size(), 0.0);
    map.v_.assign(map.p_.size(), 0.0);
    return map;
}

GaussianSet apply_deformation(const GaussianSet& set, const IndexSet& g_m,
                              const std::vector<std::array<float, 3>>& du,
                              const std::vector<std::array<float, 4>>& dq) {
    FrameDelta d;
    d.g_m = g_m;
    d.du = du;
    d.dq = dq;
    GaussianSet out = apply_delta(set, d);
    out.bbox = set.bbox;  // frame-0 box is carried through the stream
    return out;
}

GaussianSet apply_sh_offsets(const GaussianSet& set, const IndexSet& g_new,
                             const std::vector<std::array<float, 12>>& dsh) {
    if (dsh.size() != g_new.size())
        throw ContractViolation("apply_sh_offsets: record count mismatch");
    if (!is_sorted_unique(g_new))
        throw ContractViolation("apply_sh_offsets: indices must be sorted and duplicate-free");
    GaussianSet out = set;
    for (size_t i = 0; i < g_new.size(); i++) {
        int32_t idx = g_new[i];
        if (idx < 0 || size_t(idx) >= out.g.size())
            throw FormatError("sh offset index " + std::to_string(idx) + " out of range");
        for (int k = 0; k < 12; k++)
            out.g[idx].sh[k] = float(double(out.g[idx].sh[k]) + double(dsh[i][k]));
    }
    return out;
}

} // namespace mgs
