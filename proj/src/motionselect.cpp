#include "mgs/motionselect.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mgs {

IndexSet backproject(const std::vector<GimBuffer>& gims, const std::vector<BoolMask>& masks) {
    if (gims.size() != masks.size())
        throw ContractViolation("backproject: view counts differ");
    std::vector<int32_t> hits;
    for (size_t v = 0; v < gims.size(); v++) {
        const GimBuffer& gim = gims[v];
        const BoolMask& m = masks[v];
        if (gim.w != m.w || gim.h != m.h)
            throw ContractViolation("backproject: gim/mask dimensions differ");
        for (int y = 0; y < m.h; y++)
            for (int x = 0; x < m.w; x++) {
                if (!m.at(y, x)) continue;
                int c = gim.count(y, x);
                for (int k = 0; k < c; k++) hits.push_back(gim.id(y, x, k));
            }
    }
    normalize_index_set(hits);
    return hits;
}

// ------------------------------------------------------------------- dbscan

namespace {

struct CellKey {
    int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
    size_t operator()(const CellKey& k) const {
        uint64_t h = uint64_t(k.x) * 0x9e3779b97f4a7c15ull;
        h ^= uint64_t(k.y) * 0xc2b2ae3d27d4eb4full + (h << 6);
        h ^= uint64_t(k.z) * 0x165667b19e3779f9ull + (h >> 2);
        return size_t(h);
    }
};

struct Dsu {
    std::vector<int32_t> parent;
    explicit Dsu(size_t n) : parent(n) {
        for (size_t i = 0; i < n; i++) parent[i] = int32_t(i);
    }
    int32_t find(int32_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int32_t a, int32_t b) { parent[find(a)] = find(b); }
};

bool lex_less(const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
}

} // namespace

ClusterLabels dbscan(const std::vector<Vec3>& points, double eps, int min_samples) {
    if (eps <= 0) throw ContractViolation("dbscan: eps must be > 0");
    if (min_samples < 1) throw ContractViolation("dbscan: min_samples must be >= 1");
    const int n = int(points.size());
    ClusterLabels out;
    out.label.assign(n, ClusterLabels::kNoise);
    if (n == 0) return out;

    // Uniform grid with cell = eps; neighbors live in the 27 adjacent cells.
    std::unordered_map<CellKey, std::vector<int32_t>, CellHash> grid;
    grid.reserve(size_t(n));
    auto cell_of = [eps](const Vec3& p) {
        return CellKey{int64_t(std::floor(p.x / eps)), int64_t(std::floor(p.y / eps)),
                       int64_t(std::floor(p.z / eps))};
    };
    for (int i = 0; i < n; i++) grid[cell_of(points[i])].push_back(i);

    const double eps2 = eps * eps;
    std::vector<std::vector<int32_t>> nbr(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (int i = 0; i < n; i++) {
        CellKey c = cell_of(points[i]);
        for (int64_t dx = -1; dx <= 1; dx++)
            for (int64_t dy = -1; dy <= 1; dy++)
                for (int64_t dz = -1; dz <= 1; dz++) {
                    auto it = grid.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
                    if (it == grid.end()) continue;
                    for (int32_t j : it->second) {
                        Vec3 d = points[i] - points[j];
                        if (d.dot(d) <= eps2) nbr[i].push_back(j);
                    }
                }
    }

    std::vector<uint8_t> core(n, 0);
    for (int i = 0; i < n; i++) core[i] = nbr[i].size() >= size_t(min_samples) ? 1 : 0;

    Dsu dsu{size_t(n)};
    for (int i = 0; i < n; i++) {
        if (!core[i]) continue;
        for (int32_t j : nbr[i])
            if (core[j]) dsu.unite(i, int32_t(j));
    }

    // Canonical numbering by the lexicographically smallest core position.
    std::unordered_map<int32_t, Vec3> root_min;
    for (int i = 0; i < n; i++) {
        if (!core[i]) continue;
        int32_t r = dsu.find(i);
        auto it = root_min.find(r);
        if (it == root_min.end() || lex_less(points[i], it->second)) root_min[r] = points[i];
    }
    std::vector<std::pair<int32_t, Vec3>> ordered(root_min.begin(), root_min.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return lex_less(a.second, b.second); });
    std::unordered_map<int32_t, int32_t> root_to_id;
    for (int32_t k = 0; k < int32_t(ordered.size()); k++) root_to_id[ordered[k].first] = k;
    out.num_clusters = int32_t(ordered.size());

    for (int i = 0; i < n; i++)
        if (core[i]) out.label[i] = root_to_id[dsu.find(i)];
    for (int i = 0; i < n; i++) {
        if (core[i]) continue;
        int32_t best = ClusterLabels::kNoise;
        for (int32_t j : nbr[i]) {
            if (!core[j]) continue;
            int32_t id = root_to_id[dsu.find(j)];
            if (best == ClusterLabels::kNoise || id < best) best = id;
        }
        out.label[i] = best;
    }
    return out;
}

// -------------------------------------------------------------- convex hull

namespace {

struct WorkFacet {
    int a, b, c;
    Vec3 n;  // unit
    double d;
    bool alive = true;
};

Vec3 facet_raw_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    return (b - a).cross(c - a);
}

} // namespace

ConvexHull3 convex_hull(const std::vector<Vec3>& points) {
    ConvexHull3 hull;
    const int n = int(points.size());
    if (n < 4) {
        hull.degenerate = true;
        return hull;
    }

    double scale = 0;
    for (const Vec3& p : points)
        scale = std::max({scale, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    scale = std::max(scale, 1.0);
    const double tol_rank = 1e-9 * scale;
    // Visibility band: points this close to a supporting plane count as on it.
    const double tol_vis = 1e-12 * scale;

    // Deterministic seed tetrahedron: lexicographic minimum, farthest point,
    // farthest from the line, farthest from the plane.
    int s0 = 0;
    for (int i = 1; i < n; i++)
        if (lex_less(points[i], points[s0])) s0 = i;
    int s1 = -1;
    double best = tol_rank;
    for (int i = 0; i < n; i++) {
        double d = (points[i] - points[s0]).norm();
        if (d > best) { best = d; s1 = i; }
    }
    if (s1 < 0) { hull.degenerate = true; return hull; }
    Vec3 dir = (points[s1] - points[s0]).normalized();
    int s2 = -1;
    best = tol_rank;
    for (int i = 0; i < n; i++) {
        Vec3 v = points[i] - points[s0];
        double d = (v - dir * v.dot(dir)).norm();
        if (d > best) { best = d; s2 = i; }
    }
    if (s2 < 0) { hull.degenerate = true; return hull; }
    Vec3 pn = facet_raw_normal(points[s0], points[s1], points[s2]).normalized();
    int s3 = -1;
    best = tol_rank;
    for (int i = 0; i < n; i++) {
        double d = std::abs(pn.dot(points[i] - points[s0]));
        if (d > best) { best = d; s3 = i; }
    }
    if (s3 < 0) { hull.degenerate = true; return hull; }

    if (pn.dot(points[s3] - points[s0]) > 0) std::swap(s1, s2);
    Vec3 inside = (points[s0] + points[s1] + points[s2] + points[s3]) * 0.25;

    std::vector<WorkFacet> facets;
    auto add_facet = [&](int a, int b, int c) -> bool {
        Vec3 raw = facet_raw_normal(points[a], points[b], points[c]);
        double rn = raw.norm();
        if (rn < tol_vis) return false;
        WorkFacet f;
        f.a = a; f.b = b; f.c = c;
        f.n = raw * (1.0 / rn);
        f.d = f.n.dot(points[a]);
        if (f.n.dot(inside) - f.d > 0) {
            std::swap(f.b, f.c);
            f.n = f.n * -1.0;
            f.d = -f.d;
        }
        facets.push_back(f);
        return true;
    };
    add_facet(s0, s1, s2);
    add_facet(s0, s3, s1);
    add_facet(s1, s3, s2);
    add_facet(s0, s2, s3);

    for (int i = 0; i < n; i++) {
        if (i == s0 || i == s1 || i == s2 || i == s3) continue;
        const Vec3& p = points[i];
        std::vector<int> visible;
        for (int f = 0; f < int(facets.size()); f++)
            if (facets[f].alive && facets[f].n.dot(p) - facets[f].d > tol_vis)
                visible.push_back(f);
        if (visible.empty()) continue;

        // Horizon: directed edges of visible facets whose reverse edge is not
        // itself part of a visible facet.
        std::unordered_map<int64_t, int> edge_count;
        auto ekey = [](int u, int v) { return int64_t(u) << 32 | uint32_t(v); };
        for (int f : visible) {
            const WorkFacet& w = facets[f];
            edge_count[ekey(w.a, w.b)]++;
            edge_count[ekey(w.b, w.c)]++;
            edge_count[ekey(w.c, w.a)]++;
        }
        std::vector<std::pair<int, int>> horizon;
        for (int f : visible) {
            const WorkFacet& w = facets[f];
            const int e[3][2] = {{w.a, w.b}, {w.b, w.c}, {w.c, w.a}};
            for (auto& uv : e)
                if (!edge_count.count(ekey(uv[1], uv[0]))) horizon.push_back({uv[0], uv[1]});
        }
        for (int f : visible) facets[f].alive = false;
        for (auto& [u, v] : horizon) add_facet(u, v, i);
    }

    // Compact to the vertices actually used.
    std::vector<int32_t> remap(n, -1);
    for (const WorkFacet& f : facets) {
        if (!f.alive) continue;
        for (int idx : {f.a, f.b, f.c})
            if (remap[idx] < 0) {
                remap[idx] = int32_t(hull.vertices.size());
                hull.vertices.push_back(points[idx]);
            }
    }
    for (const WorkFacet& f : facets) {
        if (!f.alive) continue;
        hull.facets.push_back({remap[f.a], remap[f.b], remap[f.c], f.n, f.d});
    }
    if (hull.facets.size() < 4) {
        hull = ConvexHull3{};
        hull.degenerate = true;
    }
    return hull;
}

bool hull_contains(const ConvexHull3& hull, const Vec3& p, double tol) {
    if (hull.degenerate || hull.facets.empty()) return false;
    for (const auto& f : hull.facets)
        if (f.n.dot(p) - f.d > tol) return false;
    return true;
}

IndexSet points_in_hulls(const std::vector<Vec3>& positions,
                         const std::vector<ConvexHull3>& hulls) {
    const int n = int(positions.size());
    std::vector<uint8_t> in(n, 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; i++)
        for (const ConvexHull3& h : hulls)
            if (hull_contains(h, positions[i])) {
                in[i] = 1;
                break;
            }
    IndexSet out;
    for (int i = 0; i < n; i++)
        if (in[i]) out.push_back(i);
    return out;
}

IndexSet motion_related(const IndexSet& g_o, const IndexSet& g_i) {
    return index_union(g_o, g_i);
}

MotionSelectResult select_motion_related(const GaussianSet& set,
                                         const std::vector<GimBuffer>& gims,
                                         const std::vector<BoolMask>& masks, double eps,
                                         int min_samples, bool use_clustering) {
    MotionSelectResult r;
    r.g_o = backproject(gims, masks);

    std::vector<Vec3> hits;
    hits.reserve(r.g_o.size());
    for (int32_t idx : r.g_o) hits.push_back(set.g[idx].pos());

    if (use_clustering) {
        r.labels = dbscan(hits, eps, min_samples);
        r.hulls.resize(r.labels.num_clusters);
        std::vector<std::vector<Vec3>> members(r.labels.num_clusters);
        for (size_t k = 0; k < hits.size(); k++)
            if (r.labels.label[k] != ClusterLabels::kNoise)
                members[r.labels.label[k]].push_back(hits[k]);
        for (int32_t c = 0; c < r.labels.num_clusters; c++) r.hulls[c] = convex_hull(members[c]);
    } else {
        r.labels.label.assign(hits.size(), 0);
        r.labels.num_clusters = hits.empty() ? 0 : 1;
        if (!hits.empty()) r.hulls.push_back(convex_hull(hits));
    }

    std::vector<Vec3> positions;
    positions.reserve(set.g.size());
    for (const Gaussian3D& g : set.g) positions.push_back(g.pos());
    r.g_i = points_in_hulls(positions, r.hulls);
    r.g_m = motion_related(r.g_o, r.g_i);
    return r;
}

} // namespace mgs
