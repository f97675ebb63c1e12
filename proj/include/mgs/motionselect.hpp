#pragma once

// Motion-related Gaussian selection: back-project motion masks through the
// per-view index maps, cluster the hits by position, wrap each cluster in a
// convex hull, and pull in every Gaussian inside a hull.

#include "mgs/gaussian.hpp"
#include "mgs/image.hpp"
#include "mgs/indexset.hpp"
#include "mgs/rasterizer.hpp"

namespace mgs {

struct ClusterLabels {
    static constexpr int32_t kNoise = -1;
    std::vector<int32_t> label;  // per input point
    int32_t num_clusters = 0;
};

// Triangulated hull with outward unit normals; a point p is inside facet
// (n, d) when n.p <= d. Degenerate inputs (< 4 points, or rank-deficient
// within tolerance) yield degenerate = true and no facets.
struct ConvexHull3 {
    struct Facet {
        int32_t a, b, c;  // vertex indices, outward winding
        Vec3 n;
        double d;
    };
    std::vector<Vec3> vertices;
    std::vector<Facet> facets;
    bool degenerate = false;
};

// Union over views of the indices stored at mask-true pixels.
IndexSet backproject(const std::vector<GimBuffer>& gims, const std::vector<BoolMask>& masks);

// Density clustering. Core point: >= min_samples neighbors within eps
// (inclusive of self). Cluster ids are canonical: clusters are numbered by the
// lexicographically smallest core-point position they contain, so the
// labeling is invariant to input permutation (points swap labels with their
// positions). Border points take the lowest eligible cluster id.
ClusterLabels dbscan(const std::vector<Vec3>& points, double eps, int min_samples);

// Incremental hull; insertion order and seed choice are deterministic.
ConvexHull3 convex_hull(const std::vector<Vec3>& points);

// Boundary-inclusive membership: n.p <= d + tol for every facet.
bool hull_contains(const ConvexHull3& hull, const Vec3& p, double tol = 1e-9);

// Indices of positions inside at least one non-degenerate hull.
IndexSet points_in_hulls(const std::vector<Vec3>& positions,
                         const std::vector<ConvexHull3>& hulls);

// Sorted deduplicated union.
IndexSet motion_related(const IndexSet& g_o, const IndexSet& g_i);

struct MotionSelectResult {
    IndexSet g_o;                    // back-projected hits
    IndexSet g_i;                    // hull infill
    IndexSet g_m;                    // union
    ClusterLabels labels;            // over g_o, in g_o order
    std::vector<ConvexHull3> hulls;  // per cluster id
};

// Full selection pass. use_clustering = false replaces the per-cluster hulls
// with a single global hull over all back-projected points (the ablation that
// drags unrelated static Gaussians into the motion set).
MotionSelectResult select_motion_related(const GaussianSet& set,
                                         const std::vector<GimBuffer>& gims,
                                         const std::vector<BoolMask>& masks, double eps,
                                         int min_samples, bool use_clustering);

} // namespace mgs
