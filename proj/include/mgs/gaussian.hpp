#pragma once

// Core 3D Gaussian primitives: the scene representation, camera model,
// covariance construction, degree-1 spherical harmonics and the EWA splat
// projection used by the rasterizer.

#include <array>
#include <cstdint>
#include <vector>

#include "mgs/errors.hpp"
#include "mgs/math.hpp"

namespace mgs {

// One anisotropic 3D Gaussian. Components are stored as float32 to match the
// on-disk layout bit-for-bit; computation promotes to double.
//   u  - world position
//   q  - unit quaternion (w, x, y, z)
//   s  - per-axis scales, strictly positive
//   o  - opacity in [0, 1]
//   sh - degree-1 SH, channel-major: sh[ch*4 + k], k=0 is the DC coefficient
struct Gaussian3D {
    std::array<float, 3> u{0, 0, 0};
    std::array<float, 4> q{1, 0, 0, 0};
    std::array<float, 3> s{1, 1, 1};
    float o = 0;
    std::array<float, 12> sh{};

    Vec3 pos() const { return {u[0], u[1], u[2]}; }
    Quat rot() const { return {q[0], q[1], q[2], q[3]}; }
    Vec3 scale() const { return {s[0], s[1], s[2]}; }
};

struct GaussianSet {
    std::vector<Gaussian3D> g;
    // Scene bounds; fixed at frame 0 and carried through the stream so the
    // neural-map input normalization never shifts.
    Aabb bbox;

    size_t size() const { return g.size(); }
    void recompute_bbox();
};

// Pinhole camera. World-to-camera: x_cam = R * x_world + t.
// Pixel (row r, col c) samples the image plane at continuous (x=c, y=r).
struct Camera {
    int width = 0, height = 0;
    double fx = 1, fy = 1, cx = 0, cy = 0;
    Mat3 R;
    Vec3 t;

    Vec3 center() const { return (R.transposed() * t) * -1.0; }
    Vec3 to_camera(const Vec3& p) const { return R * p + t; }
    Vec2 project(const Vec3& p) const {
        Vec3 c = to_camera(p);
        return {fx * c.x / c.z + cx, fy * c.y / c.z + cy};
    }
};

// A projected splat ready for compositing. cov2d already includes the 0.3*I
// low-pass term; inv_cov/radius are derived caches for the rasterizer.
struct Splat2D {
    Vec2 mean;
    Sym2 cov;
    Sym2 inv_cov;
    double depth = 0;
    Vec3 color;          // SH-evaluated, clamped to [0,1]
    double opacity = 0;
    double radius = 0;   // pixel radius beyond which alpha < 1/255
    int32_t id = -1;
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

Quat quat_normalize(const Quat& q);                // throws DegenerateInput on ~zero norm
Quat quat_multiply(const Quat& a, const Quat& b);  // Hamilton product
Mat3 quat_to_rotmat(const Quat& q);                // normalizes internally

// Sigma = R diag(s)^2 R^T. Scales must be strictly positive.
Mat3 build_covariance(const Quat& q, const Vec3& s);

// Degree-1 real SH, channel-major coefficients, direction must be unit.
// Returns the raw (unclamped) color; the rasterizer clamps to [0,1].
Vec3 eval_sh(const std::array<float, 12>& sh, const Vec3& dir);

// EWA projection of one Gaussian. Returns false (culled) when the camera-space
// depth is at or behind the near plane, or when opacity falls below the
// compositing skip threshold (alpha < 1/255 everywhere).
bool project_gaussian(const Gaussian3D& g, const Camera& cam, int32_t id, Splat2D* out);

} // namespace mgs
