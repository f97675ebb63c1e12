#include "mgs/gaussian.hpp"

#include <cmath>
#include <limits>

namespace mgs {

void GaussianSet::recompute_bbox() {
    if (g.empty()) {
        bbox = Aabb{};
        return;
    }
    bbox.min = bbox.max = g[0].pos();
    for (const auto& gi : g) bbox.expand(gi.pos());
}

Quat quat_normalize(const Quat& q) {
    double n = q.norm();
    if (n < 1e-12) throw DegenerateInput("quaternion norm below 1e-12");
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Quat quat_multiply(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 quat_to_rotmat(const Quat& q_in) {
    Quat q = quat_normalize(q_in);
    double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 build_covariance(const Quat& q, const Vec3& s) {
    if (!(s.x > 0) || !(s.y > 0) || !(s.z > 0))
        throw DegenerateInput("covariance scales must be strictly positive");
    Mat3 r = quat_to_rotmat(q);
    Mat3 d = Mat3::diag(s.x * s.x, s.y * s.y, s.z * s.z);
    return r * d * r.transposed();
}

Vec3 eval_sh(const std::array<float, 12>& sh, const Vec3& dir) {
    // c = C0*sh0 + C1*(-y*sh1 + z*sh2 - x*sh3), per channel.
    double o[3];
    for (int ch = 0; ch < 3; ch++) {
        const float* c = sh.data() + ch * 4;
        o[ch] = kShC0 * c[0] + kShC1 * (-dir.y * c[1] + dir.z * c[2] - dir.x * c[3]);
    }
    return {o[0], o[1], o[2]};
}

bool project_gaussian(const Gaussian3D& g, const Camera& cam, int32_t id, Splat2D* out) {
    Vec3 tc = cam.to_camera(g.pos());
    if (tc.z <= kNearPlane) return false;
    if (g.o < kAlphaSkip) return false;  // alpha < 1/255 at every pixel

    Splat2D sp;
    sp.id = id;
    sp.depth = tc.z;
    sp.mean = {cam.fx * tc.x / tc.z + cam.cx, cam.fy * tc.y / tc.z + cam.cy};
    sp.opacity = g.o;

    // cov2d = J W Sigma W^T J^T + 0.3 I, with J the perspective Jacobian at tc.
    Mat3 sigma = build_covariance(g.rot(), g.scale());
    double iz = 1.0 / tc.z, iz2 = iz * iz;
    // Rows of M = J * R_cam (J is the 2x3 Jacobian).
    double j00 = cam.fx * iz, j02 = -cam.fx * tc.x * iz2;
    double j11 = cam.fy * iz, j12 = -cam.fy * tc.y * iz2;
    Vec3 m0 = {j00 * cam.R(0, 0) + j02 * cam.R(2, 0),
               j00 * cam.R(0, 1) + j02 * cam.R(2, 1),
               j00 * cam.R(0, 2) + j02 * cam.R(2, 2)};
    Vec3 m1 = {j11 * cam.R(1, 0) + j12 * cam.R(2, 0),
               j11 * cam.R(1, 1) + j12 * cam.R(2, 1),
               j11 * cam.R(1, 2) + j12 * cam.R(2, 2)};
    Vec3 sm0 = sigma * m0, sm1 = sigma * m1;
    sp.cov.a = m0.dot(sm0) + 0.3;
    sp.cov.b = m0.dot(sm1);
    sp.cov.c = m1.dot(sm1) + 0.3;
    sp.inv_cov = sp.cov.inverse();

    Vec3 dir = (g.pos() - cam.center()).normalized();
    Vec3 c = eval_sh(g.sh, dir);
    sp.color = {clampd(c.x, 0, 1), clampd(c.y, 0, 1), clampd(c.z, 0, 1)};

    // Support radius: alpha = o*exp(-m/2) >= 1/255 within Mahalanobis
    // distance sqrt(2 ln(255 o)); bound it by the largest eigenvalue.
    double m = 2.0 * std::log(g.o * 255.0);
    sp.radius = std::sqrt(m * sp.cov.max_eigenvalue());

    *out = sp;
    return true;
}

} // namespace mgs
