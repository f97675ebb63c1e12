#pragma once

// Small double-precision vector/matrix kit. Storage formats are float32; all
// arithmetic runs in double so gradient checks against central differences
// stay clean.

#include <array>
#include <cmath>

namespace mgs {

struct Vec2 {
    double x = 0, y = 0;
    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double k) const { return {x * k, y * k}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { double n = norm(); return {x / n, y / n, z / n}; }
};

inline Vec3 operator*(double k, const Vec3& v) { return v * k; }

// Quaternion, (w, x, y, z) component order, Hamilton convention.
struct Quat {
    double w = 1, x = 0, y = 0, z = 0;
    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }
    static Mat3 zero() { Mat3 a; a.m = {0, 0, 0, 0, 0, 0, 0, 0, 0}; return a; }
    static Mat3 diag(double a, double b, double c) {
        Mat3 d = zero(); d(0, 0) = a; d(1, 1) = b; d(2, 2) = c; return d;
    }
    Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; r++)
            for (int c = 0; c < 3; c++) t(r, c) = (*this)(c, r);
        return t;
    }
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r = zero();
        for (int i = 0; i < 3; i++)
            for (int k = 0; k < 3; k++)
                for (int j = 0; j < 3; j++) r(i, j) += (*this)(i, k) * o(k, j);
        return r;
    }
    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; i++) r.m[i] = m[i] + o.m[i];
        return r;
    }
    Mat3 operator*(double k) const {
        Mat3 r;
        for (int i = 0; i < 9; i++) r.m[i] = m[i] * k;
        return r;
    }
};

// Symmetric 2x2 (upper triangle: a = [0][0], b = [0][1], c = [1][1]).
struct Sym2 {
    double a = 0, b = 0, c = 0;
    double det() const { return a * c - b * b; }
    Sym2 inverse() const {
        double d = det();
        return {c / d, -b / d, a / d};
    }
    Sym2 operator+(const Sym2& o) const { return {a + o.a, b + o.b, c + o.c}; }
    Sym2 operator*(double k) const { return {a * k, b * k, c * k}; }
    // Larger eigenvalue; both are real and (for our use) positive.
    double max_eigenvalue() const {
        double mid = 0.5 * (a + c);
        double d = std::sqrt(std::max(0.0, mid * mid - det()));
        return mid + d;
    }
};

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

struct Aabb {
    Vec3 min{0, 0, 0}, max{0, 0, 0};
    void expand(const Vec3& p) {
        min.x = std::min(min.x, p.x); min.y = std::min(min.y, p.y); min.z = std::min(min.z, p.z);
        max.x = std::max(max.x, p.x); max.y = std::max(max.y, p.y); max.z = std::max(max.z, p.z);
    }
    Vec3 extent() const { return max - min; }
};

} // namespace mgs
