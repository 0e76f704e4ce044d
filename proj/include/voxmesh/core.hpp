#pragma once

// Small math and utility layer shared by every module: 3-vectors, rigid
// transforms, axis-aligned boxes, and a counter-based deterministic RNG.

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace voxmesh {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double norm2() const { return dot(*this); }
    Vec3 normalized() const {
        double n = norm();
        if (n == 0) throw std::runtime_error("normalize of zero vector");
        return *this / n;
    }
    Vec3 cwise_abs() const { return {std::fabs(x), std::fabs(y), std::fabs(z)}; }
    double max_coeff() const { return std::fmax(x, std::fmax(y, z)); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << "(" << v.x << ", " << v.y << ", " << v.z << ")";
}

// Row-major 4x4 matrix; used for camera-to-world poses.
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() {
        Mat4 r;
        r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
        return r;
    }

    double operator()(int r, int c) const { return m[r * 4 + c]; }
    double& operator()(int r, int c) { return m[r * 4 + c]; }

    Mat4 operator*(const Mat4& o) const {
        Mat4 r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    // Applies the full affine transform to a point.
    Vec3 transform_point(const Vec3& p) const {
        return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
    }

    // Rotation block only.
    Vec3 transform_dir(const Vec3& d) const {
        return {m[0] * d.x + m[1] * d.y + m[2] * d.z,
                m[4] * d.x + m[5] * d.y + m[6] * d.z,
                m[8] * d.x + m[9] * d.y + m[10] * d.z};
    }

    // Inverse of a rigid transform (orthonormal rotation + translation).
    Mat4 inverse_rigid() const {
        Mat4 r = identity();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        Vec3 t{m[3], m[7], m[11]};
        for (int i = 0; i < 3; ++i) {
            double s = 0;
            for (int j = 0; j < 3; ++j) s += r(i, j) * t[j];
            r(i, 3) = -s;
        }
        return r;
    }

    Vec3 translation() const { return {m[3], m[7], m[11]}; }
};

struct Aabb {
    Vec3 lo{-1, -1, -1};
    Vec3 hi{1, 1, 1};

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
               p.z >= lo.z && p.z <= hi.z;
    }
    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return (lo + hi) * 0.5; }

    // Slab test; returns false on miss, else [t0, t1] with t1 > max(t0, 0).
    bool intersect_ray(const Vec3& o, const Vec3& d, double& t0, double& t1) const {
        t0 = 0;
        t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            double ro = o[a], rd = d[a];
            if (std::fabs(rd) < 1e-15) {
                if (ro < lo[a] || ro > hi[a]) return false;
                continue;
            }
            double ta = (lo[a] - ro) / rd;
            double tb = (hi[a] - ro) / rd;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::fmax(t0, ta);
            t1 = std::fmin(t1, tb);
        }
        return t1 > t0;
    }
};

inline double clamp(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

inline double softplus(double x) {
    // Numerically stable log(1 + e^x).
    return x > 20 ? x : std::log1p(std::exp(x));
}

inline double softplus_deriv(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double sigmoid_deriv(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

// ---------------------------------------------------------------------------
// Counter-based pseudo-randomness. Every random draw in the project is keyed
// by (seed, stream, counter), so interrupted runs resume bit-exactly and the
// dual-branch bandit protocol replays identically.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
  public:
    // `purpose` separates independent random streams within one iteration.
    Rng(uint64_t seed, uint64_t iteration = 0, uint64_t purpose = 0) {
        state_ = splitmix64(splitmix64(seed) ^ splitmix64(iteration * 0x9e3779b97f4a7c15ULL + purpose));
    }

    uint64_t next_u64() {
        state_ = splitmix64(state_ ^ counter_++);
        return state_;
    }

    // Uniform in [0, 1).
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

  private:
    uint64_t state_;
    uint64_t counter_ = 0;
};

}  // namespace voxmesh
