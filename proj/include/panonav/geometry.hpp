#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace panonav {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Normalize to [-pi, pi).
inline double normalize_yaw(double yaw) {
    double y = std::fmod(yaw + kPi, 2.0 * kPi);
    if (y < 0) y += 2.0 * kPi;
    return y - kPi;
}

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

struct Pose {
    double x = 0, y = 0, z = 0;
    double yaw = 0;  // radians, CCW, 0 = +x axis

    Vec2 position2() const { return {x, y}; }
    Vec3 position3() const { return {x, y, z}; }
    Vec2 forward2() const { return {std::cos(yaw), std::sin(yaw)}; }
};

// Axis-aligned box with a semantic class and traversability flag.
struct Box {
    Vec3 min, max;
    int class_id = 0;
    bool traversable = false;

    bool contains2(const Vec2& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
    bool contains3(const Vec3& p) const {
        return contains2({p.x, p.y}) && p.z >= min.z && p.z <= max.z;
    }
    // Squared distance from a 2D point to the box footprint.
    double dist2_to_footprint(const Vec2& p) const {
        double dx = std::max({min.x - p.x, 0.0, p.x - max.x});
        double dy = std::max({min.y - p.y, 0.0, p.y - max.y});
        return dx * dx + dy * dy;
    }
    bool z_overlaps(double lo, double hi) const { return max.z > lo && min.z < hi; }
};

// Slab-method ray/AABB intersection. Returns entry distance t >= 0, or nullopt.
inline std::optional<double> ray_box_hit(const Vec3& origin, const Vec3& dir, const Box& box) {
    double tmin = 0.0;
    double tmax = std::numeric_limits<double>::infinity();
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {box.min.x, box.min.y, box.min.z};
    const double hi[3] = {box.max.x, box.max.y, box.max.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t0 = (lo[a] - o[a]) / d[a];
        double t1 = (hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return std::nullopt;
    }
    return tmin;
}

// 2D segment vs box footprint overlap test (separating axis on the slabs).
inline bool segment_hits_footprint(const Vec2& a, const Vec2& b, const Box& box,
                                   double inflate = 0.0) {
    double tmin = 0.0, tmax = 1.0;
    const double o[2] = {a.x, a.y};
    const double d[2] = {b.x - a.x, b.y - a.y};
    const double lo[2] = {box.min.x - inflate, box.min.y - inflate};
    const double hi[2] = {box.max.x + inflate, box.max.y + inflate};
    for (int ax = 0; ax < 2; ++ax) {
        if (std::abs(d[ax]) < 1e-15) {
            if (o[ax] < lo[ax] || o[ax] > hi[ax]) return false;
            continue;
        }
        double t0 = (lo[ax] - o[ax]) / d[ax];
        double t1 = (hi[ax] - o[ax]) / d[ax];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    return true;
}

}  // namespace panonav
