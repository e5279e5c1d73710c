#include "panonav/render.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace panonav {

float feat_dot(const FeatureVec& a, const FeatureVec& b) {
    float s = 0;
    for (int i = 0; i < kFeatureDim; ++i) s += a[i] * b[i];
    return s;
}

float feat_norm(const FeatureVec& v) { return std::sqrt(feat_dot(v, v)); }

void feat_normalize(FeatureVec& v) {
    float n = feat_norm(v);
    if (n > 0)
        for (auto& x : v) x /= n;
}

bool feat_is_zero(const FeatureVec& v) {
    for (float x : v)
        if (x != 0.f) return false;
    return true;
}

FeatureVec feat_zero() {
    FeatureVec v;
    v.fill(0.f);
    return v;
}

Vec3 pixel_ray(const CameraIntrinsics& cam, const Pose& pose, int row, int col,
               const Config& cfg) {
    const double hfov = deg2rad(cam.hfov);
    const double vfov = deg2rad(cam.vfov);
    double azimuth, elevation;
    if (cfg.pinhole_projection) {
        // Tan-projected image plane; the linear sweep below is the default.
        double u = hfov / 2 - col * hfov / cam.width;
        double v = vfov / 2 - row * vfov / cam.height;
        azimuth = std::atan(std::tan(u));
        elevation = std::atan(std::tan(v) * std::cos(azimuth));
    } else {
        azimuth = hfov / 2 - col * hfov / cam.width;
        elevation = vfov / 2 - row * vfov / cam.height;
    }
    double a = pose.yaw + azimuth;
    double ce = std::cos(elevation);
    return {ce * std::cos(a), ce * std::sin(a), std::sin(elevation)};
}

double trace_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir, double max_range,
                 int* hit_class) {
    double best = max_range;
    int best_class = 0;
    for (const auto& box : scene.boxes) {
        auto t = ray_box_hit(origin, dir, box);
        if (t && *t > 1e-9 && *t < best) {
            best = *t;
            best_class = box.class_id;
        }
    }
    if (hit_class) *hit_class = best_class;
    return best < max_range ? best : 0.0;
}

namespace {

bool pose_in_bounds(const SceneSpec& scene, const Pose& pose) {
    return pose.x >= scene.bounds.min.x && pose.x <= scene.bounds.max.x &&
           pose.y >= scene.bounds.min.y && pose.y <= scene.bounds.max.y;
}

}  // namespace

DepthImage raycast_depth(const SceneSpec& scene, const Pose& pose, const CameraIntrinsics& cam,
                         const Config& cfg) {
    DepthImage img;
    img.width = cam.width;
    img.height = cam.height;
    img.data.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.f);
    if (!pose_in_bounds(scene, pose)) {
        img.pose_outside_bounds = true;
        return img;
    }
    Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
    for (int r = 0; r < cam.height; ++r)
        for (int c = 0; c < cam.width; ++c) {
            Vec3 dir = pixel_ray(cam, pose, r, c, cfg);
            img.data[r * cam.width + c] =
                static_cast<float>(trace_ray(scene, origin, dir, cam.max_range));
        }
    return img;
}

SemanticImage raycast_semantic(const SceneSpec& scene, const Pose& pose,
                               const CameraIntrinsics& cam, const Config& cfg) {
    SemanticImage img;
    img.width = cam.width;
    img.height = cam.height;
    img.data.assign(static_cast<std::size_t>(cam.width) * cam.height, 0);
    if (!pose_in_bounds(scene, pose)) return img;
    Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
    for (int r = 0; r < cam.height; ++r)
        for (int c = 0; c < cam.width; ++c) {
            Vec3 dir = pixel_ray(cam, pose, r, c, cfg);
            int cls = 0;
            double d = trace_ray(scene, origin, dir, cam.max_range, &cls);
            img.data[r * cam.width + c] = d > 0 ? static_cast<uint8_t>(cls) : 0;
        }
    return img;
}

// IEEE 754 half-precision conversion, round-to-nearest-even.
uint16_t f32_to_f16(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    uint32_t sign = (x >> 16) & 0x8000u;
    int32_t exp = static_cast<int32_t>((x >> 23) & 0xff) - 127 + 15;
    uint32_t mant = x & 0x7fffffu;
    if (exp >= 31) return static_cast<uint16_t>(sign | 0x7c00u);  // overflow -> inf
    if (exp <= 0) {
        if (exp < -10) return static_cast<uint16_t>(sign);
        mant |= 0x800000u;
        int shift = 14 - exp;
        uint32_t half = mant >> shift;
        uint32_t rem = mant & ((1u << shift) - 1);
        uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1))) ++half;
        return static_cast<uint16_t>(sign | half);
    }
    uint32_t half = (static_cast<uint32_t>(exp) << 10) | (mant >> 13);
    uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1))) ++half;
    return static_cast<uint16_t>(sign | half);
}

float f16_to_f32(uint16_t h) {
    uint32_t sign = (h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1f;
    uint32_t mant = h & 0x3ffu;
    uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {
            exp = 127 - 15 + 1;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3ffu;
            x = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        x = sign | 0x7f800000u | (mant << 13);
    } else {
        x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

namespace {

// Stdlib distributions are not bit-stable across implementations, so the
// Gaussian draw is hand-rolled (Box-Muller over mt19937_64 words).
FeatureVec random_unit_vector(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&] {
        return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    };
    FeatureVec v;
    for (int i = 0; i < kFeatureDim; i += 2) {
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        v[i] = static_cast<float>(r * std::cos(2.0 * kPi * u2));
        v[i + 1] = static_cast<float>(r * std::sin(2.0 * kPi * u2));
    }
    feat_normalize(v);
    return v;
}

// Quantize to half precision so a persisted prototype restores bitwise.
FeatureVec quantize_half(FeatureVec v) {
    for (auto& x : v) x = f16_to_f32(f32_to_f16(x));
    return v;
}

std::array<FeatureVec, kNumClasses> build_class_features() {
    std::array<uint64_t, kNumClasses> seeds;
    std::array<FeatureVec, kNumClasses> feats;
    for (int c = 0; c < kNumClasses; ++c) {
        seeds[c] = 0x9e3779b97f4a7c15ull * (c + 1);
        feats[c] = quantize_half(random_unit_vector(seeds[c]));
    }
    // Reseed any class whose feature is too aligned with an earlier one.
    for (bool changed = true; changed;) {
        changed = false;
        for (int a = 0; a < kNumClasses && !changed; ++a)
            for (int b = a + 1; b < kNumClasses && !changed; ++b) {
                if (std::abs(feat_dot(feats[a], feats[b])) >= 0.2f) {
                    seeds[b] += 0x1000;
                    feats[b] = quantize_half(random_unit_vector(seeds[b]));
                    changed = true;
                }
            }
    }
    return feats;
}

}  // namespace

const FeatureVec& class_feature(int class_id) {
    static const std::array<FeatureVec, kNumClasses> feats = build_class_features();
    if (class_id < 0 || class_id >= kNumClasses)
        throw std::out_of_range("class id out of range: " + std::to_string(class_id));
    return feats[class_id];
}

int class_feature_index(const FeatureVec& v) {
    // First-component bit pattern narrows the search to (almost always) one
    // candidate; the full comparison confirms it.
    static const std::unordered_map<uint32_t, std::vector<int>> buckets = [] {
        std::unordered_map<uint32_t, std::vector<int>> m;
        for (int c = 0; c < kNumClasses; ++c) {
            uint32_t bits;
            std::memcpy(&bits, &class_feature(c)[0], 4);
            m[bits].push_back(c);
        }
        return m;
    }();
    uint32_t bits;
    std::memcpy(&bits, &v[0], 4);
    auto it = buckets.find(bits);
    if (it == buckets.end()) return -1;
    for (int c : it->second)
        if (std::memcmp(v.data(), class_feature(c).data(), sizeof(FeatureVec)) == 0) return c;
    return -1;
}

FeatureImage render_feature(const SceneSpec& scene, const Pose& pose, const CameraIntrinsics& cam,
                            const Config& cfg) {
    SemanticImage sem = raycast_semantic(scene, pose, cam, cfg);
    FeatureImage img;
    img.width = cam.width;
    img.height = cam.height;
    img.data.reserve(sem.data.size());
    for (std::size_t i = 0; i < sem.data.size(); ++i)
        img.data.push_back(sem.data[i] == 0 ? feat_zero() : class_feature(sem.data[i]));
    return img;
}

}  // namespace panonav
