#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "panonav/config.hpp"
#include "panonav/geometry.hpp"
#include "panonav/scene.hpp"

namespace panonav {

constexpr int kFeatureDim = 512;
using FeatureVec = std::array<float, kFeatureDim>;

float feat_dot(const FeatureVec& a, const FeatureVec& b);
float feat_norm(const FeatureVec& v);
void feat_normalize(FeatureVec& v);
bool feat_is_zero(const FeatureVec& v);
FeatureVec feat_zero();

struct CameraIntrinsics {
    int width = 64, height = 64;
    double hfov = 90.0, vfov = 90.0;  // degrees
    double max_range = 10.0;          // m
};

// Real-robot preset: Intel RealSense D435 field of view.
inline CameraIntrinsics d435_camera(int w = 64, int h = 48, double max_range = 10.0) {
    return {w, h, 69.0, 42.0, max_range};
}

struct DepthImage {
    int width = 0, height = 0;
    std::vector<float> data;  // row-major, meters, 0 = no hit
    bool pose_outside_bounds = false;
    float at(int r, int c) const { return data[r * width + c]; }
};

struct SemanticImage {
    int width = 0, height = 0;
    std::vector<uint8_t> data;  // class ids, 0 = void
    uint8_t at(int r, int c) const { return data[r * width + c]; }
};

struct FeatureImage {
    int width = 0, height = 0;
    std::vector<FeatureVec> data;  // zero vector = invalid pixel
    const FeatureVec& at(int r, int c) const { return data[r * width + c]; }
};

// Viewing direction of pixel (row, col) in the world frame. Columns sweep
// azimuth from +hfov/2 (left, CCW-positive) down to -hfov/2; rows sweep
// elevation from +vfov/2 (top) down. Angles are linear in the pixel index
// with no half-pixel offset, so doubling the resolution keeps every
// original ray direction, and the center pixel of an even-sized image
// looks exactly along the heading. With cfg.pinhole_projection the grid is
// tan-projected instead.
Vec3 pixel_ray(const CameraIntrinsics& cam, const Pose& pose, int row, int col,
               const Config& cfg);

// Distance along a single ray to the nearest box surface, 0 if none within
// max_range. All boxes occlude, traversable or not.
double trace_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir,
                 double max_range, int* hit_class = nullptr);

DepthImage raycast_depth(const SceneSpec& scene, const Pose& pose,
                         const CameraIntrinsics& cam, const Config& cfg);
SemanticImage raycast_semantic(const SceneSpec& scene, const Pose& pose,
                               const CameraIntrinsics& cam, const Config& cfg);

// IEEE 754 half-precision conversion, round-to-nearest-even. Shared by the
// cloud persistence format and the class-feature quantization below.
uint16_t f32_to_f16(float f);
float f16_to_f32(uint16_t h);

// Deterministic pseudo-random near-unit vector for a semantic class,
// pairwise |cos| < 0.2 between distinct classes. Components are quantized
// to half precision so the persisted-cloud round trip reproduces them
// bitwise. Same id always returns the same vector. Throws
// std::out_of_range for ids outside [0, 27).
const FeatureVec& class_feature(int class_id);

// Index of the class whose feature equals v component-for-component, or -1
// when v is not a class prototype.
int class_feature_index(const FeatureVec& v);

// Pixelwise class_feature of the semantic rendering; void pixels get the
// zero vector.
FeatureImage render_feature(const SceneSpec& scene, const Pose& pose,
                            const CameraIntrinsics& cam, const Config& cfg);

}  // namespace panonav
