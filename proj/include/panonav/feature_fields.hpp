#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "panonav/config.hpp"
#include "panonav/render.hpp"

namespace panonav {

struct CloudPoint {
    Vec3 position;
    FeatureVec feature;
    uint32_t source_step = 0;
    // class_feature index when the feature is exactly a class prototype,
    // else -1; lets rendering run in class-coefficient space.
    int16_t class_index = -1;
};

// 3D feature point cloud under a voxel-hash index. Points keep stable ids
// (insertion order); capacity overflow evicts the oldest points.
class FeatureCloud {
public:
    explicit FeatureCloud(const Config& cfg = {});

    // May drop the point when its voxel is already at the densification
    // cap; returns false in that case.
    bool insert(const Vec3& pos, const FeatureVec& feat, uint32_t step);
    std::size_t size() const { return points_.size(); }
    uint64_t id_offset() const { return offset_; }
    const CloudPoint& point(uint64_t id) const { return points_[id - offset_]; }
    double voxel_size() const { return voxel_size_; }
    // True when every point's feature is a class prototype (the common case
    // for internally generated observations).
    bool all_classed() const { return unclassed_ == 0; }

    struct Neighbor {
        uint64_t id;
        double distance;
    };
    // Up to k nearest points within radius, ascending by distance, ties by
    // insertion order. Scans voxel shells outward with early termination.
    std::vector<Neighbor> knn(const Vec3& query, int k, double radius) const;

    // Any point within radius of the query (cheaper than a full knn).
    bool has_neighbor(const Vec3& query, double radius) const;

    std::unordered_map<int64_t, std::vector<uint64_t>> const& voxels() const { return voxels_; }

    // Flat per-voxel view for renderers: one representative position inside
    // the voxel plus the id list. Cheaper to scan than the hash map.
    struct VoxelRef {
        Vec3 rep;
        const std::vector<uint64_t>* ids;
    };
    const std::vector<VoxelRef>& voxel_refs() const;

    // Version-tagged binary round-trip: float32 positions, float16
    // features, uint32 source step.
    void persist(std::ostream& out) const;
    static FeatureCloud restore(std::istream& in, const Config& cfg = {});
    void persist_file(const std::string& path) const;
    static FeatureCloud restore_file(const std::string& path, const Config& cfg = {});

private:
    int64_t voxel_key(const Vec3& p) const;
    void evict_oldest();
    static bool grid_maybe(const std::unordered_map<int64_t, uint32_t>& grid, double cell,
                           const Vec3& q);
    static void grid_mark(std::unordered_map<int64_t, uint32_t>& grid, double cell,
                          const Vec3& p, int delta);

    void refresh_grids() const;

    double voxel_size_;
    std::size_t capacity_;
    int point_cap_;
    std::deque<CloudPoint> points_;
    uint64_t offset_ = 0;      // id of points_.front()
    std::size_t unclassed_ = 0;  // points whose feature is not a prototype
    std::unordered_map<int64_t, std::vector<uint64_t>> voxels_;
    // Occupancy grids dilated by one cell at two scales: a query cell left
    // unmarked proves no point lies within the cell size, so empty-space
    // lookups cost a single hash probe. Rebuilt lazily on the first query
    // after a mutation, since renderers that never call knn shouldn't pay
    // for their upkeep.
    double coarse_size_, mid_size_;
    mutable std::unordered_map<int64_t, uint32_t> coarse_, mid_;
    mutable bool grids_dirty_ = false;
    mutable std::vector<VoxelRef> refs_;
    mutable bool refs_dirty_ = false;  // set when an eviction empties a voxel
};

struct CloudFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
    explicit CloudFormatError(const std::string& msg, uint64_t at)
        : std::runtime_error(msg), offset(at) {}
    uint64_t offset = 0;
};

enum class FieldKind { kAnalytic, kExternal };

struct FieldModel {
    FieldKind kind = FieldKind::kAnalytic;
    // External density/latent model under the analytic signature.
    std::function<std::pair<double, FeatureVec>(const FeatureCloud&, const Vec3&)> external;
};

// Density and latent vector of the field at a position. Analytic default:
// Gaussian-kernel weights over the k nearest neighbors, sigma = s0 * sum w,
// latent = weighted feature mean (unit-normalized); no neighbors -> (0, 0).
std::pair<double, FeatureVec> field_at(const FeatureCloud& cloud, const Vec3& position,
                                       const Config& cfg, const FieldModel& model = {});

struct RaySample {
    Vec3 position;
    double sigma = 0;
    FeatureVec latent;
    double delta = 0;
};

// Volume-rendering composite over samples in ray order: weight_n =
// tau_n * (1 - exp(-sigma_n*delta_n)) with tau the accumulated
// transmittance; returns the weighted latent sum and total opacity.
std::pair<FeatureVec, double> composite_samples(const std::vector<RaySample>& samples);

// Uniform N-point sampling from cam_pos toward target (ray length extended
// past the target, near-clipped), field lookups, then compositing.
std::pair<FeatureVec, double> render_subregion(const FeatureCloud& cloud, const Vec3& cam_pos,
                                               const Vec3& target, const Config& cfg,
                                               const FieldModel& model = {},
                                               bool* found_neighbors = nullptr);

struct RenderedView {
    std::vector<FeatureVec> region_features;  // 8x8 row-major
    std::vector<double> region_opacity;
    std::vector<double> region_depths;  // surface depth used per subregion, m
    FeatureVec view_feature;  // unit when coverage > 0, zero otherwise
    double coverage = 0;      // fraction of subregions whose rays found points
    double expected_depth = 0;  // opacity-weighted mean subregion depth, m
};

enum class Aggregator { kMean, kExternal };

struct ViewAggregator {
    Aggregator kind = Aggregator::kMean;
    std::function<FeatureVec(const RenderedView&)> external;
};

constexpr int kViewGrid = 8;

// Render a novel view: the frustum is split into 8x8 angular subregions,
// each rendered along its center ray with the target at the nearest cloud
// hit (fallback depth when nothing is found). The view feature is the
// opacity-weighted mean of subregion features, unit-normalized.
RenderedView render_view(const FeatureCloud& cloud, const Pose& pose,
                         const CameraIntrinsics& cam, const Config& cfg,
                         const FieldModel& model = {}, const ViewAggregator& agg = {});

struct Panorama {
    std::vector<FeatureVec> slots;     // 12 view features, slot 0 observed
    std::vector<double> coverage;      // per slot
    std::vector<double> slot_depth;    // expected surface depth per slot, m
    // Per-slot 8x8 region features (unit-normalized) and depths; slot 0
    // regions come from block-averaging the observed forward image.
    std::vector<std::vector<FeatureVec>> regions;
    std::vector<std::vector<double>> region_depths;
};

constexpr int kPanoramaSlots = 12;

// Slot 0 is the unit-normalized mean of the forward image's valid pixel
// features; slots 1..11 are rendered at yaw + 30 deg * i (CCW). The
// optional forward depth image fills slot 0 region depths.
Panorama render_panorama(const FeatureCloud& cloud, const Pose& pose,
                         const CameraIntrinsics& cam, const FeatureImage& forward,
                         const Config& cfg, const FieldModel& model = {},
                         const DepthImage* forward_depth = nullptr);

// Insert every valid pixel (stride-subsampled) of a posed frame.
void insert_view(FeatureCloud& cloud, const FeatureImage& feat, const DepthImage& depth,
                 const Pose& pose, const CameraIntrinsics& cam, uint32_t step,
                 const Config& cfg);

}  // namespace panonav
