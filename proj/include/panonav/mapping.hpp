#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "panonav/config.hpp"
#include "panonav/render.hpp"

namespace panonav {

enum class Occ : uint8_t { kVoid = 0, kFree = 1, kOccupied = 2 };

// Accumulated world-frame occupancy and per-cell semantic class counts.
// Row index follows world x, column index follows world y.
struct GlobalMaps {
    int size = 512;
    double resolution = 0.05;
    Vec2 origin;  // world coordinate of cell (0,0) corner
    double floor_height = 0.0;
    std::vector<Occ> occupancy;              // size*size
    std::vector<uint32_t> observation_count;  // size*size
    std::vector<uint16_t> semantic_counts;    // size*size*27
    uint64_t dropped_points = 0;

    GlobalMaps() = default;
    // Origin centered on the episode start pose.
    GlobalMaps(const Pose& start, double floor, const Config& cfg);

    int idx(int r, int c) const { return r * size + c; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < size && c >= 0 && c < size; }
    // Cell containing a world point.
    void cell_of(const Vec2& p, int& r, int& c) const;
    Vec2 cell_center(int r, int c) const;
    int semantic_argmax(int r, int c) const;
};

// Agent-centric crops; the agent sits at the center cell facing the +row
// direction. Occupancy and semantics are stored as per-cell distributions
// (all-zero for void cells).
struct EgoMaps {
    int size = 192;
    std::vector<std::array<float, 3>> occ_dist;
    std::vector<std::array<float, kNumClasses>> sem_dist;

    int idx(int r, int c) const { return r * size + c; }
    Occ occ_class(int r, int c) const;
    int sem_argmax(int r, int c) const;  // -1 for void
    bool is_void(int r, int c) const;
};

enum class RefinerKind { kIdentity, kHolefill, kExternal };

struct RefinerConfig {
    RefinerKind kind = RefinerKind::kHolefill;
    bool use_positional_embedding = false;
    int embedding_channels = 16;
    // External refiner hook; must return maps of the same shape.
    std::function<EgoMaps(const EgoMaps&)> external;
};

// Lift every valid depth pixel to a world point and fold it into the maps:
// points in the obstacle height band mark occupied and add their class
// count, points below it mark free, and the ground track from the camera
// to each point turns void cells free. Occupied never downgrades within or
// across updates.
void ground_project(GlobalMaps& maps, const DepthImage& depth, const SemanticImage& sem,
                    const Pose& pose, const CameraIntrinsics& cam, const Config& cfg);

EgoMaps crop_ego(const GlobalMaps& maps, const Pose& pose, const Config& cfg);

EgoMaps refine(const EgoMaps& ego, const RefinerConfig& rcfg);

// Mean pixel-wise cross-entropy against one-hot ground truth, for the
// semantic and occupancy layers. Predicted probabilities are clamped at
// 1e-12 before the log.
std::pair<double, double> refinement_losses(const EgoMaps& pred, const EgoMaps& gt);

}  // namespace panonav
