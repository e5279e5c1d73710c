#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "panonav/mapping.hpp"

namespace panonav {

// Agent-centric probability field over navigable ground, frame shared with
// EgoMaps (agent at center, facing +row).
struct TraversableMap {
    int size = 192;
    std::vector<float> values;

    TraversableMap() = default;
    explicit TraversableMap(int n) : size(n), values(n * n, 0.f) {}
    float at(int r, int c) const { return values[r * size + c]; }
    float& at(int r, int c) { return values[r * size + c]; }
    bool warning = false;  // set when built from an empty waypoint set
};

struct Waypoint {
    int sector = 0;       // 0..11, 30-degree sectors CCW from the heading
    double angle = 0;     // radians relative to agent heading
    double distance = 0;  // meters
    int row = 0, col = 0;
    double score = 0;
};

// Ground-truth traversable target: mean of unnormalized unit-peak 2D
// Gaussians centered at the waypoint cells, sigma in cells, clamped to
// [0,1].
TraversableMap gaussian_target(const std::vector<std::pair<int, int>>& waypoint_cells,
                               double sigma_cells, int size = 192);

// Mean squared error between two maps of the same shape.
double traversable_loss(const TraversableMap& pred, const TraversableMap& gt);

enum class PredictorKind { kAnalytic, kExternal };

struct TraversablePredictor {
    PredictorKind kind = PredictorKind::kAnalytic;
    bool use_semantic = true;   // landmark boost for doors/stairs
    bool use_occupancy = true;  // clearance + reachability terms
    std::function<TraversableMap(const EgoMaps&)> external;
};

// Analytic default: clearance (saturating distance transform to occupied)
// x reachability (8-connected free path from the agent cell) x landmark
// boost on door/stairs cells; void cells score 0.
TraversableMap predict_traversable(const EgoMaps& ego, const TraversablePredictor& pred,
                                   const Config& cfg);

// 12-sector argmax extraction: per sector the best cell at distance >=
// min_dist whose occupancy is not occupied; top-k winners overall, ties by
// (sector index, then distance).
std::vector<Waypoint> extract_waypoints(const TraversableMap& t, const EgoMaps& ego, int k,
                                        double min_dist, const Config& cfg);

// Sector of a crop cell relative to the center, [0,30) deg = sector 0.
int cell_sector(int row, int col, int size);

}  // namespace panonav
