#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panonav/geometry.hpp"

namespace panonav {

constexpr int kNumClasses = 27;

// Semantic class ids. 0 is reserved for void (no hit); door and stairs are
// the traversable landmarks the traversable-map predictor boosts.
enum SemClass : int {
    kVoid = 0,
    kWall = 1,
    kFloor = 2,
    kDoor = 3,
    kStairs = 4,
    kSofa = 5,
    kTable = 6,
    kChair = 7,
    kBed = 8,
    kWardrobe = 9,
    kToilet = 10,
    kSink = 11,
    kBathtub = 12,
    kFridge = 13,
    kStove = 14,
    kCounter = 15,
    kShelf = 16,
    kTv = 17,
    kPlant = 18,
    kLamp = 19,
    kRug = 20,
    kDesk = 21,
    kCabinet = 22,
    kMirror = 23,
    kWindow = 24,
    kCrate = 25,
    kCeiling = 26,
};

struct RoomLabel {
    std::string name;  // living_room, kitchen, bathroom, bedroom
    Vec2 min, max;
};

struct NavEdge {
    int a = 0, b = 0;
};

struct SceneSpec {
    Box bounds;
    double floor_height = 0.0;
    std::vector<Box> boxes;
    std::vector<RoomLabel> rooms;
    std::vector<Vec2> nav_nodes;
    std::vector<NavEdge> nav_edges;

    // Obstacle boxes are the non-traversable ones intersecting the agent's
    // height band; floor slabs and ceilings are excluded.
    bool is_obstacle(const Box& b, double band_lo, double band_hi) const {
        return !b.traversable && b.z_overlaps(floor_height + band_lo, floor_height + band_hi);
    }
    bool point_in_free_space(const Vec2& p, double clearance, double band_lo = 0.10,
                             double band_hi = 1.60) const;
    bool segment_free(const Vec2& a, const Vec2& b, double clearance = 0.0,
                      double band_lo = 0.10, double band_hi = 1.60) const;
};

struct SceneParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse and validate a scene-spec document. Line-based format:
//   bounds MINX MINY MINZ MAXX MAXY MAXZ
//   floor Z
//   box MINX MINY MINZ MAXX MAXY MAXZ CLASS [traversable]
//   room NAME MINX MINY MAXX MAXY
//   node X Y
//   edge I J
// '#' starts a comment. Throws SceneParseError with the offending line or
// entity named.
SceneSpec load_scene(const std::string& text);
SceneSpec load_scene_file(const std::string& path);

// Serialize back to the document format (load_scene round-trips).
std::string scene_to_text(const SceneSpec& scene);

}  // namespace panonav
