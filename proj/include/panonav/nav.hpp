#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "panonav/feature_fields.hpp"
#include "panonav/mapping.hpp"
#include "panonav/scene.hpp"
#include "panonav/traversable.hpp"

namespace panonav {

struct Metrics {
    double ne = 0;
    int sr = 0;
    int osr = 0;
    double spl = 0;
};

// NE / SR / OSR / SPL for a finished trajectory. shortest_path_len <= 0
// with a moving trajectory degenerates to spl = sr.
Metrics compute_metrics(const std::vector<Pose>& trajectory, const Vec2& goal,
                        double success_radius, bool stopped, double shortest_path_len);

double path_length(const std::vector<Pose>& trajectory);

struct AblationFlags {
    bool use_fields = true;
    bool use_memory = false;
    bool use_semantic_map = true;
    bool use_occupancy_map = true;
};

struct EpisodeSpec {
    std::string scene_id;
    Pose start;
    Vec2 goal;
    FeatureVec goal_descriptor;  // stands in for the instruction
    double success_radius = 3.0;
    int max_steps = 40;
    AblationFlags flags;
};

struct StepLog {
    Pose pose;
    int waypoints_considered = 0;
    int chosen_sector = -1;
    double chosen_score = 0;
    double panorama_coverage = 0;  // mean over slots
    bool recovery_rotation = false;
    bool stop = false;
};

struct EpisodeResult {
    std::vector<Pose> trajectory;
    double traversed_length = 0;
    double shortest_path_len = 0;
    bool stopped = false;
    Metrics metrics;
    std::vector<StepLog> steps;
};

enum class PolicyKind { kGreedyGoal, kGreedyGoalForward, kFieldSimilarity, kExternal };

struct PolicyDecision {
    bool stop = false;
    int waypoint_index = -1;  // into the candidate list
};

struct PolicyContext {
    const EpisodeSpec& spec;
    const Pose& pose;
    const std::vector<Waypoint>& waypoints;
    const Panorama& panorama;
    // Positions already visited this episode (one per action step), used by
    // the exploration scoring to avoid revisiting covered ground.
    const std::vector<Vec2>* visited = nullptr;
};

struct Policy {
    PolicyKind kind = PolicyKind::kFieldSimilarity;
    std::function<PolicyDecision(const PolicyContext&)> external;
};

// Waypoint scoring used by the field-similarity policy: alpha * cosine
// similarity of the waypoint's bearing slot against the goal descriptor
// plus (1 - alpha) * a nearness prior toward the best-similarity bearing's
// projected target. All-zero panoramas fall back to a distance-only
// exploration prior.
PolicyDecision policy_field_similarity(const PolicyContext& ctx, const Config& cfg);

// Shortest start->goal path length through the scene's nav graph, with the
// endpoints linked to every node they can reach in a straight free line.
double nav_graph_shortest_path(const SceneSpec& scene, const Vec2& start, const Vec2& goal,
                               const Config& cfg);

struct EpisodeIO {
    std::string dump_dir;   // per-step PGM dumps when non-empty
    bool dump_maps = false;
    bool dump_panoramas = false;
};

// Run one navigation episode: bootstrap 360-degree rotation, then per-step
// perceive -> map -> refine -> predict traversable -> extract waypoints ->
// render panorama -> policy -> straight-line motion with cylinder
// collision checks. An optional persistent cloud carries feature fields
// across episodes (memory preset).
EpisodeResult run_episode(const SceneSpec& scene, const EpisodeSpec& spec, const Policy& policy,
                          const Config& cfg, uint64_t seed, FeatureCloud* persistent_cloud = nullptr,
                          const EpisodeIO* io = nullptr);

// Post-hoc geometric check that no trajectory pose intersects an inflated
// obstacle box.
bool trajectory_collision_free(const SceneSpec& scene, const std::vector<Pose>& traj,
                               const Config& cfg);

struct SuiteEpisode {
    std::string scene_path;
    EpisodeSpec spec;
};

struct SuiteRow {
    std::string scene_id;
    uint64_t seed = 0;
    Metrics metrics;
    double traversed_length = 0;
    int steps = 0;
};

struct SuiteResult {
    std::vector<SuiteRow> rows;
    double mean_ne = 0, mean_sr = 0, mean_osr = 0, mean_spl = 0;
};

// Known ablation presets: no_fields, fields, fields_memory, no_semantic,
// no_occupancy, full. Throws std::invalid_argument for anything else.
AblationFlags preset_flags(const std::string& preset);

// Run specs x seeds under one preset. The memory preset groups episodes by
// scene in declared order and preserves the feature cloud between them
// (maps are always rebuilt per episode).
SuiteResult run_suite(const std::vector<SuiteEpisode>& episodes, const AblationFlags& flags,
                      const std::vector<uint64_t>& seeds, const Policy& policy,
                      const Config& cfg, const EpisodeIO* io = nullptr);

// Episode suite file: lines of
//   episode SCENE_PATH START_X START_Y START_YAW_DEG GOAL_X GOAL_Y GOAL_CLASS
// Paths are resolved relative to the suite file's directory.
std::vector<SuiteEpisode> load_suite_file(const std::string& path, const Config& cfg);
std::string suite_to_csv(const SuiteResult& result);
std::string suite_to_json(const SuiteResult& result, const std::string& preset);

}  // namespace panonav
