#pragma once

#include <string>

namespace panonav {

// All tunables in one place. Defaults can be overridden by a key=value file
// pointed to by the PANOPTIC_NAV_CONFIG environment variable.
struct Config {
    // Agent body (LoCoBot-like cylinder).
    double agent_radius = 0.18;   // m
    double camera_height = 0.88;  // m above pose z

    // Simulator.
    double max_range = 10.0;  // m, depth camera range limit
    bool pinhole_projection = false;  // default is linear-angle ray grid

    // Global map.
    int map_size = 512;
    double map_resolution = 0.05;  // m per cell
    int ego_size = 192;

    // Ground projection height band above the floor.
    double obstacle_height_min = 0.10;  // m
    double obstacle_height_max = 1.60;  // m

    // Traversable map.
    double gaussian_sigma_cells = 5.0;
    int waypoint_top_k = 6;
    double waypoint_min_dist = 0.30;  // m
    double exclusion_radius = 0.0;    // m, extra occupancy exclusion around a waypoint
    double clearance_saturation_cells = 6.0;
    double landmark_boost = 1.25;

    // Feature fields.
    double voxel_size = 0.10;       // m
    int knn_k = 8;
    double knn_radius = 0.40;       // m
    double field_bandwidth = 0.15;  // m, kernel width h
    double field_sigma_scale = 25.0;  // 1/m, s0
    int ray_samples = 24;
    double ray_extension = 1.2;     // ray length = dist-to-target * this
    double near_clip = 0.05;        // m
    double fallback_depth = 3.0;    // m, when no surface hit is found
    std::size_t cloud_capacity = 2'000'000;
    int insert_stride = 2;          // every Nth pixel in each image axis
    int voxel_point_cap = 1;        // densification limit per voxel; <=0 disables

    // Navigation harness.
    double success_radius = 3.0;  // m
    double sub_step = 0.25;       // m
    int max_steps = 40;
    double policy_alpha = 0.7;
    double stop_similarity = 0.8;
    double stop_distance = 0.5;   // m
    double stop_margin = 1.0;     // m slack between an object's visible surface and its center
    double goal_visible_similarity = 0.35;  // peak similarity that switches to goal-seeking
    double explore_forward_bias = 1.5;      // m bonus for straight-ahead frontier waypoints
    double explore_revisit_radius = 1.0;    // m; waypoints this close to a past pose are penalized
    double explore_revisit_penalty = 3.0;   // m equivalent score subtracted for revisits

    // Episode camera.
    int cam_width = 64;
    int cam_height = 64;
    double cam_hfov = 90.0;  // deg, sim preset
    double cam_vfov = 90.0;  // deg
};

// Default config, with PANOPTIC_NAV_CONFIG overrides applied if the
// variable is set. Unknown keys in the file are an error.
Config load_config();

// Parse a key=value config text into an existing config. Throws
// std::runtime_error on unknown keys or malformed lines.
void apply_config_text(Config& cfg, const std::string& text);

}  // namespace panonav
