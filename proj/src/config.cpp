#include "panonav/config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace panonav {

namespace {

template <typename T>
void parse_into(T& field, const std::string& value) {
    std::istringstream is(value);
    is >> field;
    if (is.fail()) throw std::runtime_error("bad config value: " + value);
}

void parse_bool(bool& field, const std::string& value) {
    if (value == "1" || value == "true") field = true;
    else if (value == "0" || value == "false") field = false;
    else throw std::runtime_error("bad config flag: " + value);
}

}  // namespace

void apply_config_text(Config& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto eq = key.find('=');
        std::string value;
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.erase(eq);
        } else {
            std::string rest;
            ls >> rest;
            if (rest == "=") ls >> value;
            else if (!rest.empty() && rest[0] == '=') value = rest.substr(1);
            else value = rest;
        }
        if (value.empty()) throw std::runtime_error("config line missing value: " + line);

        if (key == "agent_radius") parse_into(cfg.agent_radius, value);
        else if (key == "camera_height") parse_into(cfg.camera_height, value);
        else if (key == "max_range") parse_into(cfg.max_range, value);
        else if (key == "pinhole_projection") parse_bool(cfg.pinhole_projection, value);
        else if (key == "map_size") parse_into(cfg.map_size, value);
        else if (key == "map_resolution") parse_into(cfg.map_resolution, value);
        else if (key == "ego_size") parse_into(cfg.ego_size, value);
        else if (key == "obstacle_height_min") parse_into(cfg.obstacle_height_min, value);
        else if (key == "obstacle_height_max") parse_into(cfg.obstacle_height_max, value);
        else if (key == "gaussian_sigma_cells") parse_into(cfg.gaussian_sigma_cells, value);
        else if (key == "waypoint_top_k") parse_into(cfg.waypoint_top_k, value);
        else if (key == "waypoint_min_dist") parse_into(cfg.waypoint_min_dist, value);
        else if (key == "exclusion_radius") parse_into(cfg.exclusion_radius, value);
        else if (key == "clearance_saturation_cells") parse_into(cfg.clearance_saturation_cells, value);
        else if (key == "landmark_boost") parse_into(cfg.landmark_boost, value);
        else if (key == "voxel_size") parse_into(cfg.voxel_size, value);
        else if (key == "knn_k") parse_into(cfg.knn_k, value);
        else if (key == "knn_radius") parse_into(cfg.knn_radius, value);
        else if (key == "field_bandwidth") parse_into(cfg.field_bandwidth, value);
        else if (key == "field_sigma_scale") parse_into(cfg.field_sigma_scale, value);
        else if (key == "ray_samples") parse_into(cfg.ray_samples, value);
        else if (key == "ray_extension") parse_into(cfg.ray_extension, value);
        else if (key == "near_clip") parse_into(cfg.near_clip, value);
        else if (key == "fallback_depth") parse_into(cfg.fallback_depth, value);
        else if (key == "cloud_capacity") parse_into(cfg.cloud_capacity, value);
        else if (key == "insert_stride") parse_into(cfg.insert_stride, value);
        else if (key == "voxel_point_cap") parse_into(cfg.voxel_point_cap, value);
        else if (key == "success_radius") parse_into(cfg.success_radius, value);
        else if (key == "sub_step") parse_into(cfg.sub_step, value);
        else if (key == "max_steps") parse_into(cfg.max_steps, value);
        else if (key == "policy_alpha") parse_into(cfg.policy_alpha, value);
        else if (key == "stop_similarity") parse_into(cfg.stop_similarity, value);
        else if (key == "stop_distance") parse_into(cfg.stop_distance, value);
        else if (key == "stop_margin") parse_into(cfg.stop_margin, value);
        else if (key == "goal_visible_similarity") parse_into(cfg.goal_visible_similarity, value);
        else if (key == "explore_forward_bias") parse_into(cfg.explore_forward_bias, value);
        else if (key == "explore_revisit_radius") parse_into(cfg.explore_revisit_radius, value);
        else if (key == "explore_revisit_penalty") parse_into(cfg.explore_revisit_penalty, value);
        else if (key == "cam_width") parse_into(cfg.cam_width, value);
        else if (key == "cam_height") parse_into(cfg.cam_height, value);
        else if (key == "cam_hfov") parse_into(cfg.cam_hfov, value);
        else if (key == "cam_vfov") parse_into(cfg.cam_vfov, value);
        else throw std::runtime_error("unknown config key: " + key);
    }
}

Config load_config() {
    Config cfg;
    const char* path = std::getenv("PANOPTIC_NAV_CONFIG");
    if (path && *path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error(std::string("cannot open config file: ") + path);
        std::stringstream buf;
        buf << in.rdbuf();
        apply_config_text(cfg, buf.str());
    }
    return cfg;
}

}  // namespace panonav
