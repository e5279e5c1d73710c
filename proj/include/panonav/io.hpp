#pragma once

#include <string>
#include <vector>

#include "panonav/feature_fields.hpp"
#include "panonav/mapping.hpp"
#include "panonav/render.hpp"
#include "panonav/traversable.hpp"

namespace panonav {

// 16-bit PGM, depth scaled to millimeters.
void write_depth_pgm(const DepthImage& img, const std::string& path);
// 8-bit PGM of class ids.
void write_semantic_pgm(const SemanticImage& img, const std::string& path);
// Occupancy as 3 gray levels (void 0, free 128, occupied 255) plus a
// sidecar text file with origin and resolution.
void write_occupancy_pgm(const GlobalMaps& maps, const std::string& path);
void write_ego_pgms(const EgoMaps& ego, const std::string& occ_path,
                    const std::string& sem_path);
void write_traversable_pgm(const TraversableMap& t, const std::string& path);

std::string waypoints_to_csv(const std::vector<Waypoint>& wps);
std::string panorama_to_csv(const Panorama& pano);

}  // namespace panonav
