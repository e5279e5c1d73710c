#pragma once

#include <string>
#include <vector>

#include "panonav/nav.hpp"
#include "panonav/scene.hpp"

namespace panonav {

// Deterministic 4-room house layouts (living room, kitchen, bathroom,
// bedroom) mirroring the desk-scale lab setup. Templates layout_A..layout_E
// differ in room arrangement; the seed jitters furniture placement.
SceneSpec generate_layout(const std::string& tmpl, uint64_t seed);
std::vector<std::string> layout_names();

// Fixture scenes for the ablation suites.
SceneSpec adversarial_fixture();          // goal room behind the agent, dead end ahead
EpisodeSpec adversarial_episode(const Config& cfg);
std::vector<SuiteEpisode> door_fixture_suite(const Config& cfg);     // goals behind narrow doors
std::vector<SuiteEpisode> clutter_fixture_suite(const Config& cfg);  // cluttered rooms
// The bundled 20-episode suite over the five layouts.
std::vector<SuiteEpisode> bundled_suite(const Config& cfg);

// Resolves the pseudo-paths used by the fixture suites ("adversarial",
// "door_N", "clutter_N", "layout_X") to their scenes.
SceneSpec fixture_scene(const std::string& pseudo_path);

// Writes each distinct pseudo-path scene of a suite into dir as a scene
// file and rewrites the episodes' scene_path entries to point at it.
void materialize_suite(std::vector<SuiteEpisode>& suite, const std::string& dir);

}  // namespace panonav
