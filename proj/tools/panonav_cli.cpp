#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "panonav/config.hpp"
#include "panonav/feature_fields.hpp"
#include "panonav/nav.hpp"
#include "panonav/scene.hpp"
#include "panonav/scene_gen.hpp"

namespace fs = std::filesystem;
using namespace panonav;

namespace {

int cmd_scene_gen(const std::string& tmpl, uint64_t seed, const std::string& out) {
    SceneSpec scene = generate_layout(tmpl, seed);
    std::string text = scene_to_text(scene);
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        std::ofstream f(out, std::ios::trunc);
        if (!f) {
            std::cerr << "cannot write " << out << "\n";
            return 2;
        }
        f << text;
    }
    std::cerr << tmpl << " seed " << seed << ": " << scene.rooms.size() << " rooms, "
              << scene.boxes.size() << " boxes, " << scene.nav_nodes.size() << " nav nodes\n";
    return 0;
}

std::vector<SuiteEpisode> resolve_suite(const std::string& suite, const std::string& scene,
                                        const std::string& out_dir, const Config& cfg) {
    std::vector<SuiteEpisode> episodes;
    if (suite == "bundled")
        episodes = bundled_suite(cfg);
    else if (suite == "adversarial")
        episodes = {{"adversarial", adversarial_episode(cfg)}};
    else if (suite == "door")
        episodes = door_fixture_suite(cfg);
    else if (suite == "clutter")
        episodes = clutter_fixture_suite(cfg);
    else if (!suite.empty())
        return load_suite_file(suite, cfg);
    else if (!scene.empty()) {
        // Single-scene smoke run: start at the first nav node, goal at the
        // last, target the nearest furniture class.
        SceneSpec sc = load_scene_file(scene);
        if (sc.nav_nodes.size() < 2)
            throw std::runtime_error("--scene runs need at least two nav nodes");
        SuiteEpisode ep;
        ep.scene_path = scene;
        ep.spec.scene_id = fs::path(scene).stem().string();
        ep.spec.start = {sc.nav_nodes.front().x, sc.nav_nodes.front().y, 0.0, 0.0};
        ep.spec.goal = sc.nav_nodes.back();
        int cls = kWall;
        double best = 1e18;
        for (const auto& b : sc.boxes) {
            if (b.class_id <= kStairs || b.class_id == kCeiling) continue;
            Vec2 c{(b.min.x + b.max.x) / 2, (b.min.y + b.max.y) / 2};
            double d = (c - ep.spec.goal).norm();
            if (d < best) best = d, cls = b.class_id;
        }
        ep.spec.goal_descriptor = class_feature(cls);
        ep.spec.success_radius = cfg.success_radius;
        ep.spec.max_steps = cfg.max_steps;
        episodes.push_back(std::move(ep));
        return episodes;
    } else {
        throw std::runtime_error("run needs --suite or --scene");
    }
    materialize_suite(episodes, (fs::path(out_dir) / "scenes").string());
    return episodes;
}

int cmd_run(const std::string& suite, const std::string& scene, const std::string& preset,
            uint64_t seed, int seeds_count, const std::string& out_dir, bool dump_maps,
            bool dump_panoramas) {
    Config cfg = load_config();
    fs::create_directories(out_dir);
    std::vector<SuiteEpisode> episodes;
    AblationFlags flags;
    try {
        episodes = resolve_suite(suite, scene, out_dir, cfg);
        flags = preset_flags(preset);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::vector<uint64_t> seeds;
    for (int i = 0; i < seeds_count; ++i) seeds.push_back(seed + i);

    Policy policy;  // field-similarity default
    EpisodeIO io;
    if (dump_maps || dump_panoramas) {
        io.dump_dir = (fs::path(out_dir) / "dumps").string();
        io.dump_maps = dump_maps;
        io.dump_panoramas = dump_panoramas;
    }
    SuiteResult result;
    try {
        result = run_suite(episodes, flags, seeds, policy, cfg,
                           io.dump_dir.empty() ? nullptr : &io);
    } catch (const CloudFormatError& e) {
        std::cerr << "corrupt cloud at byte " << e.offset << ": " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "episode error: " << e.what() << "\n";
        return 2;
    }

    {
        std::ofstream csv(fs::path(out_dir) / ("metrics_" + preset + ".csv"), std::ios::trunc);
        csv << suite_to_csv(result);
        std::ofstream json(fs::path(out_dir) / ("metrics_" + preset + ".json"), std::ios::trunc);
        json << suite_to_json(result, preset);
    }
    std::printf("%s: %zu episodes  NE %.3f  SR %.3f  OSR %.3f  SPL %.3f\n", preset.c_str(),
                result.rows.size(), result.mean_ne, result.mean_sr, result.mean_osr,
                result.mean_spl);
    return 0;
}

int cmd_field_inspect(const std::string& path) {
    FeatureCloud cloud;
    try {
        cloud = FeatureCloud::restore_file(path);
    } catch (const CloudFormatError& e) {
        std::cerr << "corrupt cloud at byte " << e.offset << ": " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << cloud.size() << " points\n";
    if (cloud.size() == 0) return 0;

    Vec3 lo = cloud.point(cloud.id_offset()).position, hi = lo;
    for (uint64_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.point(cloud.id_offset() + i).position;
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    std::printf("bounds [%.3f %.3f %.3f] .. [%.3f %.3f %.3f]\n", lo.x, lo.y, lo.z, hi.x, hi.y,
                hi.z);
    std::cout << cloud.voxels().size() << " occupied voxels (" << cloud.voxel_size()
              << " m)\n";
    std::map<std::size_t, std::size_t> hist;  // points-per-voxel -> voxel count
    for (const auto& [key, ids] : cloud.voxels()) hist[ids.size()]++;
    for (const auto& [occupancy, count] : hist)
        std::cout << "  " << occupancy << " pts: " << count << " voxels\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"panoptic-nav: box-world navigation workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("scene-gen", "generate a house layout scene file");
    std::string tmpl = "layout_A", gen_out;
    uint64_t gen_seed = 0;
    gen->add_option("--template", tmpl, "layout_A..layout_E")->capture_default_str();
    gen->add_option("--seed", gen_seed, "furniture jitter seed");
    gen->add_option("--out", gen_out, "output scene file (default: stdout)");

    auto* run = app.add_subcommand("run", "run an episode suite under a preset");
    std::string suite, scene, preset = "full", run_out = "out";
    uint64_t run_seed = 0;
    int seeds_count = 1, jobs = 1;
    bool dump_maps = false, dump_panoramas = false;
    run->add_option("--suite", suite,
                    "suite file, or a built-in: bundled, adversarial, door, clutter");
    run->add_option("--scene", scene, "single scene file (smoke run between its nav endpoints)");
    run->add_option("--preset", preset,
                    "no_fields, fields, fields_memory, no_semantic, no_occupancy, full")
        ->capture_default_str();
    run->add_option("--seed", run_seed, "first seed");
    run->add_option("--seeds", seeds_count, "number of consecutive seeds")->capture_default_str();
    run->add_option("--jobs", jobs, "max parallel episodes")->check(CLI::PositiveNumber);
    run->add_option("--out", run_out, "output directory")->capture_default_str();
    run->add_flag("--dump-maps", dump_maps, "write per-step map PGMs");
    run->add_flag("--dump-panoramas", dump_panoramas, "write per-step panorama CSVs");

    auto* inspect = app.add_subcommand("field-inspect", "summarize a persisted feature cloud");
    std::string cloud_path;
    inspect->add_option("cloud", cloud_path, "persisted cloud file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1
    }

    try {
        if (gen->parsed()) return cmd_scene_gen(tmpl, gen_seed, gen_out);
        if (run->parsed())
            return cmd_run(suite, scene, preset, run_seed, seeds_count, run_out, dump_maps,
                           dump_panoramas);
        if (inspect->parsed()) return cmd_field_inspect(cloud_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
