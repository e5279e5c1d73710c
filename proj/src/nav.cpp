#include "panonav/nav.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "panonav/io.hpp"
#include "panonav/render.hpp"

namespace panonav {

double path_length(const std::vector<Pose>& trajectory) {
    double len = 0;
    for (std::size_t i = 1; i < trajectory.size(); ++i)
        len += (trajectory[i].position2() - trajectory[i - 1].position2()).norm();
    return len;
}

Metrics compute_metrics(const std::vector<Pose>& trajectory, const Vec2& goal,
                        double success_radius, bool stopped, double shortest_path_len) {
    if (trajectory.empty()) throw std::runtime_error("compute_metrics: empty trajectory");
    Metrics m;
    m.ne = (trajectory.back().position2() - goal).norm();
    m.sr = (stopped && m.ne <= success_radius) ? 1 : 0;
    for (const auto& p : trajectory)
        if ((p.position2() - goal).norm() <= success_radius) {
            m.osr = 1;
            break;
        }
    double traversed = path_length(trajectory);
    if (shortest_path_len <= 0) {
        // Degenerate convention: spl collapses to sr.
        m.spl = m.sr;
    } else {
        m.spl = m.sr * shortest_path_len / std::max(shortest_path_len, traversed);
    }
    return m;
}

double nav_graph_shortest_path(const SceneSpec& scene, const Vec2& start, const Vec2& goal,
                               const Config& cfg) {
    const double direct_ok =
        scene.segment_free(start, goal, cfg.agent_radius) ? (goal - start).norm() : -1;
    const int n = static_cast<int>(scene.nav_nodes.size());
    if (n == 0) return direct_ok >= 0 ? direct_ok : (goal - start).norm();

    // Nodes 0..n-1, start = n, goal = n+1.
    std::vector<std::vector<std::pair<int, double>>> adj(n + 2);
    auto add_edge = [&](int a, int b, double w) {
        adj[a].push_back({b, w});
        adj[b].push_back({a, w});
    };
    for (const auto& e : scene.nav_edges)
        add_edge(e.a, e.b, (scene.nav_nodes[e.a] - scene.nav_nodes[e.b]).norm());
    for (int i = 0; i < n; ++i) {
        if (scene.segment_free(start, scene.nav_nodes[i], cfg.agent_radius))
            add_edge(n, i, (scene.nav_nodes[i] - start).norm());
        if (scene.segment_free(goal, scene.nav_nodes[i], cfg.agent_radius))
            add_edge(n + 1, i, (scene.nav_nodes[i] - goal).norm());
    }
    if (direct_ok >= 0) add_edge(n, n + 1, direct_ok);

    std::vector<double> dist(n + 2, std::numeric_limits<double>::infinity());
    dist[n] = 0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.push({0, n});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        for (auto [v, w] : adj[u])
            if (d + w < dist[v]) {
                dist[v] = d + w;
                pq.push({dist[v], v});
            }
    }
    double result = dist[n + 1];
    if (!std::isfinite(result)) return (goal - start).norm();
    return result;
}

namespace {

int waypoint_slot(const Waypoint& wp) {
    double deg = rad2deg(wp.angle);
    if (deg < 0) deg += 360.0;
    return static_cast<int>(std::floor((deg + 15.0) / 30.0)) % kPanoramaSlots;
}

Vec2 waypoint_world(const Pose& pose, const Waypoint& wp) {
    double a = pose.yaw + wp.angle;
    return pose.position2() + Vec2{std::cos(a), std::sin(a)} * wp.distance;
}

}  // namespace

PolicyDecision policy_field_similarity(const PolicyContext& ctx, const Config& cfg) {
    const Panorama& pano = ctx.panorama;
    const auto& goal_desc = ctx.spec.goal_descriptor;

    // View-level similarity per slot; peak region similarity for the stop
    // rule and the goal proxy.
    std::vector<double> sims(kPanoramaSlots, -1e9);
    double best_peak = -1e9;
    int best_peak_slot = -1;
    double best_peak_depth = cfg.fallback_depth;
    for (int i = 0; i < kPanoramaSlots; ++i) {
        if (pano.coverage[i] <= 0 || feat_is_zero(pano.slots[i])) continue;
        sims[i] = feat_dot(pano.slots[i], goal_desc);
        for (int b = 0; b < static_cast<int>(pano.regions[i].size()); ++b) {
            if (feat_is_zero(pano.regions[i][b])) continue;
            double s = feat_dot(pano.regions[i][b], goal_desc);
            if (s > best_peak) {
                best_peak = s;
                best_peak_slot = i;
                best_peak_depth = pano.region_depths[i][b];
            }
        }
    }

    bool any_slot = false;
    for (double s : sims)
        if (s > -1e9) any_slot = true;

    PolicyDecision decision;
    if (any_slot && best_peak_slot >= 0 && best_peak > 0.5) {
        // Projected target of the best-similarity bearing.
        double bearing = ctx.pose.yaw + best_peak_slot * kPi / 6;
        Vec2 proxy = ctx.pose.position2() + Vec2{std::cos(bearing), std::sin(bearing)} * best_peak_depth;
        double est = (proxy - ctx.pose.position2()).norm();
        // The projected target sits on the object's visible surface; the
        // goal point is its center, so stop with margin to spare.
        if ((est + cfg.stop_margin <= ctx.spec.success_radius && best_peak > cfg.stop_similarity) ||
            est < cfg.stop_distance) {
            decision.stop = true;
            return decision;
        }
    }
    if (ctx.waypoints.empty()) {
        decision.stop = true;
        return decision;
    }

    double best_score = -1e18;
    int best_idx = -1;
    if (any_slot && best_peak_slot >= 0 && best_peak > cfg.goal_visible_similarity) {
        // Goal-seeking: steer toward the projected bearing of the most
        // goal-like rendered region.
        double bearing = ctx.pose.yaw + best_peak_slot * kPi / 6;
        Vec2 proxy =
            ctx.pose.position2() + Vec2{std::cos(bearing), std::sin(bearing)} * best_peak_depth;

        double dmax = 1e-9;
        std::vector<double> dists(ctx.waypoints.size());
        for (std::size_t w = 0; w < ctx.waypoints.size(); ++w) {
            dists[w] = (proxy - waypoint_world(ctx.pose, ctx.waypoints[w])).norm();
            dmax = std::max(dmax, dists[w]);
        }
        for (std::size_t w = 0; w < ctx.waypoints.size(); ++w) {
            int slot = waypoint_slot(ctx.waypoints[w]);
            double sim = sims[slot] > -1e9 ? sims[slot] : 0.0;
            double score = cfg.policy_alpha * sim + (1 - cfg.policy_alpha) * (1 - dists[w] / dmax);
            if (score > best_score ||
                (score == best_score && best_idx >= 0 &&
                 ctx.waypoints[w].sector < ctx.waypoints[best_idx].sector)) {
                best_score = score;
                best_idx = static_cast<int>(w);
            }
        }
    } else {
        // Exploration: head for the farthest frontier, biased forward so the
        // agent does not oscillate between opposite frontiers, and away from
        // positions already visited this episode.
        for (std::size_t w = 0; w < ctx.waypoints.size(); ++w) {
            const Waypoint& wp = ctx.waypoints[w];
            double score = wp.distance + cfg.explore_forward_bias * std::cos(wp.angle);
            if (ctx.visited) {
                Vec2 world = waypoint_world(ctx.pose, wp);
                for (const Vec2& v : *ctx.visited)
                    if ((world - v).norm() < cfg.explore_revisit_radius) {
                        score -= cfg.explore_revisit_penalty;
                        break;
                    }
            }
            if (score > best_score ||
                (score == best_score && best_idx >= 0 &&
                 ctx.waypoints[w].sector < ctx.waypoints[best_idx].sector)) {
                best_score = score;
                best_idx = static_cast<int>(w);
            }
        }
    }
    decision.waypoint_index = best_idx;
    return decision;
}

namespace {

PolicyDecision policy_greedy(const PolicyContext& ctx, const Config& cfg, bool forward_only) {
    PolicyDecision d;
    double goal_dist = (ctx.spec.goal - ctx.pose.position2()).norm();
    if (goal_dist <= ctx.spec.success_radius) {
        d.stop = true;
        return d;
    }
    double best = std::numeric_limits<double>::infinity();
    const double half_fov = deg2rad(cfg.cam_hfov) / 2;
    for (std::size_t w = 0; w < ctx.waypoints.size(); ++w) {
        if (forward_only && std::abs(normalize_yaw(ctx.waypoints[w].angle)) > half_fov) continue;
        double dist = (ctx.spec.goal - waypoint_world(ctx.pose, ctx.waypoints[w])).norm();
        if (dist < best) {
            best = dist;
            d.waypoint_index = static_cast<int>(w);
        }
    }
    if (d.waypoint_index < 0 && goal_dist <= ctx.spec.success_radius) d.stop = true;
    return d;
}

PolicyDecision run_policy(const Policy& policy, const PolicyContext& ctx, const Config& cfg) {
    switch (policy.kind) {
        case PolicyKind::kGreedyGoal:
            return policy_greedy(ctx, cfg, false);
        case PolicyKind::kGreedyGoalForward:
            return policy_greedy(ctx, cfg, true);
        case PolicyKind::kFieldSimilarity:
            return policy_field_similarity(ctx, cfg);
        case PolicyKind::kExternal:
            if (!policy.external) throw std::runtime_error("external policy not set");
            return policy.external(ctx);
    }
    throw std::runtime_error("unknown policy kind");
}

struct Frame {
    DepthImage depth;
    SemanticImage sem;
    FeatureImage feat;
};

Frame observe(const SceneSpec& scene, const Pose& pose, const CameraIntrinsics& cam,
              const Config& cfg) {
    Frame f;
    f.depth = raycast_depth(scene, pose, cam, cfg);
    f.sem = raycast_semantic(scene, pose, cam, cfg);
    f.feat.width = cam.width;
    f.feat.height = cam.height;
    f.feat.data.resize(f.sem.data.size());
    for (std::size_t i = 0; i < f.sem.data.size(); ++i)
        f.feat.data[i] = f.sem.data[i] == 0 ? feat_zero() : class_feature(f.sem.data[i]);
    return f;
}

}  // namespace

bool trajectory_collision_free(const SceneSpec& scene, const std::vector<Pose>& traj,
                               const Config& cfg) {
    for (const auto& p : traj)
        if (!scene.point_in_free_space(p.position2(), cfg.agent_radius - 1e-9,
                                       cfg.obstacle_height_min, cfg.obstacle_height_max))
            return false;
    return true;
}

EpisodeResult run_episode(const SceneSpec& scene, const EpisodeSpec& spec, const Policy& policy,
                          const Config& cfg, uint64_t seed, FeatureCloud* persistent_cloud,
                          const EpisodeIO* io) {
    EpisodeResult result;
    CameraIntrinsics cam{cfg.cam_width, cfg.cam_height, cfg.cam_hfov, cfg.cam_vfov, cfg.max_range};

    // Seeded start jitter; kept only if the jittered pose is free.
    Pose pose = spec.start;
    {
        std::mt19937_64 rng(seed);
        auto uniform = [&](double lo, double hi) {
            double u = (rng() >> 11) * (1.0 / 9007199254740992.0);
            return lo + u * (hi - lo);
        };
        Pose jittered = pose;
        jittered.x += uniform(-0.1, 0.1);
        jittered.y += uniform(-0.1, 0.1);
        jittered.yaw = normalize_yaw(jittered.yaw + uniform(-deg2rad(5), deg2rad(5)));
        if (scene.point_in_free_space(jittered.position2(), cfg.agent_radius)) pose = jittered;
    }

    GlobalMaps maps(pose, scene.floor_height, cfg);
    FeatureCloud local_cloud(cfg);
    FeatureCloud& cloud = persistent_cloud ? *persistent_cloud : local_cloud;
    const bool want_fields = spec.flags.use_fields;

    result.trajectory.push_back(pose);
    result.shortest_path_len =
        nav_graph_shortest_path(scene, pose.position2(), spec.goal, cfg);

    uint32_t frame_step = 0;
    auto ingest = [&](const Pose& at) -> Frame {
        Frame f = observe(scene, at, cam, cfg);
        ground_project(maps, f.depth, f.sem, at, cam, cfg);
        if (want_fields) insert_view(cloud, f.feat, f.depth, at, cam, frame_step, cfg);
        ++frame_step;
        return f;
    };

    // Step 1: bootstrap 360-degree rotation (12 frames) seeding the maps
    // and the feature fields.
    for (int i = 0; i < kPanoramaSlots; ++i) {
        Pose p = pose;
        p.yaw = normalize_yaw(pose.yaw + i * kPi / 6);
        ingest(p);
    }

    std::vector<Vec2> visited;
    RefinerConfig refiner;  // holefill default
    TraversablePredictor predictor;
    predictor.use_semantic = spec.flags.use_semantic_map;
    predictor.use_occupancy = spec.flags.use_occupancy_map;

    for (int step = 1; step <= spec.max_steps; ++step) {
        Frame frame = ingest(pose);

        EgoMaps ego = crop_ego(maps, pose, cfg);
        if (!spec.flags.use_semantic_map)
            for (auto& d : ego.sem_dist) d.fill(0.f);
        if (!spec.flags.use_occupancy_map)
            for (auto& d : ego.occ_dist) d = {0.f, 1.f, 0.f};
        EgoMaps refined = refine(ego, refiner);
        TraversableMap trav = predict_traversable(refined, predictor, cfg);
        std::vector<Waypoint> wps =
            extract_waypoints(trav, refined, cfg.waypoint_top_k, cfg.waypoint_min_dist, cfg);

        Panorama pano;
        if (want_fields) {
            pano = render_panorama(cloud, pose, cam, frame.feat, cfg, {}, &frame.depth);
        } else {
            // Monocular ablation: forward slot only, everything else zero.
            FeatureCloud empty(cfg);
            pano = render_panorama(empty, pose, cam, frame.feat, cfg, {}, &frame.depth);
            for (int s = 1; s < kPanoramaSlots; ++s) {
                pano.slots[s] = feat_zero();
                pano.coverage[s] = 0;
            }
        }

        StepLog log;
        log.pose = pose;
        log.waypoints_considered = static_cast<int>(wps.size());
        double cov = 0;
        for (double c : pano.coverage) cov += c;
        log.panorama_coverage = cov / kPanoramaSlots;

        if (io && !io->dump_dir.empty() && io->dump_maps) {
            std::string base = io->dump_dir + "/step_" + std::to_string(step);
            write_ego_pgms(refined, base + "_occupancy.pgm", base + "_semantic.pgm");
            write_traversable_pgm(trav, base + "_traversable.pgm");
        }
        if (io && !io->dump_dir.empty() && io->dump_panoramas) {
            std::ofstream out(io->dump_dir + "/step_" + std::to_string(step) + "_panorama.csv");
            out << panorama_to_csv(pano);
        }

        if (wps.empty()) {
            // Recovery: rotate in place to re-feed the mapper.
            pose.yaw = normalize_yaw(pose.yaw + kPi / 3);
            log.recovery_rotation = true;
            result.steps.push_back(log);
            result.trajectory.push_back(pose);
            continue;
        }

        visited.push_back(pose.position2());
        PolicyContext ctx{spec, pose, wps, pano, &visited};
        PolicyDecision decision = run_policy(policy, ctx, cfg);
        if (decision.stop) {
            log.stop = true;
            result.steps.push_back(log);
            result.stopped = true;
            break;
        }
        if (decision.waypoint_index < 0 ||
            decision.waypoint_index >= static_cast<int>(wps.size())) {
            pose.yaw = normalize_yaw(pose.yaw + kPi / 3);
            log.recovery_rotation = true;
            result.steps.push_back(log);
            result.trajectory.push_back(pose);
            continue;
        }

        const Waypoint& wp = wps[decision.waypoint_index];
        log.chosen_sector = wp.sector;
        log.chosen_score = wp.score;
        result.steps.push_back(log);

        // Straight-line motion in sub-steps with cylinder collision checks;
        // a blocked sub-step halts motion at the last free position.
        double heading = normalize_yaw(pose.yaw + wp.angle);
        Vec2 dir{std::cos(heading), std::sin(heading)};
        pose.yaw = heading;
        double remaining = wp.distance;
        while (remaining > 1e-9) {
            double d = std::min(cfg.sub_step, remaining);
            Vec2 next = pose.position2() + dir * d;
            if (!scene.point_in_free_space(next, cfg.agent_radius, cfg.obstacle_height_min,
                                           cfg.obstacle_height_max) ||
                !scene.segment_free(pose.position2(), next, cfg.agent_radius,
                                    cfg.obstacle_height_min, cfg.obstacle_height_max))
                break;
            pose.x = next.x;
            pose.y = next.y;
            remaining -= d;
            result.trajectory.push_back(pose);
        }
        if (remaining > wp.distance - 1e-9) {
            // Motion fully blocked on the first sub-step: rotate so the next
            // observation (and waypoint set) differs instead of re-picking
            // the same blocked waypoint forever.
            pose.yaw = normalize_yaw(pose.yaw + kPi / 3);
            result.steps.back().recovery_rotation = true;
        }
        if (result.trajectory.back().x != pose.x || result.trajectory.back().y != pose.y ||
            result.trajectory.back().yaw != pose.yaw)
            result.trajectory.push_back(pose);
    }

    result.traversed_length = path_length(result.trajectory);
    result.metrics = compute_metrics(result.trajectory, spec.goal, spec.success_radius,
                                     result.stopped, result.shortest_path_len);
    return result;
}

AblationFlags preset_flags(const std::string& preset) {
    if (preset == "no_fields") return {false, false, true, true};
    if (preset == "fields") return {true, false, true, true};
    if (preset == "fields_memory") return {true, true, true, true};
    if (preset == "no_semantic") return {true, false, false, true};
    if (preset == "no_occupancy") return {true, false, true, false};
    if (preset == "full") return {true, false, true, true};
    throw std::invalid_argument("unknown preset: " + preset);
}

SuiteResult run_suite(const std::vector<SuiteEpisode>& episodes, const AblationFlags& flags,
                      const std::vector<uint64_t>& seeds, const Policy& policy,
                      const Config& cfg, const EpisodeIO* io) {
    SuiteResult result;
    std::map<std::string, SceneSpec> scene_cache;
    auto get_scene = [&](const std::string& path) -> const SceneSpec& {
        auto it = scene_cache.find(path);
        if (it == scene_cache.end())
            it = scene_cache.emplace(path, load_scene_file(path)).first;
        return it->second;
    };

    // Scene groups in declared order (memory preset shares fields within a
    // group; maps are never preserved).
    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == episodes[i].scene_path; });
        if (it == groups.end()) groups.push_back({episodes[i].scene_path, {i}});
        else it->second.push_back(i);
    }

    for (uint64_t seed : seeds) {
        for (const auto& [scene_path, idxs] : groups) {
            const SceneSpec& scene = get_scene(scene_path);
            FeatureCloud memory_cloud(cfg);
            for (std::size_t i : idxs) {
                EpisodeSpec spec = episodes[i].spec;
                spec.flags = flags;
                EpisodeIO ep_io;
                const EpisodeIO* ep_io_ptr = nullptr;
                if (io && !io->dump_dir.empty()) {
                    ep_io = *io;
                    ep_io.dump_dir = io->dump_dir + "/" + spec.scene_id + "_seed" +
                                     std::to_string(seed);
                    ep_io_ptr = &ep_io;
                }
                EpisodeResult er;
                if (flags.use_memory) {
                    er = run_episode(scene, spec, policy, cfg, seed, &memory_cloud, ep_io_ptr);
                    // Round-trip through the persistence format between
                    // episodes, as the lifelong setting prescribes.
                    std::stringstream buf;
                    memory_cloud.persist(buf);
                    memory_cloud = FeatureCloud::restore(buf, cfg);
                } else {
                    er = run_episode(scene, spec, policy, cfg, seed, nullptr, ep_io_ptr);
                }
                SuiteRow row;
                row.scene_id = spec.scene_id;
                row.seed = seed;
                row.metrics = er.metrics;
                row.traversed_length = er.traversed_length;
                row.steps = static_cast<int>(er.steps.size());
                result.rows.push_back(row);
            }
        }
    }

    for (const auto& r : result.rows) {
        result.mean_ne += r.metrics.ne;
        result.mean_sr += r.metrics.sr;
        result.mean_osr += r.metrics.osr;
        result.mean_spl += r.metrics.spl;
    }
    if (!result.rows.empty()) {
        double n = static_cast<double>(result.rows.size());
        result.mean_ne /= n;
        result.mean_sr /= n;
        result.mean_osr /= n;
        result.mean_spl /= n;
    }
    return result;
}

std::vector<SuiteEpisode> load_suite_file(const std::string& path, const Config& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open suite file: " + path);
    std::filesystem::path dir = std::filesystem::path(path).parent_path();
    std::vector<SuiteEpisode> episodes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag != "episode")
            throw std::runtime_error("suite line " + std::to_string(line_no) +
                                     ": unknown directive '" + tag + "'");
        std::string scene_path;
        double sx, sy, syaw_deg, gx, gy;
        int goal_class;
        if (!(ls >> scene_path >> sx >> sy >> syaw_deg >> gx >> gy >> goal_class))
            throw std::runtime_error("suite line " + std::to_string(line_no) +
                                     ": episode needs scene, start x/y/yaw, goal x/y, class");
        SuiteEpisode ep;
        ep.scene_path = (dir / scene_path).string();
        ep.spec.scene_id = std::filesystem::path(scene_path).stem().string();
        ep.spec.start = {sx, sy, 0.0, normalize_yaw(deg2rad(syaw_deg))};
        ep.spec.goal = {gx, gy};
        ep.spec.goal_descriptor = class_feature(goal_class);
        ep.spec.success_radius = cfg.success_radius;
        ep.spec.max_steps = cfg.max_steps;
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

std::string suite_to_csv(const SuiteResult& result) {
    std::ostringstream out;
    out << "scene,seed,ne,sr,osr,spl,length,steps\n";
    for (const auto& r : result.rows)
        out << r.scene_id << ',' << r.seed << ',' << r.metrics.ne << ',' << r.metrics.sr << ','
            << r.metrics.osr << ',' << r.metrics.spl << ',' << r.traversed_length << ','
            << r.steps << '\n';
    return out.str();
}

std::string suite_to_json(const SuiteResult& result, const std::string& preset) {
    nlohmann::json j;
    j["preset"] = preset;
    j["episodes"] = result.rows.size();
    j["mean"] = {{"ne", result.mean_ne},
                 {"sr", result.mean_sr},
                 {"osr", result.mean_osr},
                 {"spl", result.mean_spl}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : result.rows)
        rows.push_back({{"scene", r.scene_id},
                        {"seed", r.seed},
                        {"ne", r.metrics.ne},
                        {"sr", r.metrics.sr},
                        {"osr", r.metrics.osr},
                        {"spl", r.metrics.spl},
                        {"length", r.traversed_length},
                        {"steps", r.steps}});
    j["rows"] = rows;
    return j.dump(2);
}

}  // namespace panonav
