#include "panonav/scene_gen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include "panonav/render.hpp"

namespace panonav {

namespace {

constexpr double kWallThickness = 0.10;
constexpr double kWallHeight = 2.5;
constexpr double kDoorWidth = 0.9;
constexpr double kDoorHeight = 1.2;  // rays above the door see the next room

struct Builder {
    SceneSpec scene;

    void shell(double w, double h) {
        scene.bounds = {{0, 0, -0.2}, {w, h, 2.7}, 0, false};
        scene.floor_height = 0.0;
        // Floor and ceiling slabs.
        scene.boxes.push_back({{0, 0, -0.1}, {w, h, 0.0}, kFloor, false});
        scene.boxes.push_back({{0, 0, kWallHeight}, {w, h, kWallHeight + 0.1}, kCeiling, false});
        // Outer walls.
        wall({0, 0}, {w, kWallThickness});
        wall({0, h - kWallThickness}, {w, h});
        wall({0, 0}, {kWallThickness, h});
        wall({w - kWallThickness, 0}, {w, h});
    }
    void wall(Vec2 lo, Vec2 hi) {
        scene.boxes.push_back({{lo.x, lo.y, 0}, {hi.x, hi.y, kWallHeight}, kWall, false});
    }
    // Vertical internal wall at x in [x0, x0+thickness], y span [y0, y1],
    // with door gaps centered at the given y positions.
    void wall_x(double x0, double y0, double y1, const std::vector<double>& doors) {
        double y = y0;
        for (double d : doors) {
            double glo = d - kDoorWidth / 2, ghi = d + kDoorWidth / 2;
            if (glo > y) wall({x0, y}, {x0 + kWallThickness, glo});
            scene.boxes.push_back(
                {{x0, glo, 0}, {x0 + kWallThickness, ghi, kDoorHeight}, kDoor, true});
            y = ghi;
        }
        if (y < y1) wall({x0, y}, {x0 + kWallThickness, y1});
    }
    void wall_y(double y0, double x0, double x1, const std::vector<double>& doors) {
        double x = x0;
        for (double d : doors) {
            double glo = d - kDoorWidth / 2, ghi = d + kDoorWidth / 2;
            if (glo > x) wall({x, y0}, {glo, y0 + kWallThickness});
            scene.boxes.push_back(
                {{glo, y0, 0}, {ghi, y0 + kWallThickness, kDoorHeight}, kDoor, true});
            x = ghi;
        }
        if (x < x1) wall({x, y0}, {x1, y0 + kWallThickness});
    }
    void furniture(Vec2 lo, Vec2 size, double height, int cls) {
        scene.boxes.push_back(
            {{lo.x, lo.y, 0}, {lo.x + size.x, lo.y + size.y, height}, cls, false});
    }
    int node(double x, double y) {
        scene.nav_nodes.push_back({x, y});
        return static_cast<int>(scene.nav_nodes.size()) - 1;
    }
    void edge(int a, int b) { scene.nav_edges.push_back({a, b}); }
};

struct RoomRect {
    std::string type;  // living_room, kitchen, bathroom, bedroom
    Vec2 lo, hi;
};

double jitter(std::mt19937_64& rng, double amp) {
    double u = (rng() >> 11) * (1.0 / 9007199254740992.0);
    return (2 * u - 1) * amp;
}

// Furniture goes to the room's corner zones: the nav graph runs along a
// crosshair through the doors (x = 3 or 9, y = 2.5 or 7.5), and every
// footprint is clamped clear of it regardless of jitter.
void furnish(Builder& b, const RoomRect& room, std::mt19937_64& rng) {
    Vec2 lo = room.lo, hi = room.hi;
    double clear_x = lo.x < 6.0 ? 3.0 : 9.0;
    double clear_y = lo.y < 5.0 ? 2.5 : 7.5;
    constexpr double kCorridor = 0.8;  // half-width kept free around the crosshair

    // corner: 0 = low-x/low-y, 1 = high-x/low-y, 2 = low-x/high-y, 3 = high-x/high-y
    auto place = [&](int corner, double w, double h, double height, int cls) {
        bool right = corner & 1, top = corner & 2;
        double x = right ? hi.x - 0.3 - w : lo.x + 0.3;
        double y = top ? hi.y - 0.3 - h : lo.y + 0.3;
        x += jitter(rng, 0.1);
        y += jitter(rng, 0.1);
        // Clamp the footprint into its corner zone.
        double xlo = right ? clear_x + kCorridor : lo.x + 0.2;
        double xhi = right ? hi.x - 0.2 - w : clear_x - kCorridor - w;
        double ylo = top ? clear_y + kCorridor : lo.y + 0.2;
        double yhi = top ? hi.y - 0.2 - h : clear_y - kCorridor - h;
        x = std::min(std::max(x, xlo), xhi);
        y = std::min(std::max(y, ylo), yhi);
        b.furniture({x, y}, {w, h}, height, cls);
    };

    if (room.type == "living_room") {
        place(0, 1.6, 0.8, 0.8, kSofa);
        place(1, 0.9, 0.9, 0.5, kTable);
        place(2, 1.2, 0.35, 1.0, kTv);
    } else if (room.type == "kitchen") {
        place(0, 1.8, 0.6, 0.9, kCounter);
        place(3, 0.7, 0.7, 1.8, kFridge);
        place(1, 0.6, 0.6, 0.9, kStove);
    } else if (room.type == "bathroom") {
        place(0, 1.5, 0.7, 0.6, kBathtub);
        place(1, 0.5, 0.4, 0.9, kSink);
        place(3, 0.4, 0.6, 0.8, kToilet);
    } else if (room.type == "bedroom") {
        place(0, 1.7, 1.3, 0.6, kBed);
        place(3, 1.2, 0.6, 1.9, kWardrobe);
        place(1, 0.6, 1.1, 0.8, kDesk);
    } else {
        throw std::invalid_argument("unknown room type: " + room.type);
    }
}

// Room-to-quadrant assignment per template.
const std::vector<std::string>& template_rooms(const std::string& tmpl) {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> kTemplates = {
        {"layout_A", {"living_room", "kitchen", "bathroom", "bedroom"}},
        {"layout_B", {"kitchen", "living_room", "bedroom", "bathroom"}},
        {"layout_C", {"bedroom", "bathroom", "living_room", "kitchen"}},
        {"layout_D", {"bathroom", "bedroom", "kitchen", "living_room"}},
        {"layout_E", {"living_room", "bedroom", "kitchen", "bathroom"}},
    };
    for (const auto& [name, rooms] : kTemplates)
        if (name == tmpl) return rooms;
    throw std::invalid_argument("unknown layout template: " + tmpl);
}

}  // namespace

std::vector<std::string> layout_names() {
    return {"layout_A", "layout_B", "layout_C", "layout_D", "layout_E"};
}

SceneSpec generate_layout(const std::string& tmpl, uint64_t seed) {
    const auto& rooms = template_rooms(tmpl);
    std::mt19937_64 rng(seed * 1000003 + std::hash<std::string>{}(tmpl));

    const double W = 12.0, H = 10.0;
    const double mx = 6.0, my = 5.0;  // internal wall positions
    Builder b;
    b.shell(W, H);
    // Internal walls with two doors each.
    b.wall_x(mx - kWallThickness / 2, kWallThickness, H - kWallThickness, {2.5, 7.5});
    b.wall_y(my - kWallThickness / 2, kWallThickness, mx - kWallThickness / 2, {3.0});
    b.wall_y(my - kWallThickness / 2, mx + kWallThickness / 2, W - kWallThickness, {9.0});

    // Quadrants: 0 lower-left, 1 lower-right, 2 upper-left, 3 upper-right.
    std::vector<RoomRect> rects = {
        {rooms[0], {kWallThickness, kWallThickness}, {mx, my}},
        {rooms[1], {mx, kWallThickness}, {W - kWallThickness, my}},
        {rooms[2], {kWallThickness, my}, {mx, H - kWallThickness}},
        {rooms[3], {mx, H - kWallThickness > my ? my : my}, {W - kWallThickness, H - kWallThickness}},
    };
    rects[3].lo = {mx, my};
    for (const auto& r : rects) {
        b.scene.rooms.push_back({r.type, r.lo, r.hi});
        furnish(b, r, rng);
    }

    // Nav graph: room centers, quarter points, and door gaps.
    int c0 = b.node(3.0, 2.5), c1 = b.node(9.0, 2.5);
    int c2 = b.node(3.0, 7.5), c3 = b.node(9.0, 7.5);
    int d01 = b.node(6.0, 2.5), d23 = b.node(6.0, 7.5);
    int d02 = b.node(3.0, 5.0), d13 = b.node(9.0, 5.0);
    b.edge(c0, d01); b.edge(d01, c1);
    b.edge(c2, d23); b.edge(d23, c3);
    b.edge(c0, d02); b.edge(d02, c2);
    b.edge(c1, d13); b.edge(d13, c3);
    int m0 = b.node(4.5, 2.5), m1 = b.node(7.5, 2.5);
    int m2 = b.node(4.5, 7.5), m3 = b.node(7.5, 7.5);
    b.edge(c0, m0); b.edge(m0, d01); b.edge(d01, m1); b.edge(m1, c1);
    b.edge(c2, m2); b.edge(m2, d23); b.edge(d23, m3); b.edge(m3, c3);

    return load_scene(scene_to_text(b.scene));  // validate via the parser
}

SceneSpec adversarial_fixture() {
    Builder b;
    const double W = 24.0, H = 10.0;
    b.shell(W, H);
    // A narrow corridor (x in [3, 7], 1.3 m wide) connects a small room on
    // the -x side, which holds the target bed, to a large open hall on the
    // +x side.  The agent starts in the hall just past the corridor mouth,
    // facing away from it: the bed is straight behind, still within camera
    // range down the corridor, and everything ahead is fresh open space.
    b.wall({3.0, kWallThickness}, {7.0, 1.35});
    b.wall({3.0, 2.65}, {7.0, H - kWallThickness});
    b.furniture({0.3, 1.0}, {1.2, 2.0}, 1.2, kBed);

    b.node(2.0, 2.0);
    b.node(4.0, 2.0);
    b.node(6.5, 2.0);
    b.node(9.5, 2.0);
    b.node(13.0, 3.5);
    b.node(17.0, 5.0);
    b.node(21.0, 5.0);
    b.edge(0, 1); b.edge(1, 2); b.edge(2, 3); b.edge(3, 4); b.edge(4, 5);
    b.edge(5, 6);
    return load_scene(scene_to_text(b.scene));
}

EpisodeSpec adversarial_episode(const Config& cfg) {
    EpisodeSpec spec;
    spec.scene_id = "adversarial";
    spec.start = {8.5, 2.0, 0.0, 0.0};  // in the hall, facing away from the bed
    spec.goal = {1.2, 2.0};
    spec.goal_descriptor = class_feature(kBed);
    spec.success_radius = cfg.success_radius;
    // Tight budget: enough to turn around and walk the corridor back to the
    // bed, not enough to first explore the hall and then recover.
    spec.max_steps = 10;
    return spec;
}

namespace {

SceneSpec door_fixture(uint64_t variant) {
    Builder b;
    const double W = 11.0, H = 5.0;
    b.shell(W, H);
    // Two rooms split by a wall with a single door; crates pinch the
    // approach so the doorway is the only wide passage.
    double door_y = 1.6 + 0.6 * (variant % 3);
    b.wall_x(5.5 - kWallThickness / 2, kWallThickness, H - kWallThickness, {door_y});
    b.furniture({4.0, door_y + 1.0}, {1.0, 1.0}, 1.0, kCrate);
    b.furniture({4.0, std::max(0.15, door_y - 2.0)}, {1.0, 1.0}, 1.0, kCrate);
    // Tall wardrobe opposite the door, visible over the half-height door.
    b.furniture({9.6, door_y - 0.8}, {1.0, 1.6}, 1.9, kWardrobe);

    b.node(2.0, 2.5);
    b.node(4.5, door_y);
    b.node(5.5, door_y);
    b.node(7.0, door_y);
    b.node(8.8, door_y);
    b.edge(0, 1); b.edge(1, 2); b.edge(2, 3); b.edge(3, 4);
    return load_scene(scene_to_text(b.scene));
}

SceneSpec clutter_fixture(uint64_t variant) {
    Builder b;
    const double W = 12.0, H = 9.0;
    b.shell(W, H);
    std::mt19937_64 rng(variant * 7919 + 13);
    // Crate field between the start area and the goal bed.
    for (int i = 0; i < 9; ++i) {
        double x = 3.0 + (i % 3) * 2.6 + jitter(rng, 0.5);
        double y = 1.5 + (i / 3) * 2.6 + jitter(rng, 0.5);
        b.furniture({x, y}, {0.8, 0.8}, 1.1, kCrate);
    }
    b.furniture({10.5, 3.6}, {1.0, 1.8}, 0.8, kBed);

    b.node(1.5, 4.5);
    b.node(1.5, 1.0);
    b.node(1.5, 8.0);
    b.node(6.0, 0.7);
    b.node(6.0, 8.3);
    b.node(9.8, 1.0);
    b.node(9.8, 8.0);
    b.node(9.8, 4.5);
    b.edge(0, 1); b.edge(0, 2); b.edge(1, 3); b.edge(2, 4);
    b.edge(3, 5); b.edge(4, 6); b.edge(5, 7); b.edge(6, 7);
    return load_scene(scene_to_text(b.scene));
}

}  // namespace

std::vector<SuiteEpisode> door_fixture_suite(const Config& cfg) {
    std::vector<SuiteEpisode> suite;
    for (uint64_t v = 0; v < 3; ++v) {
        SceneSpec scene = door_fixture(v);
        double door_y = 1.6 + 0.6 * (v % 3);
        SuiteEpisode ep;
        ep.scene_path = "door_" + std::to_string(v);
        ep.spec.scene_id = ep.scene_path;
        ep.spec.start = {2.0, 2.5, 0.0, 0.0};
        ep.spec.goal = {10.0, door_y};
        ep.spec.goal_descriptor = class_feature(kWardrobe);
        ep.spec.success_radius = cfg.success_radius;
        ep.spec.max_steps = cfg.max_steps;
        suite.push_back(std::move(ep));
    }
    return suite;
}

std::vector<SuiteEpisode> clutter_fixture_suite(const Config& cfg) {
    std::vector<SuiteEpisode> suite;
    for (uint64_t v = 0; v < 3; ++v) {
        SuiteEpisode ep;
        ep.scene_path = "clutter_" + std::to_string(v);
        ep.spec.scene_id = ep.scene_path;
        ep.spec.start = {1.5, 4.5, 0.0, 0.0};
        ep.spec.goal = {11.0, 4.5};
        ep.spec.goal_descriptor = class_feature(kBed);
        ep.spec.success_radius = cfg.success_radius;
        ep.spec.max_steps = cfg.max_steps;
        suite.push_back(std::move(ep));
    }
    return suite;
}

// In-memory fixture scenes are addressed by pseudo-paths; this resolves
// them for suite runners that work on SuiteEpisode lists directly.
SceneSpec fixture_scene(const std::string& pseudo_path) {
    if (pseudo_path.rfind("door_", 0) == 0)
        return door_fixture(std::stoull(pseudo_path.substr(5)));
    if (pseudo_path.rfind("clutter_", 0) == 0)
        return clutter_fixture(std::stoull(pseudo_path.substr(8)));
    if (pseudo_path == "adversarial") return adversarial_fixture();
    if (pseudo_path.rfind("layout_", 0) == 0) return generate_layout(pseudo_path, 0);
    throw std::invalid_argument("unknown fixture scene: " + pseudo_path);
}

void materialize_suite(std::vector<SuiteEpisode>& suite, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::map<std::string, std::string> written;
    for (auto& ep : suite) {
        auto it = written.find(ep.scene_path);
        if (it == written.end()) {
            std::filesystem::path path = std::filesystem::path(dir) / (ep.scene_path + ".scene");
            std::ofstream out(path);
            out << scene_to_text(fixture_scene(ep.scene_path));
            it = written.emplace(ep.scene_path, path.string()).first;
        }
        ep.scene_path = it->second;
    }
}

std::vector<SuiteEpisode> bundled_suite(const Config& cfg) {
    // One episode per room per layout. The goal is a furniture object in the
    // room; the start faces directly away from it just outside the success
    // radius, so a forward-facing monocular agent begins with no view of the
    // target while the panorama covers it from the bootstrap rotation.
    struct Room {
        Vec2 center, corner, lo, hi;
    };
    static const std::vector<Room> kRooms = {
        {{3, 2.5}, {0, 0}, {0, 0}, {6, 5}},
        {{9, 2.5}, {12, 0}, {6, 0}, {12, 5}},
        {{3, 7.5}, {0, 10}, {0, 5}, {6, 10}},
        {{9, 7.5}, {12, 10}, {6, 5}, {12, 10}},
    };
    std::vector<SuiteEpisode> suite;
    for (const auto& name : layout_names()) {
        SceneSpec scene = generate_layout(name, 0);
        for (std::size_t i = 0; i < kRooms.size(); ++i) {
            const Room& room = kRooms[i];
            // Goal: the furniture object closest to the room's outer corner.
            Vec2 goal = room.center;
            int cls = kWall;
            double best = 1e18;
            for (const auto& box : scene.boxes) {
                if (box.class_id <= kStairs || box.class_id == kCeiling) continue;  // structural
                Vec2 center{(box.min.x + box.max.x) / 2, (box.min.y + box.max.y) / 2};
                if (center.x < room.lo.x || center.x > room.hi.x || center.y < room.lo.y ||
                    center.y > room.hi.y)
                    continue;
                double d = (center - room.corner).norm();
                if (d < best) {
                    best = d;
                    cls = box.class_id;
                    goal = center;
                }
            }
            if (cls == kWall) throw std::runtime_error("bundled suite: room has no furniture");

            // Start: along the goal-to-center direction, outside the success
            // radius, clamped into the room and nudged until collision-free.
            Vec2 u = room.center - goal;
            u = u * (1.0 / u.norm());
            Vec2 start = goal + u * (cfg.success_radius + 1.2);
            start.x = std::clamp(start.x, room.lo.x + 0.7, room.hi.x - 0.7);
            start.y = std::clamp(start.y, room.lo.y + 0.7, room.hi.y - 0.7);
            for (int tries = 0; tries < 8 && !scene.point_in_free_space(start, 0.3); ++tries)
                start = start + (room.center - start) * 0.25;
            if (!scene.point_in_free_space(start, 0.3))
                throw std::runtime_error("bundled suite: no free start in room");
            if ((start - goal).norm() <= cfg.success_radius + 0.2)
                throw std::runtime_error("bundled suite: start too close to goal");

            SuiteEpisode ep;
            ep.scene_path = name;
            ep.spec.scene_id = name + "_ep" + std::to_string(i);
            ep.spec.start = {start.x, start.y, 0.0, std::atan2(u.y, u.x)};
            ep.spec.goal = goal;
            ep.spec.goal_descriptor = class_feature(cls);
            ep.spec.success_radius = cfg.success_radius;
            ep.spec.max_steps = 20;
            suite.push_back(std::move(ep));
        }
    }
    return suite;
}

}  // namespace panonav
