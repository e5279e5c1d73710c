#include "panonav/scene.hpp"

#include <fstream>
#include <sstream>

namespace panonav {

bool SceneSpec::point_in_free_space(const Vec2& p, double clearance, double band_lo,
                                    double band_hi) const {
    if (p.x < bounds.min.x || p.x > bounds.max.x || p.y < bounds.min.y || p.y > bounds.max.y)
        return false;
    for (const auto& b : boxes) {
        if (!is_obstacle(b, band_lo, band_hi)) continue;
        if (b.dist2_to_footprint(p) < clearance * clearance) return false;
    }
    return true;
}

bool SceneSpec::segment_free(const Vec2& a, const Vec2& b, double clearance, double band_lo,
                             double band_hi) const {
    for (const auto& box : boxes) {
        if (!is_obstacle(box, band_lo, band_hi)) continue;
        if (segment_hits_footprint(a, b, box, clearance)) return false;
    }
    return true;
}

namespace {

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw SceneParseError("scene line " + std::to_string(line_no) + ": " + msg);
}

void validate(const SceneSpec& s) {
    auto inside = [&](const Box& b) {
        return b.min.x >= s.bounds.min.x - 1e-9 && b.min.y >= s.bounds.min.y - 1e-9 &&
               b.min.z >= s.bounds.min.z - 1e-9 && b.max.x <= s.bounds.max.x + 1e-9 &&
               b.max.y <= s.bounds.max.y + 1e-9 && b.max.z <= s.bounds.max.z + 1e-9;
    };
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
        const Box& b = s.boxes[i];
        if (b.min.x > b.max.x || b.min.y > b.max.y || b.min.z > b.max.z)
            throw SceneParseError("box " + std::to_string(i) + ": inverted extents");
        if (!inside(b))
            throw SceneParseError("box " + std::to_string(i) + ": outside scene bounds");
        if (b.class_id < 0 || b.class_id >= kNumClasses)
            throw SceneParseError("box " + std::to_string(i) + ": semantic id out of range");
    }
    constexpr double kClearance = 0.18;
    for (std::size_t i = 0; i < s.nav_nodes.size(); ++i) {
        if (!s.point_in_free_space(s.nav_nodes[i], kClearance))
            throw SceneParseError("nav node " + std::to_string(i) + " in occupied space");
    }
    for (std::size_t i = 0; i < s.nav_edges.size(); ++i) {
        const auto& e = s.nav_edges[i];
        int n = static_cast<int>(s.nav_nodes.size());
        if (e.a < 0 || e.a >= n || e.b < 0 || e.b >= n)
            throw SceneParseError("nav edge " + std::to_string(i) + ": node index out of range");
        Vec2 pa = s.nav_nodes[e.a], pb = s.nav_nodes[e.b];
        if ((pa - pb).norm() > 5.0)
            throw SceneParseError("nav edge " + std::to_string(i) + ": longer than 5 m");
        if (!s.segment_free(pa, pb))
            throw SceneParseError("nav edge " + std::to_string(i) + ": obstructed");
    }
}

}  // namespace

SceneSpec load_scene(const std::string& text) {
    SceneSpec s;
    bool have_bounds = false;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "bounds") {
            if (!(ls >> s.bounds.min.x >> s.bounds.min.y >> s.bounds.min.z >> s.bounds.max.x >>
                  s.bounds.max.y >> s.bounds.max.z))
                fail(line_no, "bounds needs 6 numbers");
            have_bounds = true;
        } else if (tag == "floor") {
            if (!(ls >> s.floor_height)) fail(line_no, "floor needs a height");
        } else if (tag == "box") {
            Box b;
            if (!(ls >> b.min.x >> b.min.y >> b.min.z >> b.max.x >> b.max.y >> b.max.z >>
                  b.class_id))
                fail(line_no, "box needs 6 extents and a class id");
            std::string flag;
            if (ls >> flag) {
                if (flag == "traversable") b.traversable = true;
                else fail(line_no, "unknown box flag '" + flag + "'");
            }
            s.boxes.push_back(b);
        } else if (tag == "room") {
            RoomLabel r;
            if (!(ls >> r.name >> r.min.x >> r.min.y >> r.max.x >> r.max.y))
                fail(line_no, "room needs a name and 4 extents");
            s.rooms.push_back(r);
        } else if (tag == "node") {
            Vec2 p;
            if (!(ls >> p.x >> p.y)) fail(line_no, "node needs 2 coordinates");
            s.nav_nodes.push_back(p);
        } else if (tag == "edge") {
            NavEdge e;
            if (!(ls >> e.a >> e.b)) fail(line_no, "edge needs 2 node indices");
            s.nav_edges.push_back(e);
        } else {
            fail(line_no, "unknown directive '" + tag + "'");
        }
    }
    if (!have_bounds) throw SceneParseError("scene has no bounds directive");
    validate(s);
    return s;
}

SceneSpec load_scene_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SceneParseError("cannot open scene file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_scene(buf.str());
}

std::string scene_to_text(const SceneSpec& s) {
    std::ostringstream out;
    out.precision(9);
    out << "bounds " << s.bounds.min.x << ' ' << s.bounds.min.y << ' ' << s.bounds.min.z << ' '
        << s.bounds.max.x << ' ' << s.bounds.max.y << ' ' << s.bounds.max.z << '\n';
    out << "floor " << s.floor_height << '\n';
    for (const auto& b : s.boxes) {
        out << "box " << b.min.x << ' ' << b.min.y << ' ' << b.min.z << ' ' << b.max.x << ' '
            << b.max.y << ' ' << b.max.z << ' ' << b.class_id;
        if (b.traversable) out << " traversable";
        out << '\n';
    }
    for (const auto& r : s.rooms)
        out << "room " << r.name << ' ' << r.min.x << ' ' << r.min.y << ' ' << r.max.x << ' '
            << r.max.y << '\n';
    for (const auto& n : s.nav_nodes) out << "node " << n.x << ' ' << n.y << '\n';
    for (const auto& e : s.nav_edges) out << "edge " << e.a << ' ' << e.b << '\n';
    return out.str();
}

}  // namespace panonav
