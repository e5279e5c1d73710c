#include "panonav/mapping.hpp"

#include <cmath>
#include <stdexcept>

namespace panonav {

GlobalMaps::GlobalMaps(const Pose& start, double floor, const Config& cfg) {
    size = cfg.map_size;
    resolution = cfg.map_resolution;
    floor_height = floor;
    double half = size * resolution / 2;
    origin = {start.x - half, start.y - half};
    occupancy.assign(static_cast<std::size_t>(size) * size, Occ::kVoid);
    observation_count.assign(static_cast<std::size_t>(size) * size, 0);
    semantic_counts.assign(static_cast<std::size_t>(size) * size * kNumClasses, 0);
}

void GlobalMaps::cell_of(const Vec2& p, int& r, int& c) const {
    r = static_cast<int>(std::floor((p.x - origin.x) / resolution));
    c = static_cast<int>(std::floor((p.y - origin.y) / resolution));
}

Vec2 GlobalMaps::cell_center(int r, int c) const {
    return {origin.x + (r + 0.5) * resolution, origin.y + (c + 0.5) * resolution};
}

int GlobalMaps::semantic_argmax(int r, int c) const {
    const uint16_t* counts = &semantic_counts[static_cast<std::size_t>(idx(r, c)) * kNumClasses];
    int best = -1;
    uint16_t best_count = 0;
    for (int k = 0; k < kNumClasses; ++k)
        if (counts[k] > best_count) {
            best_count = counts[k];
            best = k;
        }
    return best;
}

Occ EgoMaps::occ_class(int r, int c) const {
    const auto& d = occ_dist[idx(r, c)];
    if (d[0] == 0 && d[1] == 0 && d[2] == 0) return Occ::kVoid;
    int best = 0;
    for (int k = 1; k < 3; ++k)
        if (d[k] > d[best]) best = k;
    return static_cast<Occ>(best);
}

int EgoMaps::sem_argmax(int r, int c) const {
    const auto& d = sem_dist[idx(r, c)];
    int best = -1;
    float best_v = 0;
    for (int k = 0; k < kNumClasses; ++k)
        if (d[k] > best_v) {
            best_v = d[k];
            best = k;
        }
    return best;
}

bool EgoMaps::is_void(int r, int c) const { return occ_class(r, c) == Occ::kVoid; }

namespace {

void mark_free(GlobalMaps& m, int r, int c, int cls = -1) {
    if (!m.in_bounds(r, c)) return;
    std::size_t i = m.idx(r, c);
    if (m.occupancy[i] == Occ::kVoid) m.occupancy[i] = Occ::kFree;
    ++m.observation_count[i];
    if (cls > 0 && cls < kNumClasses) {
        uint16_t& count = m.semantic_counts[i * kNumClasses + cls];
        if (count < 0xffff) ++count;
    }
}

void mark_occupied(GlobalMaps& m, int r, int c, int cls) {
    if (!m.in_bounds(r, c)) {
        ++m.dropped_points;
        return;
    }
    std::size_t i = m.idx(r, c);
    m.occupancy[i] = Occ::kOccupied;
    ++m.observation_count[i];
    if (cls > 0 && cls < kNumClasses) {
        uint16_t& count = m.semantic_counts[i * kNumClasses + cls];
        if (count < 0xffff) ++count;
    }
}

// 2D Bresenham over grid cells from (r0,c0) to just before (r1,c1); void
// cells along the track become free.
void free_track(GlobalMaps& m, int r0, int c0, int r1, int c1) {
    int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
    int err = dr - dc;
    int r = r0, c = c0;
    while (r != r1 || c != c1) {
        mark_free(m, r, c);
        int e2 = 2 * err;
        if (e2 > -dc) {
            err -= dc;
            r += sr;
        }
        if (e2 < dr) {
            err += dr;
            c += sc;
        }
    }
}

}  // namespace

void ground_project(GlobalMaps& maps, const DepthImage& depth, const SemanticImage& sem,
                    const Pose& pose, const CameraIntrinsics& cam, const Config& cfg) {
    const double lo = maps.floor_height + cfg.obstacle_height_min;
    const double hi = maps.floor_height + cfg.obstacle_height_max;
    const Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
    int cam_r, cam_c;
    maps.cell_of({pose.x, pose.y}, cam_r, cam_c);

    for (int r = 0; r < depth.height; ++r)
        for (int c = 0; c < depth.width; ++c) {
            float d = depth.at(r, c);
            if (d <= 0) continue;
            Vec3 dir = pixel_ray(cam, pose, r, c, cfg);
            Vec3 p = origin + dir * d;

            // Ground track stays free only while the ray is below the
            // obstacle band ceiling, so rays passing over obstacles do not
            // clear them.
            double t_track = d;
            if (dir.z > 1e-12) t_track = std::min(t_track, (hi - origin.z) / dir.z);
            if (t_track > 0) {
                Vec3 track_end = origin + dir * t_track;
                int tr, tc;
                maps.cell_of({track_end.x, track_end.y}, tr, tc);
                free_track(maps, cam_r, cam_c, tr, tc);
            }

            if (p.z > lo && p.z < hi) {
                // Nudge the surface sample half a cell along the ray so it
                // lands inside the obstacle rather than on its face.
                Vec2 dir2{dir.x, dir.y};
                double n2 = dir2.norm();
                Vec2 q{p.x, p.y};
                if (n2 > 1e-12) q = q + dir2 * (0.5 * maps.resolution / n2);
                int pr, pc;
                maps.cell_of(q, pr, pc);
                int cls = sem.at(r, c);
                // Traversable landmarks (doors, stairs) are walkable ground,
                // not obstacles; they keep their semantic label.
                if (cls == kDoor || cls == kStairs) mark_free(maps, pr, pc, cls);
                else mark_occupied(maps, pr, pc, cls);
            } else if (p.z <= lo) {
                int pr, pc;
                maps.cell_of({p.x, p.y}, pr, pc);
                if (maps.in_bounds(pr, pc)) mark_free(maps, pr, pc, sem.at(r, c));
                else ++maps.dropped_points;
            }
        }
}

EgoMaps crop_ego(const GlobalMaps& maps, const Pose& pose, const Config& cfg) {
    EgoMaps ego;
    ego.size = cfg.ego_size;
    std::size_t n = static_cast<std::size_t>(ego.size) * ego.size;
    ego.occ_dist.assign(n, {0.f, 0.f, 0.f});
    ego.sem_dist.assign(n, {});
    const int half = ego.size / 2;
    const Vec2 fwd{std::cos(pose.yaw), std::sin(pose.yaw)};
    const Vec2 left{-std::sin(pose.yaw), std::cos(pose.yaw)};
    for (int r = 0; r < ego.size; ++r)
        for (int c = 0; c < ego.size; ++c) {
            double dr = (r - half + 0.5) * maps.resolution;
            double dc = (c - half + 0.5) * maps.resolution;
            Vec2 world = pose.position2() + fwd * dr + left * dc;
            int gr, gc;
            maps.cell_of(world, gr, gc);
            if (!maps.in_bounds(gr, gc)) continue;  // outside global map: void
            std::size_t gi = maps.idx(gr, gc);
            if (maps.occupancy[gi] == Occ::kVoid) continue;
            auto& od = ego.occ_dist[ego.idx(r, c)];
            od[static_cast<int>(maps.occupancy[gi])] = 1.f;
            const uint16_t* counts = &maps.semantic_counts[gi * kNumClasses];
            uint32_t total = 0;
            for (int k = 0; k < kNumClasses; ++k) total += counts[k];
            if (total > 0) {
                auto& sd = ego.sem_dist[ego.idx(r, c)];
                for (int k = 0; k < kNumClasses; ++k)
                    sd[k] = static_cast<float>(counts[k]) / total;
            }
        }
    return ego;
}

namespace {

EgoMaps holefill(const EgoMaps& input) {
    EgoMaps out = input;
    const int n = input.size;
    // Work on compact class tables; the fill rule only reads occupancy
    // classes and semantic argmaxes and writes one-hot cells.
    std::vector<int8_t> occ(n * n), sem(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            occ[input.idx(r, c)] = static_cast<int8_t>(input.occ_class(r, c));
            sem[input.idx(r, c)] = static_cast<int8_t>(input.sem_argmax(r, c));
        }
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<int8_t> next_occ = occ, next_sem = sem;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                if (occ[r * n + c] != static_cast<int8_t>(Occ::kVoid)) continue;
                int free_nb = 0;
                std::array<int, kNumClasses> votes{};
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                        if (occ[rr * n + cc] == static_cast<int8_t>(Occ::kFree)) ++free_nb;
                        if (sem[rr * n + cc] >= 0) ++votes[sem[rr * n + cc]];
                    }
                if (free_nb >= 6) {
                    next_occ[r * n + c] = static_cast<int8_t>(Occ::kFree);
                    int best = -1, best_v = 0;
                    for (int k = 0; k < kNumClasses; ++k)
                        if (votes[k] > best_v) {
                            best_v = votes[k];
                            best = k;
                        }
                    next_sem[r * n + c] = static_cast<int8_t>(best);
                    auto& od = out.occ_dist[out.idx(r, c)];
                    od = {0.f, 1.f, 0.f};
                    if (best >= 0) {
                        auto& sd = out.sem_dist[out.idx(r, c)];
                        sd.fill(0.f);
                        sd[best] = 1.f;
                    }
                }
            }
        occ = std::move(next_occ);
        sem = std::move(next_sem);
    }
    return out;
}

}  // namespace

EgoMaps refine(const EgoMaps& ego, const RefinerConfig& rcfg) {
    switch (rcfg.kind) {
        case RefinerKind::kIdentity:
            return ego;
        case RefinerKind::kHolefill:
            return holefill(ego);
        case RefinerKind::kExternal: {
            if (!rcfg.external) throw std::runtime_error("external refiner not set");
            EgoMaps out = rcfg.external(ego);
            if (out.size != ego.size)
                throw std::runtime_error("external refiner returned size " +
                                         std::to_string(out.size) + ", expected " +
                                         std::to_string(ego.size));
            if (out.occ_dist.size() != ego.occ_dist.size() ||
                out.sem_dist.size() != ego.sem_dist.size())
                throw std::runtime_error("external refiner returned malformed cell count");
            return out;
        }
    }
    throw std::runtime_error("unknown refiner kind");
}

std::pair<double, double> refinement_losses(const EgoMaps& pred, const EgoMaps& gt) {
    if (pred.size != gt.size) throw std::runtime_error("refinement_losses: shape mismatch");
    const std::size_t n = pred.occ_dist.size();
    double sem_loss = 0, occ_loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int occ_gt = 0;
        for (int k = 1; k < 3; ++k)
            if (gt.occ_dist[i][k] > gt.occ_dist[i][occ_gt]) occ_gt = k;
        double p = std::max(static_cast<double>(pred.occ_dist[i][occ_gt]), 1e-12);
        occ_loss += -std::log(p);
        int sem_gt = 0;
        for (int k = 1; k < kNumClasses; ++k)
            if (gt.sem_dist[i][k] > gt.sem_dist[i][sem_gt]) sem_gt = k;
        double q = std::max(static_cast<double>(pred.sem_dist[i][sem_gt]), 1e-12);
        sem_loss += -std::log(q);
    }
    return {sem_loss / n, occ_loss / n};
}

}  // namespace panonav
