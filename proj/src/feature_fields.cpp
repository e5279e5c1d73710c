#include "panonav/feature_fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace panonav {

namespace {

constexpr char kMagic[4] = {'P', 'N', 'F', 'C'};
constexpr uint32_t kVersion = 1;

int64_t pack_key(int64_t ix, int64_t iy, int64_t iz) {
    // 21 bits per axis, offset binary.
    return ((ix + (1 << 20)) << 42) | ((iy + (1 << 20)) << 21) | (iz + (1 << 20));
}

}  // namespace

FeatureCloud::FeatureCloud(const Config& cfg)
    : voxel_size_(cfg.voxel_size),
      capacity_(cfg.cloud_capacity),
      point_cap_(cfg.voxel_point_cap),
      coarse_size_(std::max(cfg.knn_radius, cfg.voxel_size)),
      mid_size_(2.0 * cfg.voxel_size) {}

int64_t FeatureCloud::voxel_key(const Vec3& p) const {
    return pack_key(static_cast<int64_t>(std::floor(p.x / voxel_size_)),
                    static_cast<int64_t>(std::floor(p.y / voxel_size_)),
                    static_cast<int64_t>(std::floor(p.z / voxel_size_)));
}

bool FeatureCloud::grid_maybe(const std::unordered_map<int64_t, uint32_t>& grid, double cell,
                              const Vec3& q) {
    int64_t ix = static_cast<int64_t>(std::floor(q.x / cell));
    int64_t iy = static_cast<int64_t>(std::floor(q.y / cell));
    int64_t iz = static_cast<int64_t>(std::floor(q.z / cell));
    return grid.count(pack_key(ix, iy, iz)) != 0;
}

void FeatureCloud::grid_mark(std::unordered_map<int64_t, uint32_t>& grid, double cell,
                             const Vec3& p, int delta) {
    int64_t ix = static_cast<int64_t>(std::floor(p.x / cell));
    int64_t iy = static_cast<int64_t>(std::floor(p.y / cell));
    int64_t iz = static_cast<int64_t>(std::floor(p.z / cell));
    for (int64_t dx = -1; dx <= 1; ++dx)
        for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dz = -1; dz <= 1; ++dz) {
                int64_t key = pack_key(ix + dx, iy + dy, iz + dz);
                if (delta > 0) {
                    ++grid[key];
                } else {
                    auto it = grid.find(key);
                    if (it != grid.end() && --it->second == 0) grid.erase(it);
                }
            }
}

bool FeatureCloud::insert(const Vec3& pos, const FeatureVec& feat, uint32_t step) {
    uint64_t id = offset_ + points_.size();
    int64_t key = voxel_key(pos);
    if (point_cap_ > 0) {
        auto it = voxels_.find(key);
        if (it != voxels_.end() && static_cast<int>(it->second.size()) >= point_cap_)
            return false;
    }
    auto& ids = voxels_[key];
    int16_t cls = static_cast<int16_t>(class_feature_index(feat));
    if (cls < 0) ++unclassed_;
    points_.push_back({pos, feat, step, cls});
    ids.push_back(id);
    if (ids.size() == 1 && !refs_dirty_) refs_.push_back({pos, &ids});
    grids_dirty_ = true;
    if (points_.size() > capacity_) evict_oldest();
    return true;
}

void FeatureCloud::evict_oldest() {
    const CloudPoint& p = points_.front();
    int64_t key = voxel_key(p.position);
    auto it = voxels_.find(key);
    if (it != voxels_.end()) {
        auto& ids = it->second;
        ids.erase(std::remove(ids.begin(), ids.end(), offset_), ids.end());
        if (ids.empty()) {
            voxels_.erase(it);
            refs_dirty_ = true;
        }
    }
    grids_dirty_ = true;
    if (p.class_index < 0) --unclassed_;
    points_.pop_front();
    ++offset_;
}

void FeatureCloud::refresh_grids() const {
    if (!grids_dirty_) return;
    coarse_.clear();
    mid_.clear();
    for (const CloudPoint& p : points_) {
        grid_mark(coarse_, coarse_size_, p.position, +1);
        grid_mark(mid_, mid_size_, p.position, +1);
    }
    grids_dirty_ = false;
}

const std::vector<FeatureCloud::VoxelRef>& FeatureCloud::voxel_refs() const {
    if (refs_dirty_) {
        refs_.clear();
        refs_.reserve(voxels_.size());
        for (const auto& [key, ids] : voxels_) refs_.push_back({point(ids[0]).position, &ids});
        refs_dirty_ = false;
    }
    return refs_;
}

std::vector<FeatureCloud::Neighbor> FeatureCloud::knn(const Vec3& query, int k,
                                                      double radius) const {
    std::vector<Neighbor> result;
    if (k < 1 || radius <= 0 || points_.empty()) return result;
    refresh_grids();
    if (radius <= mid_size_ && !grid_maybe(mid_, mid_size_, query)) return result;
    if (radius <= coarse_size_ && !grid_maybe(coarse_, coarse_size_, query)) return result;
    const int64_t qx = static_cast<int64_t>(std::floor(query.x / voxel_size_));
    const int64_t qy = static_cast<int64_t>(std::floor(query.y / voxel_size_));
    const int64_t qz = static_cast<int64_t>(std::floor(query.z / voxel_size_));
    const int max_shell = static_cast<int>(std::ceil(radius / voxel_size_));
    const double r2 = radius * radius;

    auto scan_cell = [&](int64_t ix, int64_t iy, int64_t iz) {
        auto it = voxels_.find(pack_key(ix, iy, iz));
        if (it == voxels_.end()) return;
        for (uint64_t id : it->second) {
            const Vec3 d = points_[id - offset_].position - query;
            double dd = d.dot(d);
            if (dd <= r2) result.push_back({id, dd});  // squared for now
        }
    };

    for (int shell = 0; shell <= max_shell; ++shell) {
        // Early out: every point in shells >= s is at least (s-1) voxels away.
        if (static_cast<int>(result.size()) >= k) {
            double shell_min = (shell - 1) * voxel_size_;
            if (shell_min > 0) {
                std::nth_element(result.begin(), result.begin() + (k - 1), result.end(),
                                 [](const Neighbor& a, const Neighbor& b) {
                                     return a.distance < b.distance ||
                                            (a.distance == b.distance && a.id < b.id);
                                 });
                if (result[k - 1].distance <= shell_min * shell_min) break;
            }
        }
        for (int64_t dx = -shell; dx <= shell; ++dx)
            for (int64_t dy = -shell; dy <= shell; ++dy)
                for (int64_t dz = -shell; dz <= shell; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell) continue;
                    scan_cell(qx + dx, qy + dy, qz + dz);
                }
    }
    std::sort(result.begin(), result.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    });
    if (static_cast<int>(result.size()) > k) result.resize(k);
    for (auto& nb : result) nb.distance = std::sqrt(nb.distance);
    return result;
}

bool FeatureCloud::has_neighbor(const Vec3& query, double radius) const {
    if (points_.empty()) return false;
    refresh_grids();
    if (radius <= mid_size_ && !grid_maybe(mid_, mid_size_, query)) return false;
    if (radius <= coarse_size_ && !grid_maybe(coarse_, coarse_size_, query)) return false;
    const int64_t qx = static_cast<int64_t>(std::floor(query.x / voxel_size_));
    const int64_t qy = static_cast<int64_t>(std::floor(query.y / voxel_size_));
    const int64_t qz = static_cast<int64_t>(std::floor(query.z / voxel_size_));
    const int reach = static_cast<int>(std::ceil(radius / voxel_size_));
    const double r2 = radius * radius;
    // inner shells first: hits are nearly always adjacent to the query
    for (int shell = 0; shell <= reach; ++shell)
        for (int64_t dx = -shell; dx <= shell; ++dx)
            for (int64_t dy = -shell; dy <= shell; ++dy)
                for (int64_t dz = -shell; dz <= shell; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell) continue;
                    auto it = voxels_.find(pack_key(qx + dx, qy + dy, qz + dz));
                    if (it == voxels_.end()) continue;
                    for (uint64_t id : it->second) {
                        const Vec3 d = points_[id - offset_].position - query;
                        if (d.dot(d) <= r2) return true;
                    }
                }
    return false;
}

void FeatureCloud::persist(std::ostream& out) const {
    out.write(kMagic, 4);
    uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    uint64_t count = points_.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& p : points_) {
        float pos[3] = {static_cast<float>(p.position.x), static_cast<float>(p.position.y),
                        static_cast<float>(p.position.z)};
        out.write(reinterpret_cast<const char*>(pos), 12);
        uint16_t half[kFeatureDim];
        for (int i = 0; i < kFeatureDim; ++i) half[i] = f32_to_f16(p.feature[i]);
        out.write(reinterpret_cast<const char*>(half), kFeatureDim * 2);
        out.write(reinterpret_cast<const char*>(&p.source_step), 4);
    }
}

FeatureCloud FeatureCloud::restore(std::istream& in, const Config& cfg) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CloudFormatError("bad magic bytes", 0);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kVersion)
        throw CloudFormatError("unsupported version " + std::to_string(version), 4);
    uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in) throw CloudFormatError("truncated header", 8);
    FeatureCloud cloud(cfg);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t record_at = 16 + i * (12 + kFeatureDim * 2 + 4);
        float pos[3];
        uint16_t half[kFeatureDim];
        uint32_t step;
        in.read(reinterpret_cast<char*>(pos), 12);
        in.read(reinterpret_cast<char*>(half), kFeatureDim * 2);
        in.read(reinterpret_cast<char*>(&step), 4);
        if (!in)
            throw CloudFormatError("truncated at point " + std::to_string(i), record_at);
        FeatureVec feat;
        for (int j = 0; j < kFeatureDim; ++j) feat[j] = f16_to_f32(half[j]);
        cloud.insert({pos[0], pos[1], pos[2]}, feat, step);
    }
    return cloud;
}

void FeatureCloud::persist_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cloud file: " + path);
    persist(out);
}

FeatureCloud FeatureCloud::restore_file(const std::string& path, const Config& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CloudFormatError("cannot open cloud file: " + path, 0);
    return restore(in, cfg);
}

std::pair<double, FeatureVec> field_at(const FeatureCloud& cloud, const Vec3& position,
                                       const Config& cfg, const FieldModel& model) {
    if (model.kind == FieldKind::kExternal) {
        if (!model.external) throw std::runtime_error("external field model not set");
        auto [sigma, latent] = model.external(cloud, position);
        if (sigma < 0) sigma = 0;  // clamp, warning is the caller's concern
        return {sigma, latent};
    }
    auto neighbors = cloud.knn(position, cfg.knn_k, cfg.knn_radius);
    if (neighbors.empty()) return {0.0, feat_zero()};
    const double inv_h2 = 1.0 / (cfg.field_bandwidth * cfg.field_bandwidth);
    double wsum = 0;
    FeatureVec latent = feat_zero();
    for (const auto& nb : neighbors) {
        double w = std::exp(-nb.distance * nb.distance * inv_h2);
        wsum += w;
        const FeatureVec& f = cloud.point(nb.id).feature;
        for (int i = 0; i < kFeatureDim; ++i) latent[i] += static_cast<float>(w) * f[i];
    }
    feat_normalize(latent);
    return {cfg.field_sigma_scale * wsum, latent};
}

std::pair<FeatureVec, double> composite_samples(const std::vector<RaySample>& samples) {
    FeatureVec out = feat_zero();
    double transmittance = 1.0;
    double opacity = 0.0;
    for (const auto& s : samples) {
        double alpha = 1.0 - std::exp(-s.sigma * s.delta);
        double w = transmittance * alpha;
        for (int i = 0; i < kFeatureDim; ++i) out[i] += static_cast<float>(w) * s.latent[i];
        opacity += w;
        transmittance *= std::exp(-s.sigma * s.delta);
    }
    return {out, opacity};
}

std::pair<FeatureVec, double> render_subregion(const FeatureCloud& cloud, const Vec3& cam_pos,
                                               const Vec3& target, const Config& cfg,
                                               const FieldModel& model, bool* found_neighbors) {
    Vec3 to_target = target - cam_pos;
    double dist = to_target.norm();
    if (dist <= 0) throw std::runtime_error("render_subregion: target equals camera position");
    Vec3 dir = to_target * (1.0 / dist);
    double ray_len = dist * cfg.ray_extension;
    double near = std::min(cfg.near_clip, ray_len);
    double delta = (ray_len - near) / cfg.ray_samples;

    bool any_neighbors = false;
    std::vector<RaySample> samples;
    samples.reserve(cfg.ray_samples);
    for (int n = 0; n < cfg.ray_samples; ++n) {
        double t = near + (n + 0.5) * delta;
        RaySample s;
        s.position = cam_pos + dir * t;
        s.delta = delta;
        auto [sigma, latent] = field_at(cloud, s.position, cfg, model);
        s.sigma = sigma;
        s.latent = latent;
        if (sigma > 0) any_neighbors = true;
        samples.push_back(std::move(s));
    }
    if (found_neighbors) *found_neighbors = any_neighbors;
    return composite_samples(samples);
}

namespace {

// First distance along the ray where the cloud has support; 0 when none.
double surface_depth(const FeatureCloud& cloud, const Vec3& origin, const Vec3& dir,
                     double max_depth, const Config& cfg) {
    const double step = 2.0 * cfg.voxel_size;
    for (double t = cfg.near_clip; t <= max_depth; t += step) {
        if (cloud.has_neighbor(origin + dir * t, 1.5 * cfg.voxel_size)) return t;
    }
    return 0.0;
}

struct RayCandidate {
    uint64_t id;
    double t;  // projection onto the ray direction
    Vec3 position;
    const FeatureVec* feature;
    int16_t class_index;
};

// Pairwise prototype dot products, double-accumulated; lets the sparse
// composite compute feature norms in class-coefficient space.
const std::array<std::array<double, kNumClasses>, kNumClasses>& class_gram() {
    static const auto gram = [] {
        std::array<std::array<double, kNumClasses>, kNumClasses> g{};
        for (int a = 0; a < kNumClasses; ++a)
            for (int b = 0; b < kNumClasses; ++b) {
                const FeatureVec& fa = class_feature(a);
                const FeatureVec& fb = class_feature(b);
                double s = 0;
                for (int i = 0; i < kFeatureDim; ++i)
                    s += static_cast<double>(fa[i]) * fb[i];
                g[a][b] = s;
            }
        return g;
    }();
    return gram;
}

struct RayBin {
    Vec3 dir;               // unit center direction
    double depth = 0;       // marched surface depth (m)
    double hx = 0, hy = 0;  // horizontal azimuth unit
    double ce = 0, se = 0;  // cos/sin elevation
    std::vector<RayCandidate> candidates;  // ascending id
};

// Composite one subregion from pre-gathered candidates. Mirrors
// render_subregion + the analytic field_at arithmetic exactly: same sample
// positions, same neighbor selection order, same weight formulas.
std::pair<FeatureVec, double> composite_from_candidates(const RayBin& ray, const Vec3& cam_pos,
                                                        const Config& cfg,
                                                        bool* found_neighbors) {
    Vec3 target = cam_pos + ray.dir * ray.depth;
    Vec3 to_target = target - cam_pos;
    double dist = to_target.norm();
    Vec3 dir = to_target * (1.0 / dist);
    double ray_len = dist * cfg.ray_extension;
    double near = std::min(cfg.near_clip, ray_len);
    double delta = (ray_len - near) / cfg.ray_samples;
    const double r2 = cfg.knn_radius * cfg.knn_radius;
    const double inv_h2 = 1.0 / (cfg.field_bandwidth * cfg.field_bandwidth);

    struct Hit {
        double dd;
        uint64_t id;
        const FeatureVec* feature;
    };
    bool any_neighbors = false;
    std::vector<RaySample> samples(cfg.ray_samples);
    std::vector<Hit> hits;
    const double window = cfg.knn_radius + 1e-6;
    auto hit_less = [](const Hit& a, const Hit& b) {
        return a.dd < b.dd || (a.dd == b.dd && a.id < b.id);
    };
    for (int n = 0; n < cfg.ray_samples; ++n) {
        double t = near + (n + 0.5) * delta;
        RaySample& s = samples[n];
        s.position = cam_pos + dir * t;
        s.delta = delta;
        s.latent = feat_zero();
        hits.clear();
        // candidates are sorted by t; only the [t - r, t + r] window can hit
        auto it = std::lower_bound(ray.candidates.begin(), ray.candidates.end(), t - window,
                                   [](const RayCandidate& c, double v) { return c.t < v; });
        for (; it != ray.candidates.end() && it->t <= t + window; ++it) {
            const Vec3 d = it->position - s.position;
            double dd = d.dot(d);
            if (dd <= r2) hits.push_back({dd, it->id, it->feature});
        }
        if (hits.empty()) continue;
        any_neighbors = true;
        if (static_cast<int>(hits.size()) > cfg.knn_k) {
            std::nth_element(hits.begin(), hits.begin() + (cfg.knn_k - 1), hits.end(), hit_less);
            hits.resize(cfg.knn_k);
        }
        std::sort(hits.begin(), hits.end(), hit_less);
        double wsum = 0;
        for (const Hit& h : hits) {
            double d1 = std::sqrt(h.dd);
            double w = std::exp(-d1 * d1 * inv_h2);
            wsum += w;
            const FeatureVec& f = *h.feature;
            for (int i = 0; i < kFeatureDim; ++i)
                s.latent[i] += static_cast<float>(w) * f[i];
        }
        feat_normalize(s.latent);
        s.sigma = cfg.field_sigma_scale * wsum;
    }
    if (found_neighbors) *found_neighbors = any_neighbors;
    return composite_samples(samples);
}

// Same sample geometry and neighbor selection as composite_from_candidates,
// but with every candidate feature a class prototype, so weighted sums and
// norms run over at most k class coefficients instead of the full feature
// dimension; the dense feature is materialized once at the end. Numerically
// equivalent to the dense path up to floating-point reassociation.
std::pair<FeatureVec, double> composite_from_candidates_sparse(const RayBin& ray,
                                                               const Vec3& cam_pos,
                                                               const Config& cfg,
                                                               bool* found_neighbors) {
    Vec3 target = cam_pos + ray.dir * ray.depth;
    Vec3 to_target = target - cam_pos;
    double dist = to_target.norm();
    Vec3 dir = to_target * (1.0 / dist);
    double ray_len = dist * cfg.ray_extension;
    double near = std::min(cfg.near_clip, ray_len);
    double delta = (ray_len - near) / cfg.ray_samples;
    const double r2 = cfg.knn_radius * cfg.knn_radius;
    const double inv_h2 = 1.0 / (cfg.field_bandwidth * cfg.field_bandwidth);
    const auto& gram = class_gram();

    struct Hit {
        double dd;
        uint64_t id;
        int16_t cls;
    };
    bool any_neighbors = false;
    std::vector<Hit> hits;
    const double window = cfg.knn_radius + 1e-6;
    auto hit_less = [](const Hit& a, const Hit& b) {
        return a.dd < b.dd || (a.dd == b.dd && a.id < b.id);
    };

    std::array<float, kNumClasses> cw{};      // per-sample coefficients
    std::array<float, kNumClasses> ray_cw{};  // composited ray coefficients
    std::array<bool, kNumClasses> seen{}, ray_seen{};
    int touched[kNumClasses], ray_touched[kNumClasses];
    int ntouch = 0, ray_ntouch = 0;
    double transmittance = 1.0;
    double opacity = 0.0;

    for (int n = 0; n < cfg.ray_samples; ++n) {
        double t = near + (n + 0.5) * delta;
        Vec3 sample_pos = cam_pos + dir * t;
        hits.clear();
        auto it = std::lower_bound(ray.candidates.begin(), ray.candidates.end(), t - window,
                                   [](const RayCandidate& c, double v) { return c.t < v; });
        for (; it != ray.candidates.end() && it->t <= t + window; ++it) {
            const Vec3 d = it->position - sample_pos;
            double dd = d.dot(d);
            if (dd <= r2) hits.push_back({dd, it->id, it->class_index});
        }
        // An empty sample has sigma 0: zero compositing weight and no
        // transmittance decay, so it can be skipped outright.
        if (hits.empty()) continue;
        any_neighbors = true;
        if (static_cast<int>(hits.size()) > cfg.knn_k) {
            std::nth_element(hits.begin(), hits.begin() + (cfg.knn_k - 1), hits.end(), hit_less);
            hits.resize(cfg.knn_k);
        }
        std::sort(hits.begin(), hits.end(), hit_less);
        double wsum = 0;
        ntouch = 0;
        for (const Hit& h : hits) {
            double d1 = std::sqrt(h.dd);
            double w = std::exp(-d1 * d1 * inv_h2);
            wsum += w;
            if (!seen[h.cls]) {
                seen[h.cls] = true;
                touched[ntouch++] = h.cls;
            }
            cw[h.cls] += static_cast<float>(w);
        }
        double norm2 = 0;
        for (int a = 0; a < ntouch; ++a)
            for (int b = 0; b < ntouch; ++b)
                norm2 += static_cast<double>(cw[touched[a]]) * cw[touched[b]] *
                         gram[touched[a]][touched[b]];
        float norm = static_cast<float>(std::sqrt(norm2));
        double sigma = cfg.field_sigma_scale * wsum;
        double alpha = 1.0 - std::exp(-sigma * delta);
        double w_comp = transmittance * alpha;
        for (int a = 0; a < ntouch; ++a) {
            int c = touched[a];
            if (!ray_seen[c]) {
                ray_seen[c] = true;
                ray_touched[ray_ntouch++] = c;
            }
            if (norm > 0) ray_cw[c] += static_cast<float>(w_comp) * (cw[c] / norm);
            cw[c] = 0.f;
            seen[c] = false;
        }
        opacity += w_comp;
        transmittance *= std::exp(-sigma * delta);
    }
    if (found_neighbors) *found_neighbors = any_neighbors;

    FeatureVec out = feat_zero();
    for (int a = 0; a < ray_ntouch; ++a) {
        int c = ray_touched[a];
        const FeatureVec& proto = class_feature(c);
        float coeff = ray_cw[c];
        for (int i = 0; i < kFeatureDim; ++i) out[i] += coeff * proto[i];
    }
    return {out, opacity};
}

}  // namespace

namespace {

// Voxels surviving the view-independent distance cull, with point ids and
// deque positions resolved up front. Cached per panorama so the eleven
// rendered views share one pass over the voxel map.
struct CulledVoxel {
    Vec3 rel;  // representative point relative to the camera origin
    double len;
    uint32_t begin, end;  // range into PanoCull::pts
};

// Shell entry carrying everything the per-ray passes touch, so they never
// chase pointers back into the (large-stride) point deque.
struct ShellPt {
    Vec3 pos;
    uint64_t id;
    const FeatureVec* feat;
    int16_t cls;
};

struct PanoCull {
    std::vector<CulledVoxel> voxels;
    std::vector<ShellPt> pts;
};

double distance_cull_limit(const CameraIntrinsics& cam, const Config& cfg, double r_cull,
                           double diag) {
    return std::max(cam.max_range, cfg.fallback_depth) * std::max(1.0, cfg.ray_extension) +
           r_cull + diag;
}

PanoCull cull_by_distance(const FeatureCloud& cloud, const Vec3& origin, double far_cull,
                          double diag) {
    PanoCull out;
    out.voxels.reserve(cloud.voxels().size());
    out.pts.reserve(cloud.size());
    for (const auto& ref : cloud.voxel_refs()) {
        const Vec3 rep = ref.rep - origin;
        double len = rep.norm();
        if (len - diag > far_cull) continue;
        uint32_t begin = static_cast<uint32_t>(out.pts.size());
        for (uint64_t id : *ref.ids) {
            const CloudPoint& cp = cloud.point(id);
            out.pts.push_back({cp.position, id, &cp.feature, cp.class_index});
        }
        out.voxels.push_back({rep, len, begin, static_cast<uint32_t>(out.pts.size())});
    }
    return out;
}

RenderedView render_view_impl(const FeatureCloud& cloud, const Pose& pose,
                              const CameraIntrinsics& cam, const Config& cfg,
                              const FieldModel& model, const ViewAggregator& agg,
                              const PanoCull* culled) {
    RenderedView view;
    view.view_feature = feat_zero();
    view.expected_depth = cfg.fallback_depth;
    if (cloud.size() == 0 && !(model.kind == FieldKind::kExternal)) {
        view.region_features.assign(kViewGrid * kViewGrid, feat_zero());
        view.region_opacity.assign(kViewGrid * kViewGrid, 0.0);
        view.region_depths.assign(kViewGrid * kViewGrid, cfg.fallback_depth);
        if (agg.kind == Aggregator::kExternal) {
            if (!agg.external) throw std::runtime_error("external aggregator not set");
            view.view_feature = agg.external(view);
        }
        return view;  // nothing to march or sample against
    }

    const Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
    const double hfov = deg2rad(cam.hfov);
    const double vfov = deg2rad(cam.vfov);
    const bool fast = model.kind == FieldKind::kAnalytic;
    int covered = 0;
    FeatureVec accum = feat_zero();
    double wsum = 0, depth_sum = 0;

    // Subregion center rays: u sweeps elevation down from the top, v
    // sweeps azimuth from the left.
    std::vector<RayBin> rays(kViewGrid * kViewGrid);
    for (int u = 0; u < kViewGrid; ++u)
        for (int v = 0; v < kViewGrid; ++v) {
            RayBin& ray = rays[u * kViewGrid + v];
            double azimuth = hfov / 2 - (v + 0.5) * hfov / kViewGrid;
            double elevation = vfov / 2 - (u + 0.5) * vfov / kViewGrid;
            double a = pose.yaw + azimuth;
            ray.ce = std::cos(elevation);
            ray.se = std::sin(elevation);
            ray.hx = std::cos(a);
            ray.hy = std::sin(a);
            ray.dir = {ray.ce * ray.hx, ray.ce * ray.hy, ray.se};
            if (!fast) {
                double depth = surface_depth(cloud, origin, ray.dir, cam.max_range, cfg);
                ray.depth = depth > 0 ? depth : cfg.fallback_depth;
            }
        }

    if (fast) {
        // Cull whole voxels against the view cone before any per-point
        // work: every ray direction has projection >= axis_dot onto the
        // view axis, so a point within influence radius of some ray segment
        // cannot fall far behind the cone. The voxel diagonal covers the
        // spread between a voxel's points and its representative.
        const double diag = cloud.voxel_size() * std::sqrt(3.0);
        const double r_cull = std::max(cfg.knn_radius, 1.5 * cfg.voxel_size) + 1e-9;
        const double far_cull = distance_cull_limit(cam, cfg, r_cull, diag);
        const Vec3 axis{std::cos(pose.yaw), std::sin(pose.yaw), 0.0};
        double axis_dot = 1.0;
        for (const auto& ray : rays) axis_dot = std::min(axis_dot, ray.dir.dot(axis));
        axis_dot = std::max(axis_dot, 0.0);
        // Survivors go into 1 m distance shells (keyed by a conservative
        // lower bound on point distance) so both passes below can stop as
        // soon as the remaining shells are provably out of reach.
        const int nshell = static_cast<int>(far_cull) + 2;
        std::vector<std::vector<ShellPt>> shells(nshell);
        auto cone_ok = [&](const Vec3& rep, double len) {
            double proj = rep.x * axis.x + rep.y * axis.y;
            return proj + diag >= axis_dot * std::max(0.0, len - diag - r_cull) - r_cull;
        };
        auto shell_of = [&](double len) -> auto& {
            return shells[std::min(static_cast<int>(std::max(0.0, len - diag)), nshell - 1)];
        };
        if (culled) {
            for (const auto& cv : culled->voxels) {
                if (!cone_ok(cv.rel, cv.len)) continue;
                auto& shell = shell_of(cv.len);
                shell.insert(shell.end(), culled->pts.begin() + cv.begin,
                             culled->pts.begin() + cv.end);
            }
        } else {
            for (const auto& ref : cloud.voxel_refs()) {
                const Vec3 rep = ref.rep - origin;
                double len = rep.norm();
                if (len - diag > far_cull || !cone_ok(rep, len)) continue;
                auto& shell = shell_of(len);
                for (uint64_t id : *ref.ids) {
                    const CloudPoint& cp = cloud.point(id);
                    shell.push_back({cp.position, id, &cp.feature, cp.class_index});
                }
            }
        }

        // Surface pass: replicate the hash-march (first ladder distance
        // where some point lies within 1.5 voxels of the sample) by solving
        // each point's coverage interval along the ray instead of probing
        // the hash per step. Ladder values accumulate exactly like the
        // march loop did.
        const double step_m = 2.0 * cfg.voxel_size;
        const double r_s = 1.5 * cfg.voxel_size;
        const double rs2 = r_s * r_s;
        const double r_sc = r_s + 1e-9;
        std::vector<double> ladder;
        for (double t = cfg.near_clip; t <= cam.max_range; t += step_m) ladder.push_back(t);
        const int jmax = static_cast<int>(ladder.size());
        std::vector<int> first_j(rays.size(), jmax);
        for (int sh = 0; sh < nshell; ++sh) {
        // Points in shell sh lie at distance >= sh, so they can only improve
        // rays whose current first hit is at least that far. Columns where
        // every ray already resolved nearer get skipped wholesale; when no
        // column survives, neither can any later shell.
        int active[kViewGrid];
        int nact = 0;
        for (int v = 0; v < kViewGrid; ++v) {
            double colmax = 0;
            for (int u = 0; u < kViewGrid; ++u) {
                int j = first_j[u * kViewGrid + v];
                colmax = std::max(colmax, j < jmax ? ladder[j] : 1e300);
            }
            if (static_cast<double>(sh) <= colmax + r_s) active[nact++] = v;
        }
        if (nact == 0) break;
        for (const auto& sp : shells[sh]) {
            const Vec3 rel = sp.pos - origin;
            for (int vi = 0; vi < nact; ++vi) {
                const int v = active[vi];
                const RayBin& col = rays[v];
                double cross_az = rel.x * col.hy - rel.y * col.hx;
                if (cross_az > r_sc || cross_az < -r_sc) continue;
                double s_along = rel.x * col.hx + rel.y * col.hy;
                for (int u = 0; u < kViewGrid; ++u) {
                    int ridx = u * kViewGrid + v;
                    const RayBin& ray = rays[ridx];
                    double cross_el = rel.z * ray.ce - s_along * ray.se;
                    if (cross_el > r_sc || cross_el < -r_sc) continue;
                    double t_proj = rel.dot(ray.dir);
                    double s2 = rs2 - (rel.dot(rel) - t_proj * t_proj);
                    if (s2 < 0) continue;
                    double s = std::sqrt(s2);
                    int& best = first_j[ridx];
                    int j = static_cast<int>(
                        std::lower_bound(ladder.begin(), ladder.end(), t_proj - s) -
                        ladder.begin());
                    for (; j < best && ladder[j] <= t_proj + s; ++j) {
                        const Vec3 d = rel - ray.dir * ladder[j];
                        if (d.dot(d) <= rs2) {
                            best = j;
                            break;
                        }
                    }
                }
            }
        }
        }
        for (std::size_t i = 0; i < rays.size(); ++i)
            rays[i].depth = first_j[i] < jmax ? ladder[first_j[i]] : cfg.fallback_depth;

        // Rasterize the cloud into per-ray candidate bins: a point can only
        // influence a sample if it lies within knn_radius of that ray's
        // sample segment. The per-axis cross-product tests are conservative
        // lower bounds on the point-to-ray-line distance.
        const double r = cfg.knn_radius + 1e-9;
        double max_reach = 0;
        for (const auto& ray : rays)
            max_reach = std::max(max_reach, ray.depth * cfg.ray_extension + cfg.knn_radius);
        const double reach2 = max_reach * max_reach;
        // A point farther than a column's longest sample segment (plus the
        // influence radius) cannot touch any ray in that column.
        double colreach[kViewGrid];
        for (int v = 0; v < kViewGrid; ++v) {
            colreach[v] = 0;
            for (int u = 0; u < kViewGrid; ++u)
                colreach[v] = std::max(colreach[v],
                                       rays[u * kViewGrid + v].depth * cfg.ray_extension + r);
        }
        for (int sh = 0; sh < nshell && static_cast<double>(sh) <= max_reach; ++sh) {
        int active[kViewGrid];
        int nact = 0;
        for (int v = 0; v < kViewGrid; ++v)
            if (static_cast<double>(sh) <= colreach[v]) active[nact++] = v;
        if (nact == 0) break;
        for (const auto& sp : shells[sh]) {
            const Vec3 rel = sp.pos - origin;
            if (rel.dot(rel) > reach2) continue;
            for (int vi = 0; vi < nact; ++vi) {
                const int v = active[vi];
                const RayBin& col = rays[v];
                double cross_az = rel.x * col.hy - rel.y * col.hx;
                if (cross_az > r || cross_az < -r) continue;
                double s_along = rel.x * col.hx + rel.y * col.hy;
                for (int u = 0; u < kViewGrid; ++u) {
                    RayBin& ray = rays[u * kViewGrid + v];
                    double cross_el = rel.z * ray.ce - s_along * ray.se;
                    if (cross_el > r || cross_el < -r) continue;
                    double seg_far = ray.depth * cfg.ray_extension;
                    double seg_near = std::min(cfg.near_clip, seg_far);
                    double t_raw = rel.dot(ray.dir);
                    double t = std::clamp(t_raw, seg_near, seg_far);
                    const Vec3 d = rel - ray.dir * t;
                    if (d.dot(d) > r * r) continue;
                    ray.candidates.push_back({sp.id, t_raw, sp.pos, sp.feat, sp.cls});
                }
            }
        }
        }
        for (auto& ray : rays)
            std::sort(ray.candidates.begin(), ray.candidates.end(),
                      [](const RayCandidate& a, const RayCandidate& b) { return a.t < b.t; });
    }

    view.region_features.reserve(kViewGrid * kViewGrid);
    view.region_opacity.reserve(kViewGrid * kViewGrid);
    view.region_depths.reserve(kViewGrid * kViewGrid);
    for (int u = 0; u < kViewGrid; ++u)
        for (int v = 0; v < kViewGrid; ++v) {
            int idx = u * kViewGrid + v;
            RayBin& ray = rays[idx];
            bool found = false;
            FeatureVec feat;
            double opacity;
            if (fast && cloud.all_classed()) {
                std::tie(feat, opacity) =
                    composite_from_candidates_sparse(ray, origin, cfg, &found);
            } else if (fast) {
                std::tie(feat, opacity) = composite_from_candidates(ray, origin, cfg, &found);
            } else {
                std::tie(feat, opacity) = render_subregion(
                    cloud, origin, origin + ray.dir * ray.depth, cfg, model, &found);
            }
            view.region_features.push_back(feat);
            view.region_opacity.push_back(opacity);
            view.region_depths.push_back(ray.depth);
            if (found) ++covered;
            for (int i = 0; i < kFeatureDim; ++i)
                accum[i] += static_cast<float>(opacity) * feat[i];
            wsum += opacity;
            depth_sum += opacity * ray.depth;
        }

    view.coverage = static_cast<double>(covered) / (kViewGrid * kViewGrid);
    view.expected_depth = wsum > 0 ? depth_sum / wsum : cfg.fallback_depth;
    if (agg.kind == Aggregator::kExternal) {
        if (!agg.external) throw std::runtime_error("external aggregator not set");
        view.view_feature = agg.external(view);
    } else if (view.coverage > 0) {
        view.view_feature = accum;
        feat_normalize(view.view_feature);
    }
    return view;
}

}  // namespace

RenderedView render_view(const FeatureCloud& cloud, const Pose& pose, const CameraIntrinsics& cam,
                         const Config& cfg, const FieldModel& model, const ViewAggregator& agg) {
    return render_view_impl(cloud, pose, cam, cfg, model, agg, nullptr);
}

Panorama render_panorama(const FeatureCloud& cloud, const Pose& pose, const CameraIntrinsics& cam,
                         const FeatureImage& forward, const Config& cfg, const FieldModel& model,
                         const DepthImage* forward_depth) {
    Panorama pano;
    pano.slots.assign(kPanoramaSlots, feat_zero());
    pano.coverage.assign(kPanoramaSlots, 0.0);
    pano.slot_depth.assign(kPanoramaSlots, cfg.fallback_depth);
    pano.regions.assign(kPanoramaSlots, std::vector<FeatureVec>(kViewGrid * kViewGrid, feat_zero()));
    pano.region_depths.assign(kPanoramaSlots,
                              std::vector<double>(kViewGrid * kViewGrid, cfg.fallback_depth));

    // Slot 0: observed forward view, block-averaged into the 8x8 grid.
    FeatureVec fwd = feat_zero();
    std::size_t valid = 0;
    std::vector<FeatureVec> blocks(kViewGrid * kViewGrid, feat_zero());
    std::vector<int> block_count(kViewGrid * kViewGrid, 0);
    std::vector<double> block_depth(kViewGrid * kViewGrid, 0.0);
    std::vector<int> block_depth_count(kViewGrid * kViewGrid, 0);
    double depth_sum = 0;
    int depth_count = 0;
    for (int r = 0; r < forward.height; ++r)
        for (int c = 0; c < forward.width; ++c) {
            int u = std::min(r * kViewGrid / forward.height, kViewGrid - 1);
            int v = std::min(c * kViewGrid / forward.width, kViewGrid - 1);
            const FeatureVec& f = forward.at(r, c);
            if (!feat_is_zero(f)) {
                for (int i = 0; i < kFeatureDim; ++i) {
                    fwd[i] += f[i];
                    blocks[u * kViewGrid + v][i] += f[i];
                }
                ++valid;
                ++block_count[u * kViewGrid + v];
            }
            if (forward_depth && forward_depth->at(r, c) > 0) {
                block_depth[u * kViewGrid + v] += forward_depth->at(r, c);
                ++block_depth_count[u * kViewGrid + v];
                depth_sum += forward_depth->at(r, c);
                ++depth_count;
            }
        }
    if (valid > 0) {
        feat_normalize(fwd);
        pano.slots[0] = fwd;
        pano.coverage[0] = 1.0;
        for (int b = 0; b < kViewGrid * kViewGrid; ++b) {
            if (block_count[b] > 0) {
                feat_normalize(blocks[b]);
                pano.regions[0][b] = blocks[b];
            }
            if (block_depth_count[b] > 0)
                pano.region_depths[0][b] = block_depth[b] / block_depth_count[b];
        }
        if (depth_count > 0) pano.slot_depth[0] = depth_sum / depth_count;
    }

    // The rendered slots share the camera position, so the view-independent
    // distance cull over the voxel map runs once for all eleven of them.
    PanoCull culled;
    const bool share_cull = model.kind == FieldKind::kAnalytic && cloud.size() > 0;
    if (share_cull) {
        const double diag = cloud.voxel_size() * std::sqrt(3.0);
        const double r_cull = std::max(cfg.knn_radius, 1.5 * cfg.voxel_size) + 1e-9;
        const Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
        culled = cull_by_distance(cloud, origin, distance_cull_limit(cam, cfg, r_cull, diag),
                                  diag);
    }
    for (int slot = 1; slot < kPanoramaSlots; ++slot) {
        Pose p = pose;
        p.yaw = normalize_yaw(pose.yaw + slot * kPi / 6);
        RenderedView view = render_view_impl(cloud, p, cam, cfg, model, {},
                                             share_cull ? &culled : nullptr);
        pano.slots[slot] = view.view_feature;
        pano.coverage[slot] = view.coverage;
        pano.slot_depth[slot] = view.expected_depth;
        for (int b = 0; b < kViewGrid * kViewGrid; ++b) {
            FeatureVec f = view.region_features[b];
            feat_normalize(f);
            pano.regions[slot][b] = f;
        }
        pano.region_depths[slot] = view.region_depths;
    }
    return pano;
}

void insert_view(FeatureCloud& cloud, const FeatureImage& feat, const DepthImage& depth,
                 const Pose& pose, const CameraIntrinsics& cam, uint32_t step,
                 const Config& cfg) {
    if (feat.width != depth.width || feat.height != depth.height)
        throw std::runtime_error("insert_view: image shapes differ");
    const Vec3 origin{pose.x, pose.y, pose.z + cfg.camera_height};
    const int stride = std::max(1, cfg.insert_stride);
    for (int r = 0; r < depth.height; r += stride)
        for (int c = 0; c < depth.width; c += stride) {
            float d = depth.at(r, c);
            if (d <= 0) continue;
            const FeatureVec& f = feat.at(r, c);
            if (feat_is_zero(f)) continue;
            Vec3 dir = pixel_ray(cam, pose, r, c, cfg);
            cloud.insert(origin + dir * d, f, step);
        }
}

}  // namespace panonav
