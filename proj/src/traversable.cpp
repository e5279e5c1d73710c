#include "panonav/traversable.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace panonav {

TraversableMap gaussian_target(const std::vector<std::pair<int, int>>& waypoint_cells,
                               double sigma_cells, int size) {
    TraversableMap t(size);
    if (waypoint_cells.empty()) {
        t.warning = true;
        return t;
    }
    const double inv2s2 = 1.0 / (2.0 * sigma_cells * sigma_cells);
    const double inv_k = 1.0 / waypoint_cells.size();
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            double sum = 0;
            for (const auto& [wr, wc] : waypoint_cells) {
                double d2 = double(r - wr) * (r - wr) + double(c - wc) * (c - wc);
                sum += std::exp(-d2 * inv2s2);
            }
            t.at(r, c) = static_cast<float>(std::min(1.0, sum * inv_k));
        }
    return t;
}

double traversable_loss(const TraversableMap& pred, const TraversableMap& gt) {
    if (pred.size != gt.size) throw std::runtime_error("traversable_loss: shape mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        double d = double(pred.values[i]) - gt.values[i];
        sum += d * d;
    }
    return sum / pred.values.size();
}

namespace {

// Exact Euclidean distance transform (Felzenszwalb & Huttenlocher), squared
// distances in cell units. f holds 0 at sites, +inf elsewhere.
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

std::vector<double> edt_squared(const std::vector<bool>& site, int size) {
    // Finite sentinel: infinities make the parabola-intersection NaN.
    const double inf = 1e12;
    std::vector<double> g(site.size());
    std::vector<double> col(size), out(size);
    for (int c = 0; c < size; ++c) {
        for (int r = 0; r < size; ++r) col[r] = site[r * size + c] ? 0.0 : inf;
        edt_1d(col, out);
        for (int r = 0; r < size; ++r) g[r * size + c] = out[r];
    }
    std::vector<double> row(size);
    std::vector<double> result(site.size());
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) row[c] = g[r * size + c];
        edt_1d(row, out);
        for (int c = 0; c < size; ++c) result[r * size + c] = out[c];
    }
    return result;
}

std::vector<bool> reachable_from_center(const EgoMaps& ego) {
    const int n = ego.size;
    std::vector<bool> reach(n * n, false);
    std::queue<int> q;
    int center = (n / 2) * n + n / 2;
    // The agent stands on its own cell even when it is unobserved.
    reach[center] = true;
    q.push(center);
    while (!q.empty()) {
        int i = q.front();
        q.pop();
        int r = i / n, c = i % n;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                int j = rr * n + cc;
                if (reach[j] || ego.occ_class(rr, cc) != Occ::kFree) continue;
                reach[j] = true;
                q.push(j);
            }
    }
    return reach;
}

}  // namespace

TraversableMap predict_traversable(const EgoMaps& ego, const TraversablePredictor& pred,
                                   const Config& cfg) {
    if (pred.kind == PredictorKind::kExternal) {
        if (!pred.external) throw std::runtime_error("external predictor not set");
        TraversableMap t = pred.external(ego);
        if (t.size != ego.size) throw std::runtime_error("external predictor shape mismatch");
        return t;
    }
    const int n = ego.size;
    TraversableMap t(n);

    std::vector<double> dist2;
    std::vector<bool> reach;
    if (pred.use_occupancy) {
        std::vector<bool> occupied(n * n, false);
        bool any = false;
        for (int i = 0; i < n * n; ++i) {
            occupied[i] = ego.occ_class(i / n, i % n) == Occ::kOccupied;
            any = any || occupied[i];
        }
        if (any) dist2 = edt_squared(occupied, n);
        reach = reachable_from_center(ego);
    }

    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (ego.is_void(r, c)) continue;  // score 0
            double score = 1.0;
            if (pred.use_occupancy) {
                if (ego.occ_class(r, c) == Occ::kOccupied || !reach[r * n + c]) {
                    t.at(r, c) = 0.f;
                    continue;
                }
                double clearance = 1.0;
                if (!dist2.empty())
                    clearance =
                        std::min(1.0, std::sqrt(dist2[r * n + c]) / cfg.clearance_saturation_cells);
                score *= clearance;
            }
            if (pred.use_semantic) {
                int s = ego.sem_argmax(r, c);
                if (s == kDoor || s == kStairs) score = std::min(1.0, score * cfg.landmark_boost);
            }
            t.at(r, c) = static_cast<float>(score);
        }
    return t;
}

int cell_sector(int row, int col, int size) {
    int half = size / 2;
    double angle = std::atan2(col - half, row - half);  // CCW from +row (heading)
    if (angle < 0) angle += 2 * kPi;
    int sector = static_cast<int>(angle / (kPi / 6));
    return std::min(sector, 11);
}

std::vector<Waypoint> extract_waypoints(const TraversableMap& t, const EgoMaps& ego, int k,
                                        double min_dist, const Config& cfg) {
    const int n = t.size;
    const int half = n / 2;
    const double res = cfg.map_resolution;
    std::vector<Waypoint> best(12);
    std::vector<bool> found(12, false);
    const int excl_cells = static_cast<int>(std::ceil(cfg.exclusion_radius / res));

    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            float v = t.at(r, c);
            if (v <= 0.f) continue;
            double dist = std::hypot(double(r - half), double(c - half)) * res;
            if (dist < min_dist) continue;
            if (ego.occ_class(r, c) == Occ::kOccupied) continue;
            if (excl_cells > 0) {
                bool blocked = false;
                for (int dr = -excl_cells; dr <= excl_cells && !blocked; ++dr)
                    for (int dc = -excl_cells; dc <= excl_cells && !blocked; ++dc) {
                        int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                        if (std::hypot(double(dr), double(dc)) * res > cfg.exclusion_radius)
                            continue;
                        blocked = ego.occ_class(rr, cc) == Occ::kOccupied;
                    }
                if (blocked) continue;
            }
            int sector = cell_sector(r, c, n);
            // Higher score wins; equal scores go to the farther cell (pushes
            // waypoints to the frontier when the map saturates), then
            // row-major order.
            if (!found[sector] || v > best[sector].score ||
                (v == best[sector].score && dist > best[sector].distance)) {
                double angle = std::atan2(double(c - half), double(r - half));
                best[sector] = {sector, angle, dist, r, c, double(v)};
                found[sector] = true;
            }
        }

    std::vector<Waypoint> winners;
    for (int s = 0; s < 12; ++s)
        if (found[s]) winners.push_back(best[s]);
    // Top-k by score; ties by smaller sector, then smaller distance.
    std::sort(winners.begin(), winners.end(), [](const Waypoint& a, const Waypoint& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.sector != b.sector) return a.sector < b.sector;
        return a.distance < b.distance;
    });
    if (static_cast<int>(winners.size()) > k) winners.resize(k);
    return winners;
}

}  // namespace panonav
