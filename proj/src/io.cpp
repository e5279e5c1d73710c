#include "panonav/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace panonav {

namespace {

std::ofstream open_binary(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    return out;
}

}  // namespace

void write_depth_pgm(const DepthImage& img, const std::string& path) {
    auto out = open_binary(path);
    out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
    for (float d : img.data) {
        unsigned mm = std::min(65535u, static_cast<unsigned>(std::lround(d * 1000.0)));
        out.put(static_cast<char>(mm >> 8));
        out.put(static_cast<char>(mm & 0xff));
    }
}

void write_semantic_pgm(const SemanticImage& img, const std::string& path) {
    auto out = open_binary(path);
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), img.data.size());
}

void write_occupancy_pgm(const GlobalMaps& maps, const std::string& path) {
    auto out = open_binary(path);
    out << "P5\n" << maps.size << ' ' << maps.size << "\n255\n";
    for (Occ o : maps.occupancy) {
        char v = o == Occ::kVoid ? 0 : (o == Occ::kFree ? char(128) : char(255));
        out.put(v);
    }
    std::ofstream sidecar(path + ".meta");
    sidecar << "origin " << maps.origin.x << ' ' << maps.origin.y << "\nresolution "
            << maps.resolution << "\n";
}

void write_ego_pgms(const EgoMaps& ego, const std::string& occ_path,
                    const std::string& sem_path) {
    {
        auto out = open_binary(occ_path);
        out << "P5\n" << ego.size << ' ' << ego.size << "\n255\n";
        for (int r = 0; r < ego.size; ++r)
            for (int c = 0; c < ego.size; ++c) {
                Occ o = ego.occ_class(r, c);
                out.put(o == Occ::kVoid ? 0 : (o == Occ::kFree ? char(128) : char(255)));
            }
    }
    {
        auto out = open_binary(sem_path);
        out << "P5\n" << ego.size << ' ' << ego.size << "\n255\n";
        for (int r = 0; r < ego.size; ++r)
            for (int c = 0; c < ego.size; ++c) {
                int s = ego.sem_argmax(r, c);
                out.put(static_cast<char>(std::max(0, s)));
            }
    }
}

void write_traversable_pgm(const TraversableMap& t, const std::string& path) {
    auto out = open_binary(path);
    out << "P5\n" << t.size << ' ' << t.size << "\n255\n";
    for (float v : t.values)
        out.put(static_cast<char>(std::lround(std::clamp(v, 0.f, 1.f) * 255)));
}

std::string waypoints_to_csv(const std::vector<Waypoint>& wps) {
    std::ostringstream out;
    out << "sector,angle_rad,distance_m,row,col,score\n";
    for (const auto& w : wps)
        out << w.sector << ',' << w.angle << ',' << w.distance << ',' << w.row << ',' << w.col
            << ',' << w.score << '\n';
    return out.str();
}

std::string panorama_to_csv(const Panorama& pano) {
    std::ostringstream out;
    out << "slot,coverage";
    for (int i = 0; i < kFeatureDim; ++i) out << ",f" << i;
    out << '\n';
    for (int s = 0; s < kPanoramaSlots; ++s) {
        out << s << ',' << pano.coverage[s];
        for (int i = 0; i < kFeatureDim; ++i) out << ',' << pano.slots[s][i];
        out << '\n';
    }
    return out.str();
}

}  // namespace panonav
