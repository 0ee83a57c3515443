#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "diffplan/nn/train.hpp"
#include "diffplan/sim/bev.hpp"
#include "diffplan/sim/expert.hpp"

// Dataset file: "DPDS" magic + version + JSON header, then one length-prefixed
// binary record per frame (metadata, uint8 grid planes, float64 label), plus
// a JSON-lines sidecar index (<file>.idx.jsonl) with per-record offsets.
namespace diffplan::sim {

struct FrameRecord {
    std::int64_t frame_id = 0;
    int route_id = 0;
    std::uint64_t seed = 0;
    double t = 0.0;
    double ego_speed = 0.0;
    Pose ego_pose;
    Observation obs;
    TrajMat tau_gt = TrajMat::Zero();
};

struct DrivingDataset {
    int grid_size = 32;
    double cell_size = 0.5;
    std::string map_name;
    std::vector<FrameRecord> records;

    std::vector<nn::TrainSample> to_train_samples() const {
        std::vector<nn::TrainSample> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back({r.obs, r.tau_gt});
        return out;
    }
};

struct DatasetGenStats {
    int episodes = 0;
    int episodes_excluded = 0;  // expert infractions are not training data
    int frames = 0;
};

namespace detail {

template <typename T>
void put(std::string& buf, const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf.append(p, sizeof(T));
}

template <typename T>
T take(const char*& p, const char* end) {
    if (p + sizeof(T) > end) throw std::runtime_error("dataset: truncated record");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

}  // namespace detail

inline constexpr char kDatasetMagic[4] = {'D', 'P', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::string& path, const DrivingDataset& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("dataset: cannot open " + path);
    std::ofstream idx(path + ".idx.jsonl", std::ios::trunc);
    if (!idx) throw std::runtime_error("dataset: cannot open sidecar for " + path);

    out.write(kDatasetMagic, 4);
    const std::uint32_t ver = kDatasetVersion;
    out.write(reinterpret_cast<const char*>(&ver), 4);
    json header{{"version", kDatasetVersion},
                {"grid_size", ds.grid_size},
                {"cell_size", ds.cell_size},
                {"channels", kBevChannels},
                {"map", ds.map_name},
                {"records", ds.records.size()}};
    const std::string hs = header.dump();
    const std::uint64_t hl = hs.size();
    out.write(reinterpret_cast<const char*>(&hl), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    std::size_t i = 0;
    for (const auto& r : ds.records) {
        std::string buf;
        detail::put(buf, r.frame_id);
        detail::put(buf, static_cast<std::int32_t>(r.route_id));
        detail::put(buf, r.seed);
        detail::put(buf, r.t);
        detail::put(buf, r.ego_speed);
        detail::put(buf, r.ego_pose.x);
        detail::put(buf, r.ego_pose.y);
        detail::put(buf, r.ego_pose.yaw);
        detail::put(buf, r.obs.target_point.x());
        detail::put(buf, r.obs.target_point.y());
        detail::put(buf, r.obs.velocity);
        for (const auto& ch : r.obs.grid)
            for (int rr = 0; rr < ch.rows(); ++rr)
                for (int cc = 0; cc < ch.cols(); ++cc)
                    buf.push_back(static_cast<char>(
                        static_cast<unsigned char>(std::lround(ch(rr, cc) * 255.0))));
        for (int rr = 0; rr < kNumWaypoints; ++rr)
            for (int cc = 0; cc < 2; ++cc) detail::put(buf, r.tau_gt(rr, cc));

        const std::uint32_t len = static_cast<std::uint32_t>(buf.size());
        const auto offset = static_cast<std::uint64_t>(out.tellp());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));

        json line{{"i", i++},          {"offset", offset},  {"route", r.route_id},
                  {"seed", r.seed},    {"t", r.t},          {"speed", r.ego_speed},
                  {"frame", r.frame_id}};
        idx << line.dump() << "\n";
    }
    if (!out || !idx) throw std::runtime_error("dataset: write failed for " + path);
}

inline DrivingDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw std::runtime_error("dataset: bad magic in " + path);
    std::uint32_t ver;
    in.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kDatasetVersion) throw std::runtime_error("dataset: unsupported version");
    std::uint64_t hl;
    in.read(reinterpret_cast<char*>(&hl), 8);
    std::string hs(hl, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hl));
    json header = json::parse(hs);

    DrivingDataset ds;
    ds.grid_size = header.at("grid_size").get<int>();
    ds.cell_size = header.at("cell_size").get<double>();
    ds.map_name = header.value("map", "");
    const auto n = header.at("records").get<std::size_t>();
    ds.records.reserve(n);

    const int G = ds.grid_size;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t len;
        in.read(reinterpret_cast<char*>(&len), 4);
        if (!in) throw std::runtime_error("dataset: truncated file");
        std::string buf(len, '\0');
        in.read(buf.data(), len);
        const char* p = buf.data();
        const char* end = p + buf.size();

        FrameRecord r;
        r.frame_id = detail::take<std::int64_t>(p, end);
        r.route_id = detail::take<std::int32_t>(p, end);
        r.seed = detail::take<std::uint64_t>(p, end);
        r.t = detail::take<double>(p, end);
        r.ego_speed = detail::take<double>(p, end);
        r.ego_pose.x = detail::take<double>(p, end);
        r.ego_pose.y = detail::take<double>(p, end);
        r.ego_pose.yaw = detail::take<double>(p, end);
        r.obs = Observation::zeros(G, ds.cell_size);
        const double tx = detail::take<double>(p, end);
        const double ty = detail::take<double>(p, end);
        r.obs.target_point << tx, ty;
        r.obs.velocity = detail::take<double>(p, end);
        for (auto& ch : r.obs.grid)
            for (int rr = 0; rr < G; ++rr)
                for (int cc = 0; cc < G; ++cc)
                    ch(rr, cc) = static_cast<unsigned char>(detail::take<char>(p, end)) / 255.0;
        for (int rr = 0; rr < kNumWaypoints; ++rr)
            for (int cc = 0; cc < 2; ++cc) r.tau_gt(rr, cc) = detail::take<double>(p, end);
        ds.records.push_back(std::move(r));
    }
    return ds;
}

// Rolls the expert closed-loop over (route x seed), recording observations at
// the control rate and labeling each frame with the trajectory the expert
// actually drove over the following 2 s. Episodes with expert infractions are
// excluded and counted; training data stays infraction-free.
inline DatasetGenStats generate_dataset(const LaneMap& map, const std::vector<Route>& routes,
                                        const std::vector<std::uint64_t>& seeds, DrivingDataset& out,
                                        const ExpertParams& expert = {}, const BevConfig& bev = {},
                                        double record_hz = 4.0, double max_episode_s = 180.0) {
    auto shared_map = std::make_shared<const LaneMap>(map);
    out.grid_size = bev.grid_size;
    out.cell_size = bev.cell_size;
    out.map_name = map.name;
    DatasetGenStats stats;

    const double dt = expert.sim_dt;
    const int record_every = std::max(1, static_cast<int>(std::lround(1.0 / (record_hz * dt))));
    std::int64_t frame_counter = 0;

    for (const auto& route : routes) {
        for (std::uint64_t seed : seeds) {
            WorldState w = make_world(shared_map, route, seed);
            struct PendingFrame {
                FrameRecord rec;
                double t0;
            };
            std::vector<PendingFrame> pending;
            std::vector<std::pair<double, Pose>> trace;  // (t, ego pose)
            bool infraction = false;
            int tick = 0;

            while (!w.route_finished && w.clock < max_episode_s) {
                if (tick % record_every == 0) {
                    PendingFrame pf;
                    pf.t0 = w.clock;
                    pf.rec.frame_id = frame_counter++;
                    pf.rec.route_id = route.id;
                    pf.rec.seed = seed;
                    pf.rec.t = w.clock;
                    pf.rec.ego_speed = w.ego.speed;
                    pf.rec.ego_pose = w.ego.pose;
                    pf.rec.obs = render_bev_occupancy(w, bev);
                    pending.push_back(std::move(pf));
                }
                trace.emplace_back(w.clock, w.ego.pose);
                w = step_world(w, expert_control(w, expert), dt);
                ++tick;
                for (const auto& e : w.events)
                    if (e.kind.rfind("collision", 0) == 0) infraction = true;
                if (w.deviated) infraction = true;
            }
            // pad so frames near the end still get their 2 s of future
            for (double pad = 0.0; pad < kPlanHorizon + 2.0 * dt; pad += dt) {
                trace.emplace_back(w.clock, w.ego.pose);
                w = step_world(w, expert_control(w, expert), dt);
            }

            ++stats.episodes;
            if (infraction) {
                ++stats.episodes_excluded;
                continue;
            }

            // label: the driven pose trace resampled at the waypoint spacing
            for (auto& pf : pending) {
                bool complete = true;
                for (int i = 0; i < kNumWaypoints; ++i) {
                    const double want = pf.t0 + (i + 1) * kWaypointDt;
                    const Pose* best = nullptr;
                    for (const auto& [t, pose] : trace) {
                        if (t >= want - 1e-6) {
                            best = &pose;
                            break;
                        }
                    }
                    if (!best) {
                        complete = false;
                        break;
                    }
                    const Vector2d local = pf.rec.ego_pose.to_local(best->position());
                    pf.rec.tau_gt(i, 0) = local.x();
                    pf.rec.tau_gt(i, 1) = local.y();
                }
                if (complete) {
                    out.records.push_back(std::move(pf.rec));
                    ++stats.frames;
                }
            }
        }
    }
    return stats;
}

}  // namespace diffplan::sim
