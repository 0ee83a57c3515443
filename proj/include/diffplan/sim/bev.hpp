#pragma once

#include "diffplan/nn/observation.hpp"
#include "diffplan/sim/world.hpp"

namespace diffplan::sim {

struct BevConfig {
    int grid_size = 32;
    double cell_size = 0.5;
};

// next target point strictly ahead of the ego's route progress, in ego frame
inline Vector2d next_target_point(const WorldState& w, double min_ahead = 1.0) {
    const Polyline& path = w.route_path();
    double tp_s = w.route.end_s;
    for (double s : w.route.tp_s)
        if (s > w.raw_s + min_ahead) {
            tp_s = s;
            break;
        }
    return w.ego.pose.to_local(path.pos_at(tp_s));
}

// Rasterizes drivable area, agents and active (non-green) light stoplines
// into the ego-centered grid and bundles target point + speed.
inline Observation render_bev_occupancy(const WorldState& w, const BevConfig& cfg = {}) {
    Observation obs = Observation::zeros(cfg.grid_size, cfg.cell_size);
    obs.velocity = w.ego.speed;
    obs.target_point = next_target_point(w);

    const int G = cfg.grid_size;

    // stopline stripes: 1 m deep, lane wide, where the light is not green
    struct Stripe {
        OrientedBox box;
    };
    std::vector<Stripe> stripes;
    for (const auto& sl : w.map->stoplines) {
        const bool active = sl.stop_sign ||
                            (sl.light_id >= 0 && w.light_phase(sl.light_id) != LightPhase::green);
        if (!active) continue;
        const auto& path = w.map->paths[static_cast<std::size_t>(sl.path_id)];
        Vector2d pos = path.pos_at(sl.s);
        Stripe st;
        st.box.pose = {pos.x(), pos.y(), path.heading_at(sl.s)};
        st.box.half_length = 0.5;
        st.box.half_width = w.map->lane_width * 0.5;
        stripes.push_back(st);
    }

    for (int r = 0; r < G; ++r) {
        for (int c = 0; c < G; ++c) {
            const Vector2d world = w.ego.pose.to_world({obs.cell_x(r), obs.cell_y(c)});
            if (w.map->drivable(world)) obs.grid[kBevDrivable](r, c) = 1.0;
            for (const auto& st : stripes)
                if (st.box.contains(world)) obs.grid[kBevRedStopline](r, c) = 1.0;
        }
    }

    // agent footprints: iterate cells inside each footprint's bounding box
    for (const auto& a : w.agents) {
        const OrientedBox box = a.footprint(*w.map);
        const int ch = a.kind == AgentKind::pedestrian ? kBevPedestrians : kBevVehicles;
        const Vector2d center_local = w.ego.pose.to_local(box.pose.position());
        const double reach = std::hypot(box.half_length, box.half_width);
        const double half_span = G * cfg.cell_size * 0.5;
        if (std::abs(center_local.x()) > half_span + reach ||
            std::abs(center_local.y()) > half_span + reach)
            continue;
        for (int r = 0; r < G; ++r)
            for (int c = 0; c < G; ++c) {
                const Vector2d world = w.ego.pose.to_world({obs.cell_x(r), obs.cell_y(c)});
                if (box.contains(world)) obs.grid[static_cast<std::size_t>(ch)](r, c) = 1.0;
            }
    }
    return obs;
}

}  // namespace diffplan::sim
