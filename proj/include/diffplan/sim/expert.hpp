#pragma once

#include <cmath>
#include <optional>

#include "diffplan/core/types.hpp"
#include "diffplan/sim/world.hpp"

namespace diffplan::sim {

struct ExpertParams {
    double cruise_speed = 7.0;
    double idm_headway = 1.2;
    double idm_min_gap = 3.0;
    double idm_accel = 3.0;
    double idm_brake = 2.5;
    double lookahead_min = 4.0;
    double lookahead_gain = 0.6;
    double conflict_margin = 2.5;  // seconds of separation demanded at crossings
    double sim_dt = 0.05;
};

namespace detail {

// distance (along the route) to the nearest constraint the privileged expert
// must brake for: leads near the route path, non-green ego stoplines, and
// predicted crossing-agent conflicts
struct Constraint {
    double gap = 1e9;   // meters of free driving ahead
    double speed = 0.0; // constraint's own speed (0 for lights/conflicts)
};

inline Constraint nearest_constraint(const WorldState& w, const ExpertParams& p) {
    Constraint c;
    const Polyline& path = w.route_path();
    const double ego_s = w.raw_s;
    const double ego_half = w.ego_params.length * 0.5;

    // vehicles on or laterally near the route path ahead of us
    for (const auto& a : w.agents) {
        const Pose ap = a.pose(*w.map);
        auto [s_a, lat] = path.project(ap.position(), std::max(0.0, ego_s - 5.0),
                                       std::min(path.length(), ego_s + 80.0));
        if (std::abs(lat) > w.map->lane_width * 0.45 + a.half_width) continue;
        const double d = s_a - ego_s - ego_half - a.half_length;
        if (d > -1.0 && d < c.gap) {
            c.gap = std::max(0.0, d);
            c.speed = a.kind == AgentKind::vehicle && a.path_id == w.route.path_id ? a.speed : 0.0;
        }
    }

    // non-green stoplines ahead on the ego path
    for (const auto& sl : w.map->stoplines) {
        if (sl.path_id != w.route.path_id || sl.s <= ego_s) continue;
        const LightPhase ph = sl.light_id >= 0 ? w.light_phase(sl.light_id)
                                               : LightPhase::red;  // stop signs handled as red
        bool must_stop = ph != LightPhase::green;
        if (ph == LightPhase::yellow) {
            // pass on yellow when a comfortable stop is no longer possible
            const double d = sl.s - ego_s;
            must_stop = d > w.ego.speed * w.ego.speed / (2.0 * p.idm_brake) + 2.0;
        }
        if (must_stop) {
            const double d = sl.s - ego_s - ego_half;
            if (d < c.gap) {
                c.gap = std::max(0.0, d);
                c.speed = 0.0;
            }
        }
    }

    // crossing agents: privileged time-window check at path intersections
    for (const auto& a : w.agents) {
        if (!a.active || a.path_id == w.route.path_id || a.speed < 0.3) continue;
        const auto& ap = w.map->paths[static_cast<std::size_t>(a.path_id)];
        // conflict point: where the agent path comes close to the route path
        auto [s_on_route, lat] = path.project(ap.pos_at(ap.length() * 0.5), 0.0, path.length());
        // refine around the agent's own trajectory: sample its future positions
        for (double t = 0.0; t <= 6.0; t += 0.5) {
            const double sa = a.s + a.speed * t;
            if (sa > ap.length()) break;
            auto [s_r, lat_r] = path.project(ap.pos_at(sa), std::max(0.0, ego_s - 5.0),
                                             std::min(path.length(), ego_s + 60.0));
            if (std::abs(lat_r) > w.map->lane_width * 0.5 + a.half_length) continue;
            const double d = s_r - ego_s - ego_half;
            if (d < 0.5) continue;
            // ego arrival time at the conflict if undisturbed
            const double v = std::max(w.ego.speed, 1.0);
            const double t_ego = d / v;
            if (std::abs(t_ego - t) < p.conflict_margin) {
                const double stop_d = std::max(0.0, d - 3.0);
                if (stop_d < c.gap) {
                    c.gap = stop_d;
                    c.speed = 0.0;
                }
                break;
            }
        }
        (void)s_on_route;
        (void)lat;
    }
    return c;
}

inline double idm_accel(double v, double v0, const Constraint& c, const ExpertParams& p) {
    const double dv = v - c.speed;
    const double s_star =
        p.idm_min_gap + std::max(0.0, v * p.idm_headway + v * dv / (2.0 * std::sqrt(p.idm_accel * p.idm_brake)));
    const double frac = c.gap > 0.05 ? s_star / c.gap : 20.0;
    return p.idm_accel * (1.0 - std::pow(v / std::max(0.1, v0), 4) - frac * frac);
}

}  // namespace detail

// privileged rule-based control: pure-pursuit steering toward the route
// centerline plus IDM speed control against ground-truth constraints
inline Control expert_control(const WorldState& w, const ExpertParams& p = {}) {
    const Polyline& path = w.route_path();
    const double lookahead = std::max(p.lookahead_min, p.lookahead_gain * w.ego.speed + 2.0);
    const double s_target = std::min(w.raw_s + lookahead, path.length());
    const Vector2d target = path.pos_at(s_target);
    const Vector2d local = w.ego.pose.to_local(target);
    const double alpha = std::atan2(local.y(), std::max(0.5, local.x()));
    const double steer_angle = std::atan2(2.0 * w.ego_params.wheelbase * std::sin(alpha), lookahead);
    const double steer = steer_angle / w.ego_params.max_steer_rad;

    const detail::Constraint c = detail::nearest_constraint(w, p);
    const double accel = detail::idm_accel(w.ego.speed, p.cruise_speed, c, p);
    if (accel >= 0.0)
        return Control::clamped(steer, accel / w.ego_params.max_accel, 0.0);
    return Control::clamped(steer, 0.0, -accel / w.ego_params.max_brake);
}

struct ExpertPlanResult {
    Trajectory trajectory;  // ego frame of the query state
    bool route_exhausted = false;
};

// The 8-waypoint, 2 s trajectory the expert will drive: obtained by rolling
// the full world forward under expert control (the expert is privileged, so
// simulating scripted agents ahead is exactly its information advantage).
inline ExpertPlanResult expert_plan(const WorldState& w, const ExpertParams& p = {}) {
    ExpertPlanResult out;
    if (w.raw_s >= w.route.end_s - 0.5) {
        out.route_exhausted = true;
        return out;  // all-zero stopping profile at the final target point
    }
    WorldState sim = w;
    const Pose origin = w.ego.pose;
    const int ticks_per_wp = std::max(1, static_cast<int>(std::lround(kWaypointDt / p.sim_dt)));
    for (int i = 0; i < kNumWaypoints; ++i) {
        for (int t = 0; t < ticks_per_wp; ++t) sim = step_world(sim, expert_control(sim, p), p.sim_dt);
        const Vector2d local = origin.to_local(sim.ego.pose.position());
        out.trajectory.wp(i, 0) = local.x();
        out.trajectory.wp(i, 1) = local.y();
    }
    return out;
}

}  // namespace diffplan::sim
