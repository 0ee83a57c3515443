#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffplan/control/control_types.hpp"
#include "diffplan/core/rng.hpp"
#include "diffplan/sim/map.hpp"

namespace diffplan::sim {

struct BicycleParams {
    double wheelbase = 2.5;
    double max_steer_rad = 35.0 * M_PI / 180.0;
    double max_speed = 15.0;
    double max_accel = 3.0;
    double max_brake = 8.0;
    double coast_decel = 0.3;  // rolling resistance when off-throttle
    double length = 4.5;
    double width = 2.0;
};

struct VehicleState {
    Pose pose;
    double speed = 0.0;
};

inline VehicleState step_bicycle(const VehicleState& v, const Control& c_in,
                                 const BicycleParams& p, double dt) {
    const Control c = Control::clamped(c_in.steer, c_in.throttle, c_in.brake);
    double accel = c.throttle * p.max_accel - c.brake * p.max_brake;
    if (c.throttle <= 0.0 && v.speed > 0.0) accel -= p.coast_decel;
    VehicleState out = v;
    out.speed = std::clamp(v.speed + accel * dt, 0.0, p.max_speed);
    const double steer_angle = c.steer * p.max_steer_rad;
    out.pose.yaw = wrap_angle(v.pose.yaw + (v.speed / p.wheelbase) * std::tan(steer_angle) * dt);
    out.pose.x += out.speed * std::cos(out.pose.yaw) * dt;
    out.pose.y += out.speed * std::sin(out.pose.yaw) * dt;
    return out;
}

// ---------------------------------------------------------------------------

enum class LightPhase { green, yellow, red };

struct LightRuntime {
    TrafficLightDef def;
    double episode_offset = 0.0;
    LightPhase forced = LightPhase::green;
    double forced_until = -1.0;  // absolute clock; < 0 means no override

    LightPhase phase_at(double t) const {
        if (forced_until >= 0.0 && t < forced_until) return forced;
        double u = std::fmod(t + def.offset + episode_offset, def.cycle());
        if (u < 0) u += def.cycle();
        if (u < def.green_s) return LightPhase::green;
        if (u < def.green_s + def.yellow_s) return LightPhase::yellow;
        return LightPhase::red;
    }
};

enum class AgentKind { vehicle, pedestrian, fixed_obstacle };

// Scripted traffic participant moving along a map path.
struct Agent {
    int id = 0;
    AgentKind kind = AgentKind::vehicle;
    int path_id = 0;
    double s = 0.0;
    double speed = 0.0;
    double target_speed = 0.0;
    double accel = 2.0;
    bool obeys_lights = true;
    bool active = true;       // scenario actors may wait for activation
    double half_length = 2.25;
    double half_width = 1.0;
    // scripted braking (lead_brake)
    double brake_decel = 0.0;     // > 0 while a braking command is active
    double hold_until = -1.0;     // stay stopped until this clock, then resume

    Pose pose(const LaneMap& map) const {
        const auto& path = map.paths[static_cast<std::size_t>(path_id)];
        Vector2d p = path.pos_at(s);
        return {p.x(), p.y(), path.heading_at(s)};
    }

    OrientedBox footprint(const LaneMap& map) const {
        return {pose(map), half_length, half_width};
    }
};

struct Event {
    double time = 0.0;
    std::string kind;  // collision_vehicle | collision_pedestrian | collision_static |
                       // red_light | stop_sign | route_deviation | block | scenario_trigger
    Vector2d position{0, 0};
    std::string detail;
};

struct ScenarioInstance {
    ScenarioTriggerDef def;
    std::vector<int> agent_ids;
    bool activated = false;
    double activation_time = -1.0;
};

struct WorldState {
    std::shared_ptr<const LaneMap> map;
    Route route;
    BicycleParams ego_params;
    VehicleState ego;
    double raw_s = 0.0;     // current projection onto the route path
    double progress = 0.0;  // monotone distance achieved from route start
    std::vector<Agent> agents;
    std::vector<LightRuntime> lights;
    std::vector<ScenarioInstance> scenarios;
    double clock = 0.0;
    std::uint64_t seed = 0;
    std::vector<Event> events;
    std::vector<int> contacts;  // agent ids currently overlapping the ego
    bool route_finished = false;
    bool deviated = false;

    const Polyline& route_path() const { return map->paths[static_cast<std::size_t>(route.path_id)]; }

    LightPhase light_phase(int light_id) const {
        for (const auto& l : lights)
            if (l.def.id == light_id) return l.phase_at(clock);
        return LightPhase::green;
    }

    double completion() const {
        return std::clamp(progress / route.length(), 0.0, 1.0);
    }

    OrientedBox ego_box() const {
        return {ego.pose, ego_params.length * 0.5, ego_params.width * 0.5};
    }
};

// ---------------------------------------------------------------------------
// scenario scripts

inline ScenarioTriggerDef spawn_scenario(const std::string& kind, double at_s,
                                         json params = json::object()) {
    static const std::vector<std::string> kinds{"lead_brake", "crossing_traffic",
                                                "red_light_runner", "lane_merge"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw std::invalid_argument("unknown scenario kind: " + kind);
    ScenarioTriggerDef def;
    def.kind = kind;
    def.at_s = at_s;
    def.params = std::move(params);
    return def;
}

namespace detail {

inline double jittered(const json& params, const std::string& key, double fallback, Rng& rng) {
    const double base = params.value(key, fallback);
    const double jitter = params.value(key + "_jitter", 0.0);
    return jitter > 0.0 ? base + rng.uniform(-jitter, jitter) : base;
}

}  // namespace detail

// Builds the initial world for (map, route, seed): seeds light phases, spawns
// scenario actors in their pre-trigger placement, and positions the ego at
// the route start.
inline WorldState make_world(std::shared_ptr<const LaneMap> map, const Route& route,
                             std::uint64_t seed, double initial_speed = 0.0) {
    WorldState w;
    w.map = std::move(map);
    w.route = route;
    w.seed = seed;

    const Polyline& path = w.route_path();
    Vector2d start = path.pos_at(route.start_s);
    w.ego.pose = {start.x(), start.y(), path.heading_at(route.start_s)};
    w.ego.speed = initial_speed;
    w.raw_s = route.start_s;

    Rng light_rng = derive_rng(seed, "lights");
    for (const auto& def : w.map->lights) {
        LightRuntime lr;
        lr.def = def;
        lr.episode_offset = light_rng.uniform(0.0, def.cycle());
        w.lights.push_back(lr);
    }

    int next_agent_id = 1;
    int trigger_idx = 0;
    for (const auto& trig : route.triggers) {
        Rng rng = derive_rng(seed, "scenario", {static_cast<std::uint64_t>(trigger_idx++)});
        ScenarioInstance inst;
        inst.def = trig;
        const json& P = trig.params;

        if (trig.kind == "lead_brake") {
            Agent lead;
            lead.id = next_agent_id++;
            lead.path_id = route.path_id;
            lead.s = trig.at_s + detail::jittered(P, "gap", 30.0, rng);
            lead.speed = detail::jittered(P, "speed", 6.0, rng);
            lead.target_speed = lead.speed;
            lead.brake_decel = 0.0;
            lead.obeys_lights = P.value("obeys_lights", false);
            inst.agent_ids.push_back(lead.id);
            w.agents.push_back(lead);
        } else if (trig.kind == "crossing_traffic" || trig.kind == "red_light_runner") {
            Agent crosser;
            crosser.id = next_agent_id++;
            crosser.path_id = P.value("path", 1);
            const bool walker = P.value("actor", std::string("vehicle")) == "pedestrian";
            if (walker) {
                crosser.kind = AgentKind::pedestrian;
                crosser.half_length = 0.4;
                crosser.half_width = 0.4;
            }
            crosser.target_speed = detail::jittered(P, "speed", walker ? 1.5 : 5.0, rng);
            crosser.speed = 0.0;
            crosser.active = false;  // starts moving on activation
            // placed so that it reaches the conflict area delay seconds after
            // activation when driving at target speed
            const double conflict_s = P.value("conflict_s", 52.0);
            const double delay = detail::jittered(P, "delay", 2.0, rng);
            crosser.s = std::max(0.0, conflict_s - crosser.target_speed * delay);
            crosser.obeys_lights = false;  // scripted priority crossing; window is exact
            inst.agent_ids.push_back(crosser.id);
            w.agents.push_back(crosser);
        } else if (trig.kind == "lane_merge") {
            // cut-in approximation: becomes active on the ego path at a short gap
            Agent merger;
            merger.id = next_agent_id++;
            merger.path_id = route.path_id;
            merger.s = trig.at_s;  // repositioned at activation
            merger.speed = 0.0;
            merger.target_speed = detail::jittered(P, "speed", 4.0, rng);
            merger.active = false;
            inst.agent_ids.push_back(merger.id);
            w.agents.push_back(merger);
        }
        w.scenarios.push_back(std::move(inst));
    }
    return w;
}

namespace detail {

inline Agent* find_agent(WorldState& w, int id) {
    for (auto& a : w.agents)
        if (a.id == id) return &a;
    return nullptr;
}

inline void activate_scenario(WorldState& w, ScenarioInstance& inst) {
    inst.activated = true;
    inst.activation_time = w.clock;
    const json& P = inst.def.params;
    Rng rng = derive_rng(w.seed, "activate", {static_cast<std::uint64_t>(&inst - w.scenarios.data())});

    if (inst.def.kind == "lead_brake") {
        if (Agent* lead = find_agent(w, inst.agent_ids.at(0))) {
            lead->brake_decel = jittered(P, "decel", 6.0, rng);
            lead->hold_until = w.clock + jittered(P, "hold", 4.0, rng);
        }
    } else if (inst.def.kind == "crossing_traffic" || inst.def.kind == "red_light_runner") {
        if (Agent* crosser = find_agent(w, inst.agent_ids.at(0))) {
            crosser->active = true;
            crosser->speed = crosser->target_speed;  // scripted on-rails entry
            if (inst.def.kind == "red_light_runner") {
                // force the crosser's light red while it enters
                const int light_id = P.value("light", 1);
                for (auto& l : w.lights)
                    if (l.def.id == light_id) {
                        l.forced = LightPhase::red;
                        l.forced_until = w.clock + P.value("window", 6.0);
                    }
            }
        }
    } else if (inst.def.kind == "lane_merge") {
        if (Agent* merger = find_agent(w, inst.agent_ids.at(0))) {
            merger->active = true;
            merger->s = w.raw_s + P.value("gap", 12.0);
            merger->speed = P.value("entry_speed", 3.0);
        }
    }
    Vector2d pos = w.route_path().pos_at(inst.def.at_s);
    w.events.push_back({w.clock, "scenario_trigger", pos, inst.def.kind});
}

inline void step_agent(WorldState& w, Agent& a, double dt) {
    if (a.kind == AgentKind::fixed_obstacle) return;
    const auto& path = w.map->paths[static_cast<std::size_t>(a.path_id)];
    if (!a.active) return;

    if (a.kind == AgentKind::pedestrian) {
        a.s = std::min(a.s + a.target_speed * dt, path.length());
        a.speed = a.target_speed;
        return;
    }

    double accel;
    if (a.brake_decel > 0.0) {
        accel = -a.brake_decel;
        if (a.speed <= 1e-9 && w.clock >= a.hold_until) a.brake_decel = 0.0;  // resume
    } else {
        // IDM toward target speed with stopline and lead constraints
        const double v0 = std::max(0.1, a.target_speed);
        double gap = 1e9, dv = 0.0;
        if (a.obeys_lights) {
            for (const auto& sl : w.map->stoplines) {
                if (sl.path_id != a.path_id || sl.s <= a.s) continue;
                const LightPhase ph = sl.light_id >= 0 ? w.light_phase(sl.light_id) : LightPhase::red;
                if (ph != LightPhase::green) {
                    const double d = sl.s - a.s - a.half_length;
                    if (d < gap) {
                        gap = d;
                        dv = a.speed;
                    }
                }
            }
        }
        for (const auto& other : w.agents) {
            if (other.id == a.id || other.path_id != a.path_id || !other.active) continue;
            if (other.s <= a.s) continue;
            const double d = other.s - a.s - a.half_length - other.half_length;
            if (d < gap) {
                gap = d;
                dv = a.speed - other.speed;
            }
        }
        const double s_star = 2.0 + a.speed * 1.0 + a.speed * dv / (2.0 * std::sqrt(3.0 * 4.0));
        const double frac = gap > 0.05 ? s_star / gap : 10.0;
        accel = 3.0 * (1.0 - std::pow(a.speed / v0, 4) - frac * frac);
        accel = std::clamp(accel, -8.0, a.accel);
    }
    a.speed = std::clamp(a.speed + accel * dt, 0.0, 20.0);
    a.s = std::min(a.s + a.speed * dt, path.length());
}

}  // namespace detail

// Advances the world by dt under the given ego control. Scripted agents and
// light phases evolve deterministically; collision, red-light and deviation
// events are appended to the event log (one collision event per contact
// episode with a given agent).
inline WorldState step_world(WorldState w, const Control& control, double dt) {
    if (!(dt > 0.0) || dt > 0.25) throw std::invalid_argument("step_world: dt must be in (0, 0.25]");
    const double old_raw = w.raw_s;

    for (auto& inst : w.scenarios)
        if (!inst.activated && w.raw_s >= inst.def.at_s) detail::activate_scenario(w, inst);

    for (auto& a : w.agents) detail::step_agent(w, a, dt);
    w.ego = step_bicycle(w.ego, control, w.ego_params, dt);
    w.clock += dt;

    // progress via a local projection window, so winding paths cannot snap
    const Polyline& path = w.route_path();
    auto [s_now, lateral] = path.project(w.ego.pose.position(), std::max(0.0, old_raw - 10.0),
                                         std::min(path.length(), old_raw + 15.0));
    w.raw_s = s_now;
    w.progress = std::max(w.progress, s_now - w.route.start_s);

    // ego stopline crossings
    for (const auto& sl : w.map->stoplines) {
        if (sl.path_id != w.route.path_id) continue;
        if (old_raw < sl.s && w.raw_s >= sl.s) {
            if (sl.light_id >= 0 && w.light_phase(sl.light_id) == LightPhase::red)
                w.events.push_back({w.clock, "red_light", path.pos_at(sl.s), "stopline"});
            if (sl.stop_sign && w.ego.speed > 0.5)
                w.events.push_back({w.clock, "stop_sign", path.pos_at(sl.s), "rolled"});
        }
    }

    // collisions: one event per contact episode per agent
    const OrientedBox ego_box = w.ego_box();
    std::vector<int> now_touching;
    for (const auto& a : w.agents)
        if (boxes_overlap(ego_box, a.footprint(*w.map))) now_touching.push_back(a.id);
    for (int id : now_touching) {
        if (std::find(w.contacts.begin(), w.contacts.end(), id) == w.contacts.end()) {
            const Agent* a = detail::find_agent(w, id);
            const char* kind = a->kind == AgentKind::pedestrian ? "collision_pedestrian"
                               : a->kind == AgentKind::fixed_obstacle ? "collision_static"
                                                                      : "collision_vehicle";
            w.events.push_back({w.clock, kind, a->pose(*w.map).position(),
                                "agent " + std::to_string(id)});
        }
    }
    w.contacts = std::move(now_touching);

    if (std::abs(lateral) > 10.0 && !w.deviated) {
        w.deviated = true;
        w.events.push_back({w.clock, "route_deviation", w.ego.pose.position(), ""});
    }
    if (w.raw_s >= w.route.end_s - 0.5) w.route_finished = true;
    return w;
}

}  // namespace diffplan::sim
