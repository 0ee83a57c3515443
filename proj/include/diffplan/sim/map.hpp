#pragma once

#include <nlohmann/json.hpp>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffplan/sim/geometry.hpp"

namespace diffplan::sim {

using json = nlohmann::json;

struct TrafficLightDef {
    int id = 0;
    Vector2d position{0, 0};  // visualization anchor
    double green_s = 6.0;
    double yellow_s = 1.0;
    double red_s = 7.0;
    double offset = 0.0;  // base phase shift; episodes add a seeded offset

    double cycle() const { return green_s + yellow_s + red_s; }
};

// stopline on a path, controlled by a light (light_id >= 0) or a stop sign
struct Stopline {
    int path_id = 0;
    double s = 0.0;
    int light_id = -1;
    bool stop_sign = false;
};

// regions used by the uncertainty-localization analysis
struct Zone {
    Vector2d center{0, 0};
    double radius = 10.0;
    std::string kind;  // "intersection" | "bend" | "trigger"
};

struct LaneMap {
    int version = 1;
    std::string name;
    double lane_width = 4.0;
    std::vector<Polyline> paths;
    std::vector<Stopline> stoplines;
    std::vector<TrafficLightDef> lights;
    std::vector<Zone> zones;

    bool drivable(const Vector2d& p) const {
        for (const auto& path : paths)
            if (path.distance_to(p) <= lane_width * 0.5) return true;
        return false;
    }

    const TrafficLightDef* light(int id) const {
        for (const auto& l : lights)
            if (l.id == id) return &l;
        return nullptr;
    }

    bool inside_zone(const Vector2d& p) const {
        for (const auto& z : zones)
            if ((p - z.center).norm() <= z.radius) return true;
        return false;
    }
};

// A driving mission: a span of one path plus sparse target points along it.
// Scenario triggers activate when ego progress passes their arc-length.
struct ScenarioTriggerDef {
    std::string kind;  // lead_brake | crossing_traffic | red_light_runner | lane_merge
    double at_s = 0.0;
    json params = json::object();
};

struct Route {
    int id = 0;
    int path_id = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    std::vector<double> tp_s;  // arc-lengths of target points on the path
    std::vector<ScenarioTriggerDef> triggers;

    double length() const { return end_s - start_s; }
};

inline Route make_route(const LaneMap& map, int id, int path_id, double start_s, double end_s,
                        double tp_spacing = 15.0) {
    const auto& path = map.paths.at(static_cast<std::size_t>(path_id));
    // routes leave runway past their end so episodes can drive through the finish
    if (!(end_s > start_s) || end_s > path.length() - 10.0 + 1e-9)
        throw std::invalid_argument("route span outside path (need 10 m runway after end)");
    Route r;
    r.id = id;
    r.path_id = path_id;
    r.start_s = start_s;
    r.end_s = end_s;
    for (double s = start_s + tp_spacing; s < end_s - 1e-9; s += tp_spacing) r.tp_s.push_back(s);
    r.tp_s.push_back(end_s);
    return r;
}

// ---------------------------------------------------------------------------
// built-in desk maps

inline LaneMap build_straight_map() {
    LaneMap m;
    m.name = "straight";
    m.paths.emplace_back(std::vector<Vector2d>{{0, 0}, {240, 0}});
    return m;
}

inline LaneMap build_cross_map() {
    LaneMap m;
    m.name = "cross";
    m.paths.emplace_back(std::vector<Vector2d>{{0, 0}, {240, 0}});       // ego road, eastbound
    m.paths.emplace_back(std::vector<Vector2d>{{120, -60}, {120, 60}});  // crossing road, northbound
    m.lights.push_back({0, {116, -4}, 6.0, 1.0, 7.0, 0.0});
    m.lights.push_back({1, {124, -8}, 6.0, 1.0, 7.0, 7.0});  // roughly opposite phase
    m.stoplines.push_back({0, 112.0, 0, false});             // ego stopline 8 m before center
    m.stoplines.push_back({1, 52.0, 1, false});              // crosser stopline 8 m before center
    m.zones.push_back({{120, 0}, 14.0, "intersection"});
    return m;
}

inline LaneMap build_bend_map() {
    LaneMap m;
    m.name = "bend";
    std::vector<Vector2d> pts{{0, 0}, {70, 0}};
    append_arc(pts, {70, 25}, 25.0, -M_PI / 2.0, 0.0);  // left turn
    pts.push_back({95, 95});
    append_arc(pts, {120, 95}, 25.0, M_PI, M_PI / 2.0);  // right turn
    pts.push_back({190, 120});
    m.paths.emplace_back(std::move(pts));
    m.zones.push_back({{77, 18}, 16.0, "bend"});
    m.zones.push_back({{113, 102}, 16.0, "bend"});
    return m;
}

// held-out variants for the mini benchmark split
inline LaneMap build_cross_b_map() {
    LaneMap m;
    m.name = "cross_b";
    m.paths.emplace_back(std::vector<Vector2d>{{0, 0}, {260, 0}});
    m.paths.emplace_back(std::vector<Vector2d>{{150, 60}, {150, -60}});  // southbound crosser
    m.lights.push_back({0, {146, 4}, 5.0, 1.0, 8.0, 3.0});
    m.lights.push_back({1, {154, 8}, 5.0, 1.0, 8.0, 10.0});
    m.stoplines.push_back({0, 142.0, 0, false});
    m.stoplines.push_back({1, 52.0, 1, false});
    m.zones.push_back({{150, 0}, 14.0, "intersection"});
    return m;
}

inline LaneMap build_bend_b_map() {
    LaneMap m;
    m.name = "bend_b";
    std::vector<Vector2d> pts{{0, 0}, {60, 0}};
    append_arc(pts, {60, -22}, 22.0, M_PI / 2.0, 0.0);  // right turn
    pts.push_back({82, -80});
    append_arc(pts, {104, -80}, 22.0, M_PI, 3.0 * M_PI / 2.0);
    pts.push_back({180, -102});
    m.paths.emplace_back(std::move(pts));
    m.zones.push_back({{66, -16}, 15.0, "bend"});
    m.zones.push_back({{98, -86}, 15.0, "bend"});
    return m;
}

inline LaneMap build_map(const std::string& name) {
    if (name == "straight") return build_straight_map();
    if (name == "cross") return build_cross_map();
    if (name == "bend") return build_bend_map();
    if (name == "cross_b") return build_cross_b_map();
    if (name == "bend_b") return build_bend_b_map();
    throw std::invalid_argument("unknown map: " + name);
}

// ---------------------------------------------------------------------------
// serialization (versioned)

inline void to_json(json& j, const LaneMap& m) {
    j = json{{"version", m.version}, {"name", m.name}, {"lane_width", m.lane_width}};
    for (const auto& p : m.paths) {
        json pts = json::array();
        for (const auto& v : p.points()) pts.push_back({v.x(), v.y()});
        j["paths"].push_back(pts);
    }
    j["stoplines"] = json::array();
    for (const auto& s : m.stoplines)
        j["stoplines"].push_back({{"path", s.path_id}, {"s", s.s}, {"light", s.light_id},
                                  {"stop_sign", s.stop_sign}});
    j["lights"] = json::array();
    for (const auto& l : m.lights)
        j["lights"].push_back({{"id", l.id},
                               {"pos", {l.position.x(), l.position.y()}},
                               {"green", l.green_s},
                               {"yellow", l.yellow_s},
                               {"red", l.red_s},
                               {"offset", l.offset}});
    j["zones"] = json::array();
    for (const auto& z : m.zones)
        j["zones"].push_back({{"center", {z.center.x(), z.center.y()}}, {"radius", z.radius},
                              {"kind", z.kind}});
}

inline void from_json(const json& j, LaneMap& m) {
    const int version = j.at("version").get<int>();
    if (version != 1) throw std::runtime_error("unsupported map version");
    m.version = version;
    j.at("name").get_to(m.name);
    j.at("lane_width").get_to(m.lane_width);
    m.paths.clear();
    for (const auto& pts : j.at("paths")) {
        std::vector<Vector2d> v;
        for (const auto& p : pts) v.emplace_back(p[0].get<double>(), p[1].get<double>());
        m.paths.emplace_back(std::move(v));
    }
    m.stoplines.clear();
    if (j.contains("stoplines"))
        for (const auto& s : j["stoplines"])
            m.stoplines.push_back({s.at("path").get<int>(), s.at("s").get<double>(),
                                   s.at("light").get<int>(), s.at("stop_sign").get<bool>()});
    m.lights.clear();
    if (j.contains("lights"))
        for (const auto& l : j["lights"])
            m.lights.push_back({l.at("id").get<int>(),
                                {l.at("pos")[0].get<double>(), l.at("pos")[1].get<double>()},
                                l.at("green").get<double>(),
                                l.at("yellow").get<double>(),
                                l.at("red").get<double>(),
                                l.at("offset").get<double>()});
    m.zones.clear();
    if (j.contains("zones"))
        for (const auto& z : j["zones"])
            m.zones.push_back({{z.at("center")[0].get<double>(), z.at("center")[1].get<double>()},
                               z.at("radius").get<double>(),
                               z.at("kind").get<std::string>()});
}

}  // namespace diffplan::sim
