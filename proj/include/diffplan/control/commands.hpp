#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "diffplan/core/rng.hpp"
#include "diffplan/core/types.hpp"

namespace diffplan::control {

// Per-candidate control commands plus their ensemble variances. Variances are
// population variances (divide by N); they are the uncertainty indicators.
struct CommandSet {
    std::vector<double> speeds;  // m/s
    std::vector<double> yaws;    // degrees, left positive
    double var_speed = 0.0;      // (m/s)^2
    double var_yaw = 0.0;        // deg^2
    bool aim_fallback = false;   // some candidate had no waypoint within maxdist

    int size() const { return static_cast<int>(speeds.size()); }
};

inline double population_variance(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(xs.size());
}

// Trajectory -> (desired speed, desired yaw) per candidate:
//   speed_i = 2 * |wp_1 - wp_3|            (the waypoints are 0.5 s apart)
//   aim     = farthest waypoint from the origin among those within maxdist
//   yaw_i   = atan2(y_aim, x_aim) in degrees
// With no waypoint inside maxdist the aim falls back to wp_0 (flagged).
inline CommandSet extract_commands(const TrajectoryEnsemble& ensemble, double maxdist = 3.0) {
    if (ensemble.candidates.empty()) throw std::invalid_argument("extract_commands: empty ensemble");
    if (!(maxdist > 0.0)) throw std::invalid_argument("extract_commands: maxdist must be positive");

    CommandSet cmds;
    cmds.speeds.reserve(ensemble.candidates.size());
    cmds.yaws.reserve(ensemble.candidates.size());
    for (const auto& cand : ensemble.candidates) {
        const TrajMat& wp = cand.wp;
        if (!wp.allFinite()) throw std::invalid_argument("extract_commands: non-finite trajectory");
        cmds.speeds.push_back(2.0 * (wp.row(1) - wp.row(3)).norm());

        int aim_idx = -1;
        double best = -1.0;
        for (int i = 0; i < wp.rows(); ++i) {
            const double d = wp.row(i).norm();
            if (d <= maxdist && d > best) {
                best = d;
                aim_idx = i;
            }
        }
        if (aim_idx < 0) {
            aim_idx = 0;
            cmds.aim_fallback = true;
        }
        cmds.yaws.push_back(std::atan2(wp(aim_idx, 1), wp(aim_idx, 0)) * 180.0 / M_PI);
    }
    cmds.var_speed = population_variance(cmds.speeds);
    cmds.var_yaw = population_variance(cmds.yaws);
    return cmds;
}

// ---------------------------------------------------------------------------

struct SafetyRuleConfig {
    bool enabled = false;
    double lambda = 0.4;          // speed-variance threshold, (m/s)^2
    double naive_reduction = 0.0; // km/h subtracted in the baseline mode

    void validate() const {
        if (enabled && !(lambda > 0.0))
            throw std::invalid_argument("safety rule: lambda must be positive when enabled");
        if (naive_reduction < 0.0)
            throw std::invalid_argument("safety rule: naive_reduction must be >= 0");
    }
};

struct ActionChoice {
    double desired_speed = 0.0;  // m/s
    double desired_yaw = 0.0;    // degrees, relative to current heading
    int chosen_index = 0;
    bool overridden = false;     // speed forced to zero by the rule
};

// Picks one candidate uniformly at random, then applies the variance rule
// (speed := 0 when var_speed exceeds lambda; yaw kept) or the naive km/h
// reduction baseline. The rng stream is the caller's selection stream,
// independent of diffusion sampling.
inline ActionChoice select_action(const TrajectoryEnsemble& ensemble, const CommandSet& cmds,
                                  const SafetyRuleConfig& rule, Rng& rng) {
    if (ensemble.candidates.empty() || cmds.size() != ensemble.size())
        throw std::invalid_argument("select_action: ensemble/command size mismatch");
    rule.validate();
    ActionChoice out;
    out.chosen_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(cmds.size())));
    out.desired_speed = cmds.speeds[static_cast<std::size_t>(out.chosen_index)];
    out.desired_yaw = cmds.yaws[static_cast<std::size_t>(out.chosen_index)];
    if (rule.enabled && cmds.var_speed > rule.lambda) {
        out.desired_speed = 0.0;
        out.overridden = true;
    } else if (rule.naive_reduction > 0.0) {
        out.desired_speed = std::max(0.0, out.desired_speed - rule.naive_reduction / 3.6);
    }
    return out;
}

}  // namespace diffplan::control
