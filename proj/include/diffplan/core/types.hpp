#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace diffplan {

inline constexpr int kNumWaypoints = 8;
inline constexpr double kWaypointDt = 0.25;    // seconds between waypoints
inline constexpr double kPlanHorizon = 2.0;    // seconds covered by a plan
inline constexpr double kDefaultWorldBound = 50.0;  // |x|,|y| limit in meters

using TrajMat = Eigen::Matrix<double, kNumWaypoints, 2>;

// A 2 s motion plan: 8 future (x forward, y left) waypoints in the ego frame,
// 250 ms apart.
struct Trajectory {
    TrajMat wp = TrajMat::Zero();

    double x(int i) const { return wp(i, 0); }
    double y(int i) const { return wp(i, 1); }
};

inline bool trajectory_finite(const TrajMat& wp) { return wp.allFinite(); }

inline bool trajectory_in_bounds(const TrajMat& wp, double bound = kDefaultWorldBound) {
    return wp.allFinite() && wp.cwiseAbs().maxCoeff() <= bound;
}

inline void validate_trajectory(const TrajMat& wp, double bound = kDefaultWorldBound) {
    if (!trajectory_finite(wp)) throw std::invalid_argument("trajectory has non-finite coordinates");
    if (wp.cwiseAbs().maxCoeff() > bound) throw std::invalid_argument("trajectory exceeds world bound");
}

// N candidate plans sampled for one observation frame. Candidates are
// exchangeable; determinism is per (seed, candidate index).
struct TrajectoryEnsemble {
    std::vector<Trajectory> candidates;
    std::int64_t frame_id = 0;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(candidates.size()); }
};

}  // namespace diffplan
