#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace diffplan {

// BEV occupancy channel order, fixed across rendering, storage and encoding.
enum BevChannel : int { kBevDrivable = 0, kBevVehicles = 1, kBevPedestrians = 2, kBevRedStopline = 3 };
inline constexpr int kBevChannels = 4;

// Ego-frame conditioning bundle: occupancy grid (cell [r][c] covers the area
// around x = (r - G/2 + 0.5)*cell forward, y = (c - G/2 + 0.5)*cell left),
// the next route target point, and the current speed.
struct Observation {
    int grid_size = 32;
    double cell_size = 0.5;  // meters per cell
    std::vector<Eigen::MatrixXd> grid;  // kBevChannels matrices, G x G, values in [0,1]
    Eigen::Vector2d target_point = Eigen::Vector2d::Zero();  // meters, ego frame
    double velocity = 0.0;  // m/s

    static Observation zeros(int grid_size = 32, double cell_size = 0.5) {
        Observation o;
        o.grid_size = grid_size;
        o.cell_size = cell_size;
        o.grid.assign(kBevChannels, Eigen::MatrixXd::Zero(grid_size, grid_size));
        return o;
    }

    // world offset of cell centers: row -> forward x, col -> left y
    double cell_x(int row) const { return (row - grid_size / 2 + 0.5) * cell_size; }
    double cell_y(int col) const { return (col - grid_size / 2 + 0.5) * cell_size; }
};

inline void validate_observation(const Observation& o) {
    if (static_cast<int>(o.grid.size()) != kBevChannels)
        throw std::invalid_argument("observation: wrong channel count");
    for (const auto& ch : o.grid) {
        if (ch.rows() != o.grid_size || ch.cols() != o.grid_size)
            throw std::invalid_argument("observation: grid shape mismatch");
        if (!ch.allFinite() || ch.minCoeff() < 0.0 || ch.maxCoeff() > 1.0)
            throw std::invalid_argument("observation: grid values outside [0,1]");
    }
    if (!o.target_point.allFinite()) throw std::invalid_argument("observation: non-finite target point");
    if (!(o.velocity >= 0.0)) throw std::invalid_argument("observation: negative velocity");
}

}  // namespace diffplan
