#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace diffplan::sim {

using Eigen::Vector2d;

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;  // radians, CCW from +x

    Vector2d position() const { return {x, y}; }

    // world point -> this frame (x forward, y left)
    Vector2d to_local(const Vector2d& p) const {
        const double dx = p.x() - x, dy = p.y() - y;
        const double c = std::cos(yaw), s = std::sin(yaw);
        return {c * dx + s * dy, -s * dx + c * dy};
    }

    Vector2d to_world(const Vector2d& local) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        return {x + c * local.x() - s * local.y(), y + s * local.x() + c * local.y()};
    }
};

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

// axis-aligned in its own frame: center pose + half extents
struct OrientedBox {
    Pose pose;
    double half_length = 2.25;
    double half_width = 1.0;

    bool contains(const Vector2d& p) const {
        Vector2d l = pose.to_local(p);
        return std::abs(l.x()) <= half_length && std::abs(l.y()) <= half_width;
    }
};

// separating-axis overlap test for two oriented rectangles
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    auto corners = [](const OrientedBox& box) {
        std::array<Vector2d, 4> c;
        c[0] = box.pose.to_world({box.half_length, box.half_width});
        c[1] = box.pose.to_world({box.half_length, -box.half_width});
        c[2] = box.pose.to_world({-box.half_length, -box.half_width});
        c[3] = box.pose.to_world({-box.half_length, box.half_width});
        return c;
    };
    auto ca = corners(a), cb = corners(b);
    auto axes = [](const OrientedBox& box) {
        const double c = std::cos(box.pose.yaw), s = std::sin(box.pose.yaw);
        return std::array<Vector2d, 2>{Vector2d{c, s}, Vector2d{-s, c}};
    };
    for (const auto& axis : {axes(a)[0], axes(a)[1], axes(b)[0], axes(b)[1]}) {
        double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
        for (const auto& p : ca) {
            const double v = p.dot(axis);
            amin = std::min(amin, v);
            amax = std::max(amax, v);
        }
        for (const auto& p : cb) {
            const double v = p.dot(axis);
            bmin = std::min(bmin, v);
            bmax = std::max(bmax, v);
        }
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

// Polyline with arc-length parameterization; the basic lane/route primitive.
class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<Vector2d> pts) : pts_(std::move(pts)) {
        if (pts_.size() < 2) throw std::invalid_argument("polyline needs at least 2 points");
        cum_.resize(pts_.size(), 0.0);
        for (std::size_t i = 1; i < pts_.size(); ++i)
            cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
    }

    double length() const { return cum_.back(); }
    const std::vector<Vector2d>& points() const { return pts_; }

    Vector2d pos_at(double s) const {
        const auto [i, t] = locate(s);
        return pts_[i] + t * (pts_[i + 1] - pts_[i]);
    }

    double heading_at(double s) const {
        const auto [i, t] = locate(s);
        (void)t;
        const Vector2d d = pts_[i + 1] - pts_[i];
        return std::atan2(d.y(), d.x());
    }

    // closest arc-length to p, restricted to [s_lo, s_hi] when given;
    // returns {s, signed lateral offset (left positive)}
    std::pair<double, double> project(const Vector2d& p, double s_lo = 0.0, double s_hi = -1.0) const {
        if (s_hi < 0.0) s_hi = length();
        double best_s = s_lo, best_d2 = 1e300, best_lat = 0.0;
        for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
            if (cum_[i + 1] < s_lo || cum_[i] > s_hi) continue;
            const Vector2d a = pts_[i], b = pts_[i + 1];
            const Vector2d ab = b - a;
            const double len2 = ab.squaredNorm();
            double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const Vector2d q = a + t * ab;
            const double d2 = (p - q).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best_s = std::clamp(cum_[i] + t * std::sqrt(len2), s_lo, s_hi);
                const Vector2d dir = ab.normalized();
                const Vector2d rel = p - q;
                best_lat = dir.x() * rel.y() - dir.y() * rel.x();
            }
        }
        return {best_s, best_lat};
    }

    double distance_to(const Vector2d& p) const {
        double best = 1e300;
        for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
            const Vector2d a = pts_[i], b = pts_[i + 1];
            const Vector2d ab = b - a;
            const double len2 = ab.squaredNorm();
            double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
            best = std::min(best, (p - (a + t * ab)).squaredNorm());
        }
        return std::sqrt(best);
    }

private:
    std::pair<std::size_t, double> locate(double s) const {
        s = std::clamp(s, 0.0, length());
        std::size_t i = 0;
        while (i + 2 < pts_.size() && cum_[i + 1] < s) ++i;
        const double seg = cum_[i + 1] - cum_[i];
        return {i, seg > 0.0 ? (s - cum_[i]) / seg : 0.0};
    }

    std::vector<Vector2d> pts_;
    std::vector<double> cum_;
};

// quarter-circle arc sampled densely enough for smooth pursuit
inline void append_arc(std::vector<Vector2d>& pts, const Vector2d& center, double radius,
                       double a0, double a1, int steps = 16) {
    for (int i = 1; i <= steps; ++i) {
        const double a = a0 + (a1 - a0) * i / steps;
        pts.push_back(center + radius * Vector2d{std::cos(a), std::sin(a)});
    }
}

}  // namespace diffplan::sim
