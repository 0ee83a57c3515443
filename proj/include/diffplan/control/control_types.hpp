#pragma once

#include <algorithm>
#include <stdexcept>

namespace diffplan {

// Low-level actuation command. Throttle and brake are mutually exclusive.
struct Control {
    double steer = 0.0;     // [-1, 1], positive steers left
    double throttle = 0.0;  // [0, 1]
    double brake = 0.0;     // [0, 1]

    static Control clamped(double steer, double throttle, double brake) {
        Control c;
        c.steer = std::clamp(steer, -1.0, 1.0);
        c.throttle = std::clamp(throttle, 0.0, 1.0);
        c.brake = std::clamp(brake, 0.0, 1.0);
        if (c.brake > 0.0) c.throttle = 0.0;
        return c;
    }
};

inline void validate_control(const Control& c) {
    if (c.steer < -1.0 || c.steer > 1.0 || c.throttle < 0.0 || c.throttle > 1.0 || c.brake < 0.0 ||
        c.brake > 1.0)
        throw std::invalid_argument("control out of range");
    if (c.throttle > 0.0 && c.brake > 0.0)
        throw std::invalid_argument("throttle and brake are mutually exclusive");
}

}  // namespace diffplan
