#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "diffplan/core/diffusion.hpp"
#include "diffplan/nn/denoiser.hpp"

namespace diffplan::nn {

struct GradProbe {
    TrajMat tauk;
    Observation obs;
    int k = 1;
    TrajMat target;
};

// mean diffusion loss over the probe batch
inline double probe_loss(const Denoiser& net, const std::vector<GradProbe>& probes) {
    double total = 0.0;
    for (const auto& p : probes)
        total += training_loss(net.denoise(p.tauk, p.obs, p.k), p.target);
    return total / static_cast<double>(probes.size());
}

// analytic gradient of probe_loss (optionally scaled) via backpropagation
inline GradBuffer analytic_gradient(const Denoiser& net, const std::vector<GradProbe>& probes,
                                    double loss_scale = 1.0) {
    GradBuffer g(net.params());
    const double w = loss_scale / static_cast<double>(probes.size());
    for (const auto& p : probes) {
        DenoiserActs acts;
        TrajMat pred = net.forward_cached(p.tauk, p.obs, p.k, acts);
        TrajMat dpred = 2.0 * w * (pred - p.target) / static_cast<double>(pred.size());
        net.backward(acts, dpred, g);
    }
    return g;
}

// Compares backpropagated gradients against central finite differences over
// every parameter and returns the worst relative error. Only sensible for
// small probe nets; the cost is two forward passes per parameter.
inline double grad_check(Denoiser& net, const std::vector<GradProbe>& probes, double h = 1e-5) {
    GradBuffer analytic = analytic_gradient(net, probes);
    auto& theta = net.params().raw();
    double max_rel = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + h;
        const double lp = probe_loss(net, probes);
        theta[i] = saved - h;
        const double lm = probe_loss(net, probes);
        theta[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = analytic.raw()[i];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace diffplan::nn
