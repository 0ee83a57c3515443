#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "diffplan/core/rng.hpp"
#include "diffplan/core/schedule.hpp"
#include "diffplan/core/types.hpp"

namespace diffplan {

enum class Parameterization { trajectory, noise };

inline const char* to_string(Parameterization p) {
    return p == Parameterization::trajectory ? "trajectory" : "noise";
}

inline Parameterization parameterization_from_string(const std::string& s) {
    if (s == "trajectory") return Parameterization::trajectory;
    if (s == "noise") return Parameterization::noise;
    throw std::invalid_argument("unknown parameterization: " + s);
}

namespace detail {
inline void check_k(const DiffusionSchedule& sched, int k, int k_min) {
    if (k < k_min || k > sched.K_train)
        throw std::invalid_argument("diffusion step k out of range");
}
}  // namespace detail

// x_k = sqrt(ab_k) * x0 + sqrt(1 - ab_k) * eps, elementwise.
template <typename D0, typename DE>
auto forward_diffuse(const Eigen::MatrixBase<D0>& x0, int k, const Eigen::MatrixBase<DE>& eps,
                     const DiffusionSchedule& sched) {
    detail::check_k(sched, k, 0);
    if (!x0.allFinite() || !eps.allFinite())
        throw std::invalid_argument("forward_diffuse: non-finite input");
    return (sched.sqrt_ab(k) * x0 + sched.sqrt_one_minus_ab(k) * eps).eval();
}

// One ancestral reverse step: x_{k-1} = gamma_k x_k + xi_k x0_hat + sigma_k eps.
template <typename DK, typename D0, typename DE>
auto ddpm_step(const Eigen::MatrixBase<DK>& xk, const Eigen::MatrixBase<D0>& pred_x0, int k,
               const DiffusionSchedule& sched, const Eigen::MatrixBase<DE>& eps) {
    detail::check_k(sched, k, 1);
    const size_t ki = static_cast<size_t>(k);
    return (sched.gamma[ki] * xk + sched.xi[ki] * pred_x0 + sched.sigma[ki] * eps).eval();
}

// One deterministic (eta = 0) implicit step from k down to k_next:
// re-derives eps_hat from the clean prediction, then re-noises at level k_next.
template <typename DK, typename D0>
auto ddim_step(const Eigen::MatrixBase<DK>& xk, const Eigen::MatrixBase<D0>& pred_x0, int k,
               int k_next, const DiffusionSchedule& sched) {
    detail::check_k(sched, k, 1);
    if (k_next >= k || k_next < 0) throw std::invalid_argument("ddim_step: need 0 <= k_next < k");
    const double ab_k = sched.alpha_bar[static_cast<size_t>(k)];
    if (ab_k >= 1.0) {
        if (!xk.isApprox(pred_x0))
            throw std::invalid_argument("ddim_step: eps_hat undefined at alpha_bar == 1");
        return pred_x0.eval();
    }
    auto eps_hat = (xk - sched.sqrt_ab(k) * pred_x0) / sched.sqrt_one_minus_ab(k);
    return (sched.sqrt_ab(k_next) * pred_x0 + sched.sqrt_one_minus_ab(k_next) * eps_hat).eval();
}

// Mean squared error over all coordinates.
template <typename DA, typename DB>
double training_loss(const Eigen::MatrixBase<DA>& pred_x0, const Eigen::MatrixBase<DB>& x0) {
    if (pred_x0.rows() != x0.rows() || pred_x0.cols() != x0.cols())
        throw std::invalid_argument("training_loss: shape mismatch");
    return (pred_x0 - x0).squaredNorm() / static_cast<double>(x0.size());
}

// Maps a network prediction to the implied clean sample x0_hat.
template <typename DP, typename DK>
auto convert_parameterization(const Eigen::MatrixBase<DP>& pred, const Eigen::MatrixBase<DK>& xk,
                              int k, const DiffusionSchedule& sched, Parameterization from) {
    detail::check_k(sched, k, 0);
    if (from == Parameterization::trajectory) return pred.eval();
    const double ab = sched.alpha_bar[static_cast<size_t>(k)];
    if (ab <= 0.0)
        throw std::invalid_argument("convert_parameterization: alpha_bar == 0 under noise form");
    return ((xk - sched.sqrt_one_minus_ab(k) * pred) / sched.sqrt_ab(k)).eval();
}

// Denoiser callable used by the generic samplers: (x_k, k) -> x0_hat. The
// observation, weights and parameterization are bound by the caller, which
// keeps this module independent of any network architecture.
using DenoiseFn = std::function<TrajMat(const TrajMat&, int)>;

inline TrajMat sample_trajectory_ddim(const DenoiseFn& denoise, const DiffusionSchedule& sched,
                                      int ddim_steps, Rng& rng) {
    TrajMat x;
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    const std::vector<int> ks = ddim_timesteps(sched, ddim_steps);
    for (size_t i = 0; i + 1 < ks.size(); ++i) {
        const TrajMat pred = denoise(x, ks[i]);
        x = ddim_step(x, pred, ks[i], ks[i + 1], sched);
    }
    return x;
}

// Samples n candidates for one frame. Candidate i draws its Gaussian init
// from stream (seed, i), so results are independent of n and of any
// parallel execution over candidates.
inline TrajectoryEnsemble sample_ensemble(const DenoiseFn& denoise, const DiffusionSchedule& sched,
                                          int n, int ddim_steps, std::uint64_t seed,
                                          std::int64_t frame_id = 0) {
    if (n < 1) throw std::invalid_argument("sample_ensemble: n must be >= 1");
    if (ddim_steps < 1) throw std::invalid_argument("sample_ensemble: ddim_steps must be >= 1");
    TrajectoryEnsemble ens;
    ens.frame_id = frame_id;
    ens.seed = seed;
    ens.candidates.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(seed, "ensemble", {static_cast<std::uint64_t>(i)});
        ens.candidates[static_cast<size_t>(i)].wp = sample_trajectory_ddim(denoise, sched, ddim_steps, rng);
    }
    return ens;
}

}  // namespace diffplan
