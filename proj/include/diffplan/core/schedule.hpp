#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffplan {

enum class ScheduleKind { linear_beta, cosine };

inline const char* to_string(ScheduleKind k) {
    return k == ScheduleKind::linear_beta ? "linear_beta" : "cosine";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear_beta") return ScheduleKind::linear_beta;
    if (s == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

// Per-step coefficients of the corruption/denoising process. alpha_bar[k] is
// the cumulative signal fraction at step k; gamma/xi/sigma are the reverse
// update coefficients derived from it via the standard posterior identities:
//
//   x_{k-1} = gamma[k] * x_k + xi[k] * x0_hat + sigma[k] * eps
//
// Index 0 is the clean end (alpha_bar[0] == 1); index K_train the noisy end.
struct DiffusionSchedule {
    int K_train = 0;
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> alpha_bar;  // K_train+1 entries, strictly decreasing
    std::vector<double> gamma;      // gamma[0] unused
    std::vector<double> xi;         // xi[0] unused
    std::vector<double> sigma;      // sigma[0] unused

    double sqrt_ab(int k) const { return std::sqrt(alpha_bar[static_cast<size_t>(k)]); }
    double sqrt_one_minus_ab(int k) const {
        return std::sqrt(1.0 - alpha_bar[static_cast<size_t>(k)]);
    }
};

inline DiffusionSchedule make_schedule(int K_train, ScheduleKind kind) {
    if (K_train < 2) throw std::invalid_argument("make_schedule: K_train must be >= 2");

    const size_t n = static_cast<size_t>(K_train) + 1;
    DiffusionSchedule s;
    s.K_train = K_train;
    s.kind = kind;
    s.alpha_bar.resize(n);

    if (kind == ScheduleKind::cosine) {
        // squared-cosine profile; endpoints pinned so alpha_bar(0)=1 regardless of K
        const double off = 0.008;
        auto f = [&](double k) {
            double v = std::cos((k / K_train + off) / (1.0 + off) * M_PI / 2.0);
            return v * v;
        };
        const double f0 = f(0.0);
        for (size_t k = 0; k < n; ++k) s.alpha_bar[k] = f(static_cast<double>(k)) / f0;
        // floor keeps the noise-form conversion well-conditioned at k = K
        for (size_t k = 1; k < n; ++k)
            s.alpha_bar[k] = std::max(s.alpha_bar[k], 1e-8 * (1.0 - static_cast<double>(k) / (10.0 * n)));
    } else {
        // betas linear in k, scaled with 1/K so the endpoint contrast is
        // K-independent: prod(1-beta) ~ exp(-(bmin+bmax)/2)
        const double bmin = 0.1 / K_train;
        const double bmax = 20.0 / K_train;
        s.alpha_bar[0] = 1.0;
        for (int k = 1; k <= K_train; ++k) {
            double beta = bmin + (bmax - bmin) * (k - 1.0) / (K_train - 1.0);
            beta = std::min(beta, 0.999);
            s.alpha_bar[static_cast<size_t>(k)] = s.alpha_bar[static_cast<size_t>(k) - 1] * (1.0 - beta);
        }
    }

    s.gamma.assign(n, 0.0);
    s.xi.assign(n, 0.0);
    s.sigma.assign(n, 0.0);
    for (int k = 1; k <= K_train; ++k) {
        const double ab = s.alpha_bar[static_cast<size_t>(k)];
        const double ab_prev = s.alpha_bar[static_cast<size_t>(k) - 1];
        const double alpha = ab / ab_prev;
        const double beta = 1.0 - alpha;
        s.gamma[static_cast<size_t>(k)] = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
        s.xi[static_cast<size_t>(k)] = std::sqrt(ab_prev) * beta / (1.0 - ab);
        const double posterior_var = (1.0 - ab_prev) / (1.0 - ab) * beta;
        s.sigma[static_cast<size_t>(k)] = std::sqrt(std::max(0.0, posterior_var));
    }

    // invariant checks; a schedule violating these is a construction bug
    if (s.alpha_bar.front() < 0.999 || s.alpha_bar.back() > 0.01)
        throw std::logic_error("make_schedule: endpoint bounds violated");
    for (size_t k = 1; k < n; ++k)
        if (!(s.alpha_bar[k] < s.alpha_bar[k - 1]))
            throw std::logic_error("make_schedule: alpha_bar not strictly decreasing");
    return s;
}

// Evenly spaced denoising subsequence {K_train, ..., 0} with both endpoints,
// used for few-step deterministic inference. Returns steps+1 knots.
inline std::vector<int> ddim_timesteps(const DiffusionSchedule& sched, int steps) {
    if (steps < 1) throw std::invalid_argument("ddim_timesteps: steps must be >= 1");
    if (steps > sched.K_train) steps = sched.K_train;
    std::vector<int> ks(static_cast<size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(sched.K_train) * (1.0 - static_cast<double>(i) / steps);
        ks[static_cast<size_t>(i)] = static_cast<int>(std::lround(t));
    }
    ks.front() = sched.K_train;
    ks.back() = 0;
    return ks;
}

}  // namespace diffplan
