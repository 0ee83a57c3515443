#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "diffplan/core/schedule.hpp"

using namespace diffplan;

TEST_CASE("schedule endpoints and monotonicity") {
    for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear_beta}) {
        auto s = make_schedule(100, kind);
        REQUIRE(s.alpha_bar.size() == 101);
        REQUIRE(s.gamma.size() == 101);
        REQUIRE(s.xi.size() == 101);
        REQUIRE(s.sigma.size() == 101);
        REQUIRE(s.alpha_bar.front() >= 0.999);
        REQUIRE(s.alpha_bar.back() <= 0.01);
        for (size_t k = 1; k < s.alpha_bar.size(); ++k) {
            REQUIRE(s.alpha_bar[k] < s.alpha_bar[k - 1]);
            REQUIRE(s.alpha_bar[k] >= 0.0);
        }
        for (int k = 1; k <= 100; ++k) REQUIRE(s.sigma[static_cast<size_t>(k)] >= 0.0);
    }
}

TEST_CASE("K_train=2 linear_beta gives 3 strictly decreasing entries") {
    auto s = make_schedule(2, ScheduleKind::linear_beta);
    REQUIRE(s.alpha_bar.size() == 3);
    REQUIRE(s.alpha_bar[0] > s.alpha_bar[1]);
    REQUIRE(s.alpha_bar[1] > s.alpha_bar[2]);
}

TEST_CASE("posterior-mean identity: gamma*sqrt(ab_k) + xi == sqrt(ab_{k-1})") {
    for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear_beta}) {
        auto s = make_schedule(100, kind);
        for (int k = 1; k <= 100; ++k) {
            double lhs = s.gamma[static_cast<size_t>(k)] * s.sqrt_ab(k) + s.xi[static_cast<size_t>(k)];
            double rhs = std::sqrt(s.alpha_bar[static_cast<size_t>(k) - 1]);
            REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10));
        }
    }
}

TEST_CASE("reverse update with perfect denoiser contracts toward the clean sample") {
    // scalar case: x0 = 3, start at the noisy end, zero reverse noise
    auto s = make_schedule(100, ScheduleKind::cosine);
    const double x0 = 3.0;
    double x = -5.0;
    double prev_err = std::abs(x - x0);
    for (int k = 100; k >= 1; --k) {
        x = s.gamma[static_cast<size_t>(k)] * x + s.xi[static_cast<size_t>(k)] * x0;
        double err = std::abs(x - x0);
        REQUIRE(err <= prev_err + 1e-12);
        prev_err = err;
    }
    REQUIRE(std::abs(x - x0) < 1e-6);
}

TEST_CASE("invalid arguments rejected") {
    REQUIRE_THROWS_AS(make_schedule(1, ScheduleKind::cosine), std::invalid_argument);
    REQUIRE_THROWS_AS(make_schedule(0, ScheduleKind::linear_beta), std::invalid_argument);
    REQUIRE_THROWS_AS(schedule_kind_from_string("sigmoid"), std::invalid_argument);
}

TEST_CASE("ddim timestep subsequence is evenly spaced with endpoints") {
    auto s = make_schedule(100, ScheduleKind::cosine);
    auto ks = ddim_timesteps(s, 2);
    REQUIRE(ks == std::vector<int>{100, 50, 0});
    auto ks4 = ddim_timesteps(s, 4);
    REQUIRE(ks4 == std::vector<int>{100, 75, 50, 25, 0});
    auto ks1 = ddim_timesteps(s, 1);
    REQUIRE(ks1 == std::vector<int>{100, 0});
    // more steps than K collapses to full schedule
    auto s5 = make_schedule(5, ScheduleKind::cosine);
    auto ksall = ddim_timesteps(s5, 9);
    REQUIRE(ksall == std::vector<int>{5, 4, 3, 2, 1, 0});
}
