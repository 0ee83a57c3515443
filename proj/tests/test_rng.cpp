#include <catch2/catch_amalgamated.hpp>

#include "diffplan/core/rng.hpp"

using namespace diffplan;

TEST_CASE("rng streams are deterministic and independent") {
    Rng a = derive_rng(42, "noise", {7});
    Rng b = derive_rng(42, "noise", {7});
    for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());

    Rng c = derive_rng(42, "noise", {8});
    Rng d = derive_rng(42, "selection", {7});
    bool all_equal_c = true, all_equal_d = true;
    Rng a2 = derive_rng(42, "noise", {7});
    for (int i = 0; i < 16; ++i) {
        std::uint64_t v = a2.next();
        all_equal_c &= (v == c.next());
        all_equal_d &= (v == d.next());
    }
    REQUIRE_FALSE(all_equal_c);
    REQUIRE_FALSE(all_equal_d);
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng r(123);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        sum += z;
        sum2 += z * z;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform stays in (0,1]") {
    Rng r(5);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
}
