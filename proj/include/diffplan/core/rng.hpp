#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <string_view>

namespace diffplan {

// Deterministic, stream-splittable RNG used everywhere instead of <random>
// engines: std distributions are implementation-defined, and reproducibility
// of datasets, checkpoints and logs is a hard contract here.
//
// Generator is xoshiro256++ seeded through SplitMix64. Streams are derived
// by hashing a (seed, path...) tuple, so independent consumers (diffusion
// noise, candidate selection, scenario randomization, ...) never share or
// race on generator state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in (0, 1]; never returns 0 so log() is safe
    double uniform() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53);
    }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    // standard normal via Box-Muller (branch-free, fully deterministic)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
        std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 12) + (a >> 4));
        return splitmix64(x);
    }

    static std::uint64_t hash_str(std::string_view tag) {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return h;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Derives an independent generator for (seed, tag, indices...).
inline Rng derive_rng(std::uint64_t seed, std::string_view tag,
                      std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t h = Rng::hash_combine(seed, Rng::hash_str(tag));
    for (std::uint64_t i : indices) h = Rng::hash_combine(h, i);
    return Rng(h);
}

}  // namespace diffplan
