#pragma once

#include <cmath>
#include <cstdint>

namespace rpmono {

/// Small deterministic RNG (splitmix64 core). Used everywhere instead of
/// std:: distributions so that seeded runs are bit-reproducible across
/// platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Independent stream for sample index `k` of a seeded run. Streams are
    /// decorrelated by hashing, so per-sample work can be scheduled on any
    /// thread without changing results.
    static Rng stream(std::uint64_t seed, std::uint64_t k) {
        Rng r(seed + 0x9e3779b97f4a7c15ULL * (k + 1));
        r.next_u64();
        r.next_u64();
        return r;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return next_u64() % n;
    }

    int index(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    bool coin() { return (next_u64() & 1u) != 0; }

    /// Standard normal via Box-Muller (explicit formula, no cached spare).
    double gaussian() {
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::uint64_t state_;
};

} // namespace rpmono
