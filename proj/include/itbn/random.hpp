#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "itbn/errors.hpp"

namespace itbn {

// splitmix64 step, used to derive independent sub-stream seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded random source. All variates are derived from raw mt19937_64 words so
// a seed pins the output exactly, independent of the standard library's
// distribution implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe under log().
    double uniform_pos() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Geometric on {1, 2, ...} with success probability p, by CDF inversion.
    std::int64_t geometric(double p) {
        if (!(p > 0.0) || p > 1.0)
            throw_usage("geometric success probability must lie in (0, 1]");
        const double u = uniform();
        if (p == 1.0) return 1;
        const double k = std::ceil(std::log1p(-u) / std::log1p(-p));
        if (!(k >= 1.0)) return 1;
        if (k >= 9.0e15) throw_numeric("geometric draw overflow");
        return static_cast<std::int64_t>(k);
    }

    RandomStream fork(std::uint64_t stream) {
        return RandomStream(derive_seed(engine_(), stream));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace itbn
