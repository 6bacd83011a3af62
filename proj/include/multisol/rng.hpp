#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace multisol {

/// Deterministic 64-bit stream generator (splitmix64). Self-contained so
/// that sampled values are reproducible across standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [-bound, bound).
    double uniform_sym(double bound) {
        return -bound + 2.0 * bound * uniform01();
    }

    /// One standard-normal draw scaled by sigma (Box-Muller, cosine leg).
    /// Consumes exactly two 64-bit words per draw.
    double normal(double sigma) {
        double u1 = uniform01();
        double u2 = uniform01();
        // map u1 into (0, 1] so log is finite
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return sigma * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Normal(mu, sigma) truncated to [mu - 2 sigma, mu + 2 sigma] by
    /// rejection resampling.
    double truncated_normal(double mu, double sigma) {
        for (;;) {
            double z = normal(sigma);
            if (std::abs(z) <= 2.0 * sigma) return mu + z;
        }
    }

private:
    std::uint64_t state_;
};

/// Counter-based seed derivation: member i's stream depends only on
/// (base_seed, i), never on the ensemble size or evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
    std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace multisol
