#pragma once

#include <cmath>
#include <cstdint>

#include "flexkernel/errors.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

// Counter-based random stream built on splitmix64. The generator is fully
// specified here rather than delegating to <random> distributions, whose
// algorithms differ between standard library implementations; a given seed
// therefore reproduces the same sequence on any platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t seed_state() const { return state_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) {
        require(lo < hi, "RngStream::uniform: need lo < hi");
        return lo + (hi - lo) * next_unit();
    }

    // Standard normal via the Marsaglia polar method (one value per call;
    // the spare is kept for the next call).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Gamma(shape alpha, rate beta) with mean alpha/beta, via Marsaglia-Tsang
    // squeeze for alpha >= 1 and the boost U^(1/alpha) for alpha < 1.
    double gamma(double shape_alpha, double rate_beta) {
        require(shape_alpha > 0.0, "RngStream::gamma: shape must be positive");
        require(rate_beta > 0.0, "RngStream::gamma: rate must be positive");
        if (shape_alpha < 1.0) {
            double u = next_unit();
            while (u == 0.0) u = next_unit();
            return gamma(shape_alpha + 1.0, rate_beta) * std::pow(u, 1.0 / shape_alpha);
        }
        const double d = shape_alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = next_unit();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate_beta;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v / rate_beta;
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Tensor sample_uniform(RngStream& rng, double lo, double hi, std::size_t n) {
    require(lo < hi, "sample_uniform: need lo < hi");
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = lo + (hi - lo) * rng.next_unit();
    return t;
}

inline Tensor sample_gamma(RngStream& rng, double shape_alpha, double rate_beta, std::size_t n) {
    require(shape_alpha > 0.0 && rate_beta > 0.0,
            "sample_gamma: shape and rate must be positive");
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = rng.gamma(shape_alpha, rate_beta);
    return t;
}

}  // namespace flexkernel
