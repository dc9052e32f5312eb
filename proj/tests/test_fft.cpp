#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexkernel/fft.hpp"
#include "flexkernel/rng.hpp"

using namespace flexkernel;

namespace {
const double pi = 3.14159265358979323846;
}

TEST_CASE("constant signal concentrates at bin zero") {
    const std::size_t n = 12;
    const double c = 2.5;
    Tensor t = Tensor::full({n}, c);
    CTensor f = fft_nd(t, {0});
    REQUIRE(std::abs(f.values[0] - cdouble{c * n, 0.0}) < 1e-12);
    for (std::size_t b = 1; b < n; ++b) REQUIRE(std::abs(f.values[b]) < 1e-10);
}

TEST_CASE("pure tone peaks at its bin pair") {
    const std::size_t n = 32;
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i)
        t[i] = std::sin(2.0 * pi * 4.0 * static_cast<double>(i) / static_cast<double>(n));
    CTensor f = fft_nd(t, {0});
    for (std::size_t b = 0; b < n; ++b) {
        const double mag = std::abs(f.values[b]);
        if (b == 4 || b == n - 4)
            REQUIRE(mag == Catch::Approx(n / 2.0).margin(1e-9));
        else
            REQUIRE(mag < 1e-9);
    }
}

TEST_CASE("round trip is identity for awkward extents") {
    RngStream rng(5);
    for (std::size_t n : {1u, 2u, 3u, 16u, 17u, 32u}) {
        Tensor t = sample_uniform(rng, -1.0, 1.0, n);
        CTensor f = fft_nd(t, {0});
        CTensor back = ifft_nd(f, {0});
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(std::fabs(back.values[i].real() - t[i]) < 1e-10);
            REQUIRE(std::fabs(back.values[i].imag()) < 1e-10);
        }
    }
}

TEST_CASE("2-D round trip on a random 16x16 tensor") {
    RngStream rng(9);
    Tensor t = sample_uniform(rng, -1.0, 1.0, 256).reshaped({16, 16});
    CTensor back = ifft_nd(fft_nd(t, {0, 1}), {0, 1});
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        worst = std::max(worst, std::abs(back.values[i] - cdouble{t[i], 0.0}));
    REQUIRE(worst < 1e-10);
}

TEST_CASE("Parseval holds for the unnormalized transform") {
    RngStream rng(21);
    for (std::size_t n : {8u, 17u, 33u}) {
        Tensor t = sample_uniform(rng, -2.0, 2.0, n);
        double time_energy = 0.0;
        for (std::size_t i = 0; i < n; ++i) time_energy += t[i] * t[i];
        CTensor f = fft_nd(t, {0});
        double freq_energy = 0.0;
        for (std::size_t b = 0; b < n; ++b) freq_energy += std::norm(f.values[b]);
        freq_energy /= static_cast<double>(n);
        REQUIRE(std::fabs(freq_energy - time_energy) / time_energy < 1e-8);
    }
}

TEST_CASE("transforming one axis leaves the other intact") {
    Tensor t({2, 4});
    for (std::size_t i = 0; i < 8; ++i) t[i] = static_cast<double>(i);
    CTensor f = fft_nd(t, {1});
    // row sums land in bin 0 of each row
    REQUIRE(std::abs(f.values[0] - cdouble{0.0 + 1 + 2 + 3, 0.0}) < 1e-12);
    REQUIRE(std::abs(f.values[4] - cdouble{4.0 + 5 + 6 + 7, 0.0}) < 1e-12);
}
