#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexkernel/rng.hpp"

using namespace flexkernel;

TEST_CASE("same seed reproduces the sample sequence bitwise") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    RngStream c(42), d(42);
    Tensor g1 = sample_gamma(c, 2.0, 1.0, 5);
    Tensor g2 = sample_gamma(d, 2.0, 1.0, 5);
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(g1[i] == g2[i]);
}

TEST_CASE("uniform draws land in range with the right mean") {
    RngStream rng(7);
    const std::size_t n = 1000000;
    Tensor u = sample_uniform(rng, 0.0, 1.0, n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(u[i] >= 0.0);
        REQUIRE(u[i] < 1.0);
        mean += u[i];
    }
    mean /= static_cast<double>(n);
    REQUIRE(std::fabs(mean - 0.5) < 0.002);
}

TEST_CASE("uniform respects arbitrary bounds") {
    RngStream rng(3);
    const double pi = 3.14159265358979323846;
    const double lo = -2.0 * pi, hi = 2.0 * pi;
    Tensor u = sample_uniform(rng, lo, hi, 10000);
    for (std::size_t i = 0; i < u.size(); ++i) {
        REQUIRE(u[i] >= lo);
        REQUIRE(u[i] < hi);
    }
    REQUIRE_THROWS_AS(sample_uniform(rng, 1.0, 1.0, 3), ContractViolation);
}

TEST_CASE("gamma sampling hits the alpha/beta mean") {
    RngStream rng(11);
    const std::size_t n = 1000000;

    Tensor e = sample_gamma(rng, 1.0, 1.0, n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += e[i];
    REQUIRE(std::fabs(mean / n - 1.0) < 0.01);

    Tensor g = sample_gamma(rng, 6.0, 1.0, n);
    mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(g[i] > 0.0);
        mean += g[i];
    }
    REQUIRE(std::fabs(mean / n - 6.0) < 0.06);
}

TEST_CASE("gamma rate parameter scales the mean") {
    RngStream rng(13);
    const std::size_t n = 200000;
    Tensor g = sample_gamma(rng, 2.0, 4.0, n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += g[i];
    REQUIRE(std::fabs(mean / n - 0.5) < 0.01);
}

TEST_CASE("gamma with shape below one uses the boost path") {
    RngStream rng(17);
    const std::size_t n = 400000;
    Tensor g = sample_gamma(rng, 0.5, 1.0, n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(g[i] >= 0.0);
        mean += g[i];
    }
    REQUIRE(std::fabs(mean / n - 0.5) < 0.01);
}

TEST_CASE("gamma rejects non-positive parameters") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(sample_gamma(rng, 0.0, 1.0, 1), ContractViolation);
    REQUIRE_THROWS_AS(sample_gamma(rng, 1.0, -1.0, 1), ContractViolation);
}
