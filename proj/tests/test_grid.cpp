#include <catch2/catch_amalgamated.hpp>

#include "flexkernel/grid.hpp"

using namespace flexkernel;

TEST_CASE("1-D grids hit the endpoints exactly") {
    CoordinateGrid g = make_grid(1, 3);
    REQUIRE(g.positions.shape() == std::vector<std::size_t>{3, 1});
    REQUIRE(g.positions[0] == -1.0);
    REQUIRE(g.positions[1] == 0.0);
    REQUIRE(g.positions[2] == 1.0);

    CoordinateGrid g2 = make_grid(1, 2);
    REQUIRE(g2.positions[0] == -1.0);
    REQUIRE(g2.positions[1] == 1.0);
}

TEST_CASE("k = 1 degenerates to the single coordinate zero") {
    CoordinateGrid g = make_grid(2, 1);
    REQUIRE(g.num_points() == 1);
    REQUIRE(g.positions[0] == 0.0);
    REQUIRE(g.positions[1] == 0.0);
}

TEST_CASE("2-D grid has the documented corner, spacing and axis order") {
    CoordinateGrid g = make_grid(2, 33);
    REQUIRE(g.positions.shape() == std::vector<std::size_t>{33, 33, 2});
    REQUIRE(g.positions.at({0, 0, 0}) == -1.0);  // x at corner
    REQUIRE(g.positions.at({0, 0, 1}) == -1.0);  // y at corner
    REQUIRE(g.positions.at({0, 1, 0}) == Catch::Approx(-1.0 + 1.0 / 16.0));  // x along cols
    REQUIRE(g.positions.at({0, 1, 1}) == -1.0);
    REQUIRE(g.positions.at({1, 0, 1}) == Catch::Approx(-1.0 + 1.0 / 16.0));  // y along rows
    REQUIRE(g.positions.at({32, 32, 0}) == 1.0);
    REQUIRE(g.positions.at({32, 32, 1}) == 1.0);
}

TEST_CASE("spacing is 2/(k-1) everywhere") {
    for (std::size_t k : {2u, 5u, 17u}) {
        CoordinateGrid g = make_grid(1, k);
        for (std::size_t i = 0; i + 1 < k; ++i)
            REQUIRE(g.positions[i + 1] - g.positions[i] ==
                    Catch::Approx(2.0 / static_cast<double>(k - 1)).epsilon(1e-14));
    }
}

TEST_CASE("unsupported dimensionality is rejected") {
    REQUIRE_THROWS_AS(make_grid(3, 5), ContractViolation);
    REQUIRE_THROWS_AS(make_grid(0, 5), ContractViolation);
    REQUIRE_THROWS_AS(make_grid(1, 0), ContractViolation);
}

TEST_CASE("kernel size follows the odd rule") {
    REQUIRE(kernel_size_init(33) == 33);
    REQUIRE(kernel_size_init(32) == 33);
    REQUIRE(kernel_size_init(1) == 1);
    REQUIRE(kernel_size_init(14) == 15);
}

TEST_CASE("axis columns match the flattened positions") {
    CoordinateGrid g = make_grid(2, 5);
    Tensor x = g.axis_column(0), y = g.axis_column(1);
    Tensor flat = g.flat_positions();
    for (std::size_t p = 0; p < g.num_points(); ++p) {
        REQUIRE(x[p] == flat.at({p, 0}));
        REQUIRE(y[p] == flat.at({p, 1}));
    }
}
