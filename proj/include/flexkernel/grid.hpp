#pragma once

#include <cstddef>
#include <vector>

#include "flexkernel/errors.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

// Sampling positions of a kernel over [-1,1]^D. Axis convention for D = 2:
// spatial tensors are indexed [row, col] with y varying along rows and x along
// columns; the position tensor's last axis stores (x, y). For D = 1 only x
// exists. Coordinate i along an axis is -1 + i * 2/(k-1); k = 1 degenerates
// to the single coordinate 0.
struct CoordinateGrid {
    std::size_t dims = 0;        // D, 1 or 2
    std::size_t resolution = 0;  // k, samples per axis
    Tensor positions;            // [k,...,D]

    std::size_t num_points() const { return positions.size() / dims; }

    // Flat [P, D] view over the same row-major data.
    Tensor flat_positions() const { return positions.reshaped({num_points(), dims}); }

    // Column for one axis as [P, 1] (axis 0 = x, axis 1 = y).
    Tensor axis_column(std::size_t axis) const {
        require(axis < dims, "CoordinateGrid::axis_column: axis out of range");
        const std::size_t p = num_points();
        Tensor col({p, 1});
        for (std::size_t i = 0; i < p; ++i) col[i] = positions[i * dims + axis];
        return col;
    }

    std::vector<std::size_t> spatial_shape() const {
        return std::vector<std::size_t>(dims, resolution);
    }
};

inline double grid_coordinate(std::size_t index, std::size_t k) {
    if (k == 1) return 0.0;
    return -1.0 + static_cast<double>(index) * (2.0 / static_cast<double>(k - 1));
}

inline CoordinateGrid make_grid(std::size_t dims, std::size_t k) {
    require(dims == 1 || dims == 2, "make_grid: unsupported dimensionality, D must be 1 or 2");
    require(k >= 1, "make_grid: resolution must be >= 1");
    CoordinateGrid grid;
    grid.dims = dims;
    grid.resolution = k;
    if (dims == 1) {
        Tensor pos({k, 1});
        for (std::size_t i = 0; i < k; ++i) pos[i] = grid_coordinate(i, k);
        grid.positions = std::move(pos);
    } else {
        Tensor pos({k, k, 2});
        for (std::size_t row = 0; row < k; ++row)
            for (std::size_t col = 0; col < k; ++col) {
                pos[(row * k + col) * 2 + 0] = grid_coordinate(col, k);  // x
                pos[(row * k + col) * 2 + 1] = grid_coordinate(row, k);  // y
            }
        grid.positions = std::move(pos);
    }
    return grid;
}

// Kernel grid resolution for data of a given resolution: the data resolution
// itself when odd, one more when even, so the grid always has a center sample.
inline std::size_t kernel_size_init(std::size_t data_resolution) {
    require(data_resolution >= 1, "kernel_size_init: resolution must be >= 1");
    return data_resolution % 2 == 1 ? data_resolution : data_resolution + 1;
}

}  // namespace flexkernel
