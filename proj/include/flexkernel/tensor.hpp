#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flexkernel/errors.hpp"

namespace flexkernel {

// Dense row-major array of 64-bit floats. Plain value type: copying copies
// the payload, so tensors can be shared across threads freely.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        require(values_.size() == count(shape_),
                "Tensor: value count does not match shape product");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.values_.begin(), t.values_.end(), v);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    std::size_t extent(std::size_t dim) const { return shape_.at(dim); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    // Multi-index access; bounds-checked, intended for tests and small code paths.
    double& at(std::initializer_list<std::size_t> idx) { return values_.at(flat_index(idx)); }
    double at(std::initializer_list<std::size_t> idx) const { return values_.at(flat_index(idx)); }

    // Scalar read; the tensor must hold exactly one element.
    double item() const {
        require(values_.size() == 1, "Tensor::item: tensor is not a scalar");
        return values_[0];
    }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        require(count(new_shape) == values_.size(), "Tensor::reshaped: element count mismatch");
        return Tensor(std::move(new_shape), values_);
    }

    // --- binary serialization: "FXT1", u32 rank, u64 extents, f64 payload, little-endian ---

    void save(std::ostream& out) const {
        static_assert(std::endian::native == std::endian::little,
                      "tensor serialization assumes a little-endian host");
        out.write("FXT1", 4);
        std::uint32_t rank32 = static_cast<std::uint32_t>(shape_.size());
        out.write(reinterpret_cast<const char*>(&rank32), sizeof(rank32));
        for (std::size_t e : shape_) {
            std::uint64_t e64 = e;
            out.write(reinterpret_cast<const char*>(&e64), sizeof(e64));
        }
        out.write(reinterpret_cast<const char*>(values_.data()),
                  static_cast<std::streamsize>(values_.size() * sizeof(double)));
        if (!out) throw IoError("Tensor::save: write failed");
    }

    static Tensor load(std::istream& in) {
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "FXT1", 4) != 0)
            throw IoError("Tensor::load: bad magic, expected FXT1");
        std::uint32_t rank32 = 0;
        in.read(reinterpret_cast<char*>(&rank32), sizeof(rank32));
        std::vector<std::size_t> shape(rank32);
        for (auto& e : shape) {
            std::uint64_t e64 = 0;
            in.read(reinterpret_cast<char*>(&e64), sizeof(e64));
            e = static_cast<std::size_t>(e64);
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.values_.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw IoError("Tensor::load: truncated stream");
        return t;
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("Tensor::save_file: cannot open " + path);
        save(out);
    }

    static Tensor load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("Tensor::load_file: cannot open " + path);
        return load(in);
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        require(idx.size() == shape_.size(), "Tensor::at: index rank mismatch");
        std::size_t flat = 0, dim = 0;
        for (std::size_t i : idx) {
            require(i < shape_[dim], "Tensor::at: index out of range");
            flat = flat * shape_[dim] + i;
            ++dim;
        }
        return flat;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

}  // namespace flexkernel
