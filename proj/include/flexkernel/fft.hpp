#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "flexkernel/errors.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

using cdouble = std::complex<double>;

// Complex companion to Tensor, used for spectra.
struct CTensor {
    std::vector<std::size_t> shape;
    std::vector<cdouble> values;

    CTensor() = default;
    explicit CTensor(std::vector<std::size_t> s)
        : shape(std::move(s)), values(Tensor::count(shape), cdouble{0.0, 0.0}) {}

    std::size_t size() const { return values.size(); }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_pow2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cdouble wlen = std::polar(1.0, ang);
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w{1.0, 0.0};
            for (std::size_t j = 0; j < len / 2; ++j) {
                cdouble u = a[i + j];
                cdouble v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

// Bluestein chirp-z transform for arbitrary length, built on the pow2 kernel.
inline void fft_bluestein(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const double pi = 3.14159265358979323846;
    const double dir = inverse ? 1.0 : -1.0;
    std::vector<cdouble> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small and exact.
        std::size_t k2 = (k * k) % (2 * n);
        chirp[k] = std::polar(1.0, dir * pi * static_cast<double>(k2) / static_cast<double>(n));
    }
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<cdouble> x(m, cdouble{0.0, 0.0}), y(m, cdouble{0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    for (std::size_t k = 0; k < n; ++k) {
        y[k] = std::conj(chirp[k]);
        if (k != 0) y[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

inline void fft_line(std::vector<cdouble>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        fft_pow2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

}  // namespace detail

// Unnormalized forward DFT along the given dims; the inverse divides by the
// transformed extent so that ifft(fft(x)) == x.
inline void fft_nd_inplace(CTensor& t, const std::vector<std::size_t>& dims, bool inverse) {
    for (std::size_t dim : dims) {
        require(dim < t.shape.size(), "fft_nd: dim out of range");
        const std::size_t n = t.shape[dim];
        require(n >= 1, "fft_nd: extent must be >= 1");
        std::size_t stride = 1;
        for (std::size_t d = dim + 1; d < t.shape.size(); ++d) stride *= t.shape[d];
        const std::size_t block = stride * n;
        const std::size_t total = t.size();
        std::vector<cdouble> line(n);
        for (std::size_t base = 0; base < total; base += block) {
            for (std::size_t off = 0; off < stride; ++off) {
                for (std::size_t i = 0; i < n; ++i) line[i] = t.values[base + off + i * stride];
                detail::fft_line(line, inverse);
                for (std::size_t i = 0; i < n; ++i) t.values[base + off + i * stride] = line[i];
            }
        }
    }
}

inline CTensor to_complex(const Tensor& t) {
    CTensor c(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) c.values[i] = cdouble{t[i], 0.0};
    return c;
}

inline CTensor fft_nd(const Tensor& t, const std::vector<std::size_t>& dims) {
    CTensor c = to_complex(t);
    fft_nd_inplace(c, dims, false);
    return c;
}

inline CTensor ifft_nd(const CTensor& spectrum, const std::vector<std::size_t>& dims) {
    CTensor c = spectrum;
    fft_nd_inplace(c, dims, true);
    return c;
}

inline Tensor real_part(const CTensor& c) {
    Tensor t(c.shape);
    for (std::size_t i = 0; i < c.size(); ++i) t[i] = c.values[i].real();
    return t;
}

}  // namespace flexkernel
