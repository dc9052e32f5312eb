#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "flexkernel/rng.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

// Labeled image set: images [N, 1, H, W] scaled to [0, 1].
struct Dataset {
    Tensor images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Classic IDX image/label pair (big-endian headers, u8 payload).
inline Dataset load_idx_dataset(const std::string& images_path,
                                const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("load_idx_dataset: cannot open " + images_path);
    if (detail::read_be32(img) != 0x803)
        throw IoError("load_idx_dataset: bad image magic in " + images_path);
    const std::size_t n = detail::read_be32(img);
    const std::size_t rows = detail::read_be32(img);
    const std::size_t cols = detail::read_be32(img);
    std::vector<unsigned char> raw(n * rows * cols);
    img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!img) throw IoError("load_idx_dataset: truncated image payload in " + images_path);

    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw IoError("load_idx_dataset: cannot open " + labels_path);
    if (detail::read_be32(lbl) != 0x801)
        throw IoError("load_idx_dataset: bad label magic in " + labels_path);
    const std::size_t nl = detail::read_be32(lbl);
    if (nl != n) throw IoError("load_idx_dataset: image/label count mismatch");
    std::vector<unsigned char> lraw(n);
    lbl.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(n));
    if (!lbl) throw IoError("load_idx_dataset: truncated label payload in " + labels_path);

    Dataset d;
    d.images = Tensor({n, 1, rows, cols});
    for (std::size_t i = 0; i < raw.size(); ++i)
        d.images[i] = static_cast<double>(raw[i]) / 255.0;
    d.labels.assign(lraw.begin(), lraw.end());
    return d;
}

// 2x2 average pooling, halving each spatial extent.
inline Dataset downsample2x(const Dataset& src) {
    const std::size_t n = src.images.extent(0);
    const std::size_t h = src.images.extent(2), w = src.images.extent(3);
    require(h % 2 == 0 && w % 2 == 0, "downsample2x: extents must be even");
    Dataset d;
    d.labels = src.labels;
    d.images = Tensor({n, 1, h / 2, w / 2});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t x = 0; x < w / 2; ++x) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        s += src.images.at({i, 0, 2 * y + dy, 2 * x + dx});
                d.images.at({i, 0, y, x}) = s / 4.0;
            }
    return d;
}

inline Dataset take(const Dataset& src, std::size_t n) {
    require(n <= src.size(), "take: not enough samples");
    const std::size_t h = src.images.extent(2), w = src.images.extent(3);
    Dataset d;
    d.images = Tensor({n, 1, h, w});
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < n * plane; ++i) d.images[i] = src.images[i];
    d.labels.assign(src.labels.begin(), src.labels.begin() + static_cast<std::ptrdiff_t>(n));
    return d;
}

// Seeded Fisher-Yates order of one epoch, split into batches. The final
// short batch is kept.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                           std::size_t batch_size,
                                                           RngStream& rng) {
    require(batch_size >= 1, "epoch_batches: batch size must be >= 1");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_u64() % i;
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

inline Tensor gather_images(const Dataset& d, const std::vector<std::size_t>& idx) {
    const std::size_t h = d.images.extent(2), w = d.images.extent(3);
    const std::size_t plane = h * w;
    Tensor batch({idx.size(), 1, h, w});
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t p = 0; p < plane; ++p)
            batch[b * plane + p] = d.images[idx[b] * plane + p];
    return batch;
}

inline std::vector<int> gather_labels(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) out[b] = d.labels[idx[b]];
    return out;
}

}  // namespace flexkernel
