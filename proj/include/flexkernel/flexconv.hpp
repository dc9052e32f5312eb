#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flexkernel/fft.hpp"
#include "flexkernel/kernelgen.hpp"
#include "flexkernel/nn_ops.hpp"

namespace flexkernel {

// Learnable kernel-size mask: separable Gaussian with per-axis center and
// width. Widths are stored unconstrained and pass through softplus. For
// dims == 1 the y fields stay empty.
struct GaussianMaskParams {
    std::size_t dims = 2;
    Tensor mu_x = Tensor::scalar(0.0);
    Tensor mu_y;
    Tensor raw_sigma_x;
    Tensor raw_sigma_y;

    double sigma_x() const { return softplus_scalar(raw_sigma_x.item()); }
    double sigma_y() const { return softplus_scalar(raw_sigma_y.item()); }

    void set_sigma(double sx, double sy = 0.0) {
        require(sx > 0.0, "GaussianMaskParams: sigma must be positive");
        raw_sigma_x = Tensor::scalar(softplus_inverse(sx));
        if (dims == 2) {
            require(sy > 0.0, "GaussianMaskParams: sigma must be positive");
            raw_sigma_y = Tensor::scalar(softplus_inverse(sy));
        }
    }

    template <class Fn>
    void for_each_param(Fn fn, const std::string& prefix = "") {
        fn(prefix + "mask.mu_x", mu_x);
        fn(prefix + "mask.raw_sigma_x", raw_sigma_x);
        if (dims == 2) {
            fn(prefix + "mask.mu_y", mu_y);
            fn(prefix + "mask.raw_sigma_y", raw_sigma_y);
        }
    }
};

struct MaskVars {
    std::size_t dims = 2;
    Var mu_x, mu_y, raw_sigma_x, raw_sigma_y;
};

inline MaskVars bind_mask(Tape& tape, GaussianMaskParams& p, std::vector<BoundParam>* reg,
                          const std::string& prefix = "") {
    MaskVars v;
    v.dims = p.dims;
    auto bind = [&](const std::string& name, Tensor& t) -> Var {
        if (!reg) return tape.constant(t);
        Var var = tape.input(t, name);
        reg->push_back(BoundParam{name, &t, var, ParamGroup::mask});
        return var;
    };
    v.mu_x = bind(prefix + "mask.mu_x", p.mu_x);
    v.raw_sigma_x = bind(prefix + "mask.raw_sigma_x", p.raw_sigma_x);
    if (p.dims == 2) {
        v.mu_y = bind(prefix + "mask.mu_y", p.mu_y);
        v.raw_sigma_y = bind(prefix + "mask.raw_sigma_y", p.raw_sigma_y);
    }
    return v;
}

// w(x, y) = exp(-1/2 sigma_x^-2 (x-mu_x)^2) exp(-1/2 sigma_y^-2 (y-mu_y)^2),
// returned over the grid's spatial shape; values lie in (0, 1] with the peak
// exactly 1 where the center falls on a grid point.
inline Var gaussian_mask_t(Tape& tape, const CoordinateGrid& grid, const MaskVars& v) {
    require(grid.dims == v.dims, "gaussian_mask: grid dims must match mask dims");
    Var x = tape.constant(grid.axis_column(0));
    Var tx = (x - v.mu_x) / softplus(v.raw_sigma_x);
    Var q = tx * tx;
    if (v.dims == 2) {
        Var y = tape.constant(grid.axis_column(1));
        Var ty = (y - v.mu_y) / softplus(v.raw_sigma_y);
        q = q + ty * ty;
    }
    std::vector<std::size_t> shape = grid.spatial_shape();
    return reshape(exp_v(scale(q, -0.5)), shape);
}

inline Tensor gaussian_mask(const CoordinateGrid& grid, const GaussianMaskParams& p) {
    Tape tape;
    GaussianMaskParams copy = p;
    return gaussian_mask_t(tape, grid, bind_mask(tape, copy, nullptr)).value();
}

// ---------------------------------------------------------------------------
// Cropping.
// ---------------------------------------------------------------------------

struct CropBox {
    std::vector<std::size_t> lo, hi;  // half-open per spatial dim

    std::vector<std::size_t> extents() const {
        std::vector<std::size_t> e(lo.size());
        for (std::size_t d = 0; d < lo.size(); ++d) e[d] = hi[d] - lo[d];
        return e;
    }
};

struct ConvConfig {
    enum class Mode { direct, fft };
    Mode mode = Mode::direct;
    bool causal = false;  // 1-D only
    double crop_threshold = 0.1;
};

// Tightest axis-aligned box containing every mask value above the threshold.
// Falls back to the single peak sample if nothing clears the threshold, so
// the box is never empty.
inline CropBox crop_box_from_mask(const Tensor& mask, double threshold) {
    require(threshold > 0.0 && threshold < 1.0, "crop threshold must lie in (0,1)");
    const std::size_t rank = mask.rank();
    CropBox box;
    box.lo.assign(rank, mask.size());
    box.hi.assign(rank, 0);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t peak = 0;
    for (std::size_t f = 0; f < mask.size(); ++f) {
        if (mask[f] > mask[peak]) peak = f;
        if (mask[f] > threshold)
            for (std::size_t d = 0; d < rank; ++d) {
                box.lo[d] = std::min(box.lo[d], idx[d]);
                box.hi[d] = std::max(box.hi[d], idx[d] + 1);
            }
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < mask.extent(d)) break;
            idx[d] = 0;
        }
    }
    if (box.hi[0] == 0) {  // nothing above threshold: keep the peak sample
        std::size_t rem = peak;
        for (std::size_t d = rank; d-- > 0;) {
            box.lo[d] = rem % mask.extent(d);
            box.hi[d] = box.lo[d] + 1;
            rem /= mask.extent(d);
        }
    }
    return box;
}

// The three faces of a FlexConv kernel: the raw generator output, the mask,
// their product, and the crop of the product over the mask's support box.
struct FlexKernel {
    Kernel full;
    Tensor mask;
    Kernel masked;
    CropBox crop_box;
    Kernel cropped;
};

inline FlexKernel apply_mask_and_crop(const Kernel& kernel, const Tensor& mask,
                                      const ConvConfig& cfg) {
    const std::size_t spatial = mask.size();
    require(kernel.values.size() % spatial == 0 &&
                kernel.values.rank() == 2 + mask.rank(),
            "apply_mask_and_crop: kernel and mask shapes do not align");
    FlexKernel fk;
    fk.full = kernel;
    fk.mask = mask;
    fk.masked = kernel;
    const std::size_t channels = kernel.values.size() / spatial;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t s = 0; s < spatial; ++s)
            fk.masked.values[c * spatial + s] = kernel.values[c * spatial + s] * mask[s];
    fk.crop_box = crop_box_from_mask(mask, cfg.crop_threshold);

    const std::size_t rank = mask.rank();
    std::vector<std::size_t> lo(2, 0), hi{kernel.values.extent(0), kernel.values.extent(1)};
    for (std::size_t d = 0; d < rank; ++d) {
        lo.push_back(fk.crop_box.lo[d]);
        hi.push_back(fk.crop_box.hi[d]);
    }
    Tape tape;
    Var m = tape.constant(fk.masked.values);
    fk.cropped.values = crop(m, lo, hi).value();
    fk.cropped.resolution = kernel.resolution;
    fk.cropped.dims = kernel.dims;
    return fk;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) with a FlexConv kernel.
// ---------------------------------------------------------------------------

namespace detail {

// Tap offsets of the cropped kernel relative to an output position. Centered
// alignment uses the full grid's center sample; causal alignment puts the
// final full-grid tap at the current time step.
inline std::vector<std::ptrdiff_t> tap_offsets(const CropBox& box, std::size_t k, bool causal) {
    std::vector<std::ptrdiff_t> off(box.lo.size());
    for (std::size_t d = 0; d < box.lo.size(); ++d) {
        if (causal)
            off[d] = static_cast<std::ptrdiff_t>(box.lo[d]) - static_cast<std::ptrdiff_t>(k - 1);
        else
            off[d] = static_cast<std::ptrdiff_t>(box.lo[d]) -
                     static_cast<std::ptrdiff_t>((k - 1) / 2);
    }
    return off;
}

inline Tensor convolve_fft2d(const Tensor& signal, const Tensor& kernel, std::ptrdiff_t oy,
                             std::ptrdiff_t ox) {
    const std::size_t Ci = signal.extent(0), H = signal.extent(1), W = signal.extent(2);
    const std::size_t Co = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
    const std::size_t NY = detail::next_pow2(H + kh), NX = detail::next_pow2(W + kw);
    std::vector<CTensor> sig_f(Ci, CTensor({NY, NX}));
    for (std::size_t c = 0; c < Ci; ++c) {
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                sig_f[c].values[y * NX + x] = signal[(c * H + y) * W + x];
        fft_nd_inplace(sig_f[c], {0, 1}, false);
    }
    Tensor out({Co, H, W});
    for (std::size_t oc = 0; oc < Co; ++oc) {
        CTensor acc({NY, NX});
        for (std::size_t ic = 0; ic < Ci; ++ic) {
            CTensor ker({NY, NX});
            for (std::size_t y = 0; y < kh; ++y)
                for (std::size_t x = 0; x < kw; ++x)
                    ker.values[y * NX + x] = kernel[((oc * Ci + ic) * kh + y) * kw + x];
            fft_nd_inplace(ker, {0, 1}, false);
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc.values[i] += sig_f[ic].values[i] * std::conj(ker.values[i]);
        }
        fft_nd_inplace(acc, {0, 1}, true);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t zy =
                    static_cast<std::size_t>((static_cast<std::ptrdiff_t>(y) + oy +
                                              static_cast<std::ptrdiff_t>(NY)) %
                                             static_cast<std::ptrdiff_t>(NY));
                const std::size_t zx =
                    static_cast<std::size_t>((static_cast<std::ptrdiff_t>(x) + ox +
                                              static_cast<std::ptrdiff_t>(NX)) %
                                             static_cast<std::ptrdiff_t>(NX));
                out[(oc * H + y) * W + x] = acc.values[zy * NX + zx].real();
            }
    }
    return out;
}

inline Tensor convolve_fft1d(const Tensor& signal, const Tensor& kernel, std::ptrdiff_t ot) {
    const std::size_t Ci = signal.extent(0), T = signal.extent(1);
    const std::size_t Co = kernel.extent(0), m = kernel.extent(2);
    const std::size_t N = detail::next_pow2(T + m);
    std::vector<CTensor> sig_f(Ci, CTensor({N}));
    for (std::size_t c = 0; c < Ci; ++c) {
        for (std::size_t t = 0; t < T; ++t) sig_f[c].values[t] = signal[c * T + t];
        fft_nd_inplace(sig_f[c], {0}, false);
    }
    Tensor out({Co, T});
    for (std::size_t oc = 0; oc < Co; ++oc) {
        CTensor acc({N});
        for (std::size_t ic = 0; ic < Ci; ++ic) {
            CTensor ker({N});
            for (std::size_t j = 0; j < m; ++j) ker.values[j] = kernel[(oc * Ci + ic) * m + j];
            fft_nd_inplace(ker, {0}, false);
            for (std::size_t i = 0; i < N; ++i)
                acc.values[i] += sig_f[ic].values[i] * std::conj(ker.values[i]);
        }
        fft_nd_inplace(acc, {0}, true);
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t z = static_cast<std::size_t>(
                (static_cast<std::ptrdiff_t>(t) + ot + static_cast<std::ptrdiff_t>(N)) %
                static_cast<std::ptrdiff_t>(N));
            out[oc * T + t] = acc.values[z].real();
        }
    }
    return out;
}

}  // namespace detail

// Cross-correlate a signal with the cropped kernel. 2-D signals are
// [n_in, H, W] with zero "same" padding; 1-D signals are [n_in, T], either
// centered or causal (output at t only sees inputs at <= t). Direct and FFT
// modes produce the same values to high accuracy.
inline Tensor convolve(const Tensor& signal, const FlexKernel& fk, const ConvConfig& cfg) {
    const Kernel& ker = fk.cropped;
    const std::size_t D = ker.dims;
    require(signal.rank() == 1 + D, "convolve: signal must be [channels, spatial...]");
    require(signal.extent(0) == ker.values.extent(1),
            "convolve: signal channels must match kernel n_in");
    require(!cfg.causal || D == 1, "convolve: causal mode is 1-D only");
    auto off = detail::tap_offsets(fk.crop_box, ker.resolution, cfg.causal);
    if (D == 2) {
        if (cfg.mode == ConvConfig::Mode::fft)
            return detail::convolve_fft2d(signal, ker.values, off[0], off[1]);
        const std::size_t Ci = signal.extent(0), H = signal.extent(1), W = signal.extent(2);
        Tensor out({ker.values.extent(0), H, W});
        detail::corr2d_accum(signal.data(), out.data(), ker.values.data(), 1, Ci, H, W,
                             ker.values.extent(0), ker.values.extent(2), ker.values.extent(3),
                             off[0], off[1]);
        return out;
    }
    if (cfg.mode == ConvConfig::Mode::fft)
        return detail::convolve_fft1d(signal, ker.values, off[0]);
    const std::size_t Ci = signal.extent(0), T = signal.extent(1);
    const std::size_t Co = ker.values.extent(0), m = ker.values.extent(2);
    Tensor out({Co, T});
    for (std::size_t oc = 0; oc < Co; ++oc)
        for (std::size_t ic = 0; ic < Ci; ++ic) {
            const double* srow = signal.data() + ic * T;
            const double* krow = ker.values.data() + (oc * Ci + ic) * m;
            double* orow = out.data() + oc * T;
            for (std::size_t j = 0; j < m; ++j) {
                const double w = krow[j];
                if (w == 0.0) continue;
                const std::ptrdiff_t d = off[0] + static_cast<std::ptrdiff_t>(j);
                const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -d);
                const std::ptrdiff_t t1 =
                    std::min<std::ptrdiff_t>(T, static_cast<std::ptrdiff_t>(T) - d);
                for (std::ptrdiff_t t = t0; t < t1; ++t) orow[t] += w * srow[t + d];
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-resolution resampling.
// ---------------------------------------------------------------------------

// Re-evaluates the continuous kernel on a k_dst grid. The returned scale,
// (r_src/r_dst)^D with r = (k-1)/2 samples per unit, multiplies convolutions
// taken at the destination resolution to approximate source-resolution
// responses.
struct ResampledKernel {
    FlexKernel kernel;
    double scale = 1.0;
};

inline ResampledKernel resample_kernel(const MagnetParams& p, const GaussianMaskParams& mask,
                                       std::size_t k_src, std::size_t k_dst,
                                       const ConvConfig& cfg) {
    require(k_src >= 2 && k_dst >= 2, "resample_kernel: resolutions must be >= 2");
    CoordinateGrid grid = make_grid(p.dims, k_dst);
    Kernel kernel = magnet_forward(grid, p);
    Tensor m = gaussian_mask(grid, mask);
    ResampledKernel out;
    out.kernel = apply_mask_and_crop(kernel, m, cfg);
    const double r_src = static_cast<double>(k_src - 1) / 2.0;
    const double r_dst = static_cast<double>(k_dst - 1) / 2.0;
    out.scale = std::pow(r_src / r_dst, static_cast<double>(p.dims));
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable FlexConv kernel for training.
// ---------------------------------------------------------------------------

struct TapeFlexKernel {
    Var cropped;  // [n_out, n_in, cropped spatial...]
    CropBox box;
    std::vector<std::ptrdiff_t> offsets;  // tap offsets for conv2d/conv1d
};

// Masked, cropped kernel on the tape. The crop box is chosen from the mask
// values and treated as a fixed index set; gradients flow through the kernel
// and mask values inside the box only.
inline TapeFlexKernel flexconv_kernel_t(Tape& tape, const CoordinateGrid& grid,
                                        const MagnetVars& magnet, const MaskVars& mask,
                                        const ConvConfig& cfg) {
    Var kernel = magnet_forward_t(tape, grid, magnet);
    Var m = gaussian_mask_t(tape, grid, mask);
    Var masked = kernel * m;  // mask broadcasts over [n_out, n_in]
    TapeFlexKernel out;
    out.box = crop_box_from_mask(m.value(), cfg.crop_threshold);
    std::vector<std::size_t> lo{0, 0}, hi{magnet.n_out, magnet.n_in};
    for (std::size_t d = 0; d < out.box.lo.size(); ++d) {
        lo.push_back(out.box.lo[d]);
        hi.push_back(out.box.hi[d]);
    }
    out.cropped = crop(masked, lo, hi);
    out.offsets = detail::tap_offsets(out.box, grid.resolution, cfg.causal);
    return out;
}

}  // namespace flexkernel
