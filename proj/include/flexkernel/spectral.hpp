#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "flexkernel/fft.hpp"
#include "flexkernel/flexconv.hpp"
#include "flexkernel/kernelgen.hpp"

namespace flexkernel {

// Settings for the analytic frequency bound and its empirical FFT check.
// sigma_cut counts envelope standard deviations retained by the bound (2
// covers 95% of the Gaussian mass). use_abs_weights applies |W| when reading
// sine frequencies; the printed form of the bound is signed, but a channel
// whose weights are all negative still has positive bandwidth, so the
// absolute-value convention is the default and the signed one is kept behind
// this flag for comparison.
struct SpectrumConfig {
    double sigma_cut = 2.0;
    double significance_ratio = 1e-3;
    bool use_abs_weights = true;
};

// Largest per-axis sine frequency of one channel, in Hz: max_j w_j / (2 pi),
// taken over |w_j| unless the signed convention is requested.
inline double max_freq_sine(const Tensor& w_row, bool use_abs_weights = true) {
    require(w_row.size() > 0, "max_freq_sine: empty frequency row");
    double best = use_abs_weights ? 0.0 : w_row[0] / kTwoPi;
    for (std::size_t j = 0; j < w_row.size(); ++j) {
        const double f = (use_abs_weights ? std::fabs(w_row[j]) : w_row[j]) / kTwoPi;
        best = std::max(best, f);
    }
    return best;
}

// Blur allowance of one channel's envelope: sigma_cut * min(gamma_x, gamma_y)
// / (2 pi). The 1-D overload takes gamma_x alone.
inline double max_freq_envelope(double gamma_x, double gamma_y, const SpectrumConfig& cfg) {
    require(gamma_x > 0.0 && gamma_y > 0.0, "max_freq_envelope: gamma must be positive");
    return cfg.sigma_cut * std::min(gamma_x, gamma_y) / kTwoPi;
}

inline double max_freq_envelope(double gamma_x, const SpectrumConfig& cfg) {
    require(gamma_x > 0.0, "max_freq_envelope: gamma must be positive");
    return cfg.sigma_cut * gamma_x / kTwoPi;
}

namespace detail {

// Per-channel sine and envelope terms of one Gabor layer, in Hz.
inline void gabor_layer_terms(const GaborLayerParams& g, std::size_t dims,
                              const SpectrumConfig& cfg, std::vector<double>& f_sin,
                              std::vector<double>& f_env) {
    const std::size_t n = g.gamma_x_raw.size();
    const Tensor gx = g.gamma_x();
    const Tensor gy = dims == 2 ? g.gamma_y() : Tensor();
    f_sin.resize(n);
    f_env.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor row({dims});
        for (std::size_t j = 0; j < dims; ++j) row[j] = g.sine_w[i * dims + j];
        f_sin[i] = max_freq_sine(row, cfg.use_abs_weights);
        f_env[i] = dims == 2 ? max_freq_envelope(gx[i], gy[i], cfg)
                             : max_freq_envelope(gx[i], cfg);
    }
}

}  // namespace detail

// Analytic bound on the highest frequency a MAGNet can generate:
// sum over layers of the best per-channel (sine + envelope) term.
inline double max_freq_magnet(const MagnetParams& p, const SpectrumConfig& cfg) {
    double total = 0.0;
    std::vector<double> f_sin, f_env;
    for (const auto& g : p.gabor) {
        detail::gabor_layer_terms(g, p.dims, cfg, f_sin, f_env);
        double best = f_sin[0] + f_env[0];
        for (std::size_t i = 1; i < f_sin.size(); ++i)
            best = std::max(best, f_sin[i] + f_env[i]);
        total += best;
    }
    return total;
}

// Blur allowance of the size mask: sigma_cut / (max(sigma_x, sigma_y) 2 pi).
inline double max_freq_mask(const GaussianMaskParams& mask, const SpectrumConfig& cfg) {
    const double s = mask.dims == 2 ? std::max(mask.sigma_x(), mask.sigma_y()) : mask.sigma_x();
    return cfg.sigma_cut / (s * kTwoPi);
}

// Nyquist frequency of a k-sample kernel over [-1,1]: (k-1)/4 Hz.
inline double nyquist(std::size_t k) {
    require(k >= 2, "nyquist: kernel size must be >= 2");
    return static_cast<double>(k - 1) / 4.0;
}

// Hinge penalty on frequency overshoot: ||max(f_plus, f_nyq) - f_nyq||^2.
inline double aliasing_loss(double f_plus, double f_nyq) {
    const double over = std::max(f_plus, f_nyq) - f_nyq;
    return over * over;
}

// Full report for one FlexConv kernel. The aliasing entry is evaluated on
// the combined bound f_plus_flexconv; training may regularize the MAGNet
// term alone, which is a separate choice.
struct SpectrumReport {
    double f_plus_magnet = 0.0;
    double f_plus_mask = 0.0;
    double f_plus_flexconv = 0.0;
    double f_nyquist = 0.0;
    double empirical_max = 0.0;
    double aliasing_loss = 0.0;
};

// ---------------------------------------------------------------------------
// Brute-force enumeration oracle.
// ---------------------------------------------------------------------------

// One combined frequency: a signed sum of per-layer sine terms plus the
// (always positive) envelope allowance of the same channel choice.
struct FrequencyEntry {
    double freq_hz = 0.0;
    double envelope_hz = 0.0;
};

struct FrequencySet {
    std::vector<FrequencyEntry> entries;
};

// All sign/channel combinations of the per-channel sine frequencies: sums
// s_l f[l, i_l] over channel tuples and sign patterns with s_1 = +1, plus the
// negated copies so the set is symmetric. Exponentially large by nature, so
// refuses networks beyond L <= 4, N_hid <= 8.
inline FrequencySet enumerate_frequency_set(const MagnetParams& p, const SpectrumConfig& cfg) {
    const std::size_t L = p.layers();
    require(L <= 4 && p.n_hidden <= 8,
            "enumerate_frequency_set: enumeration limited to L <= 4 and N_hid <= 8");
    std::vector<std::vector<double>> f_sin(L), f_env(L);
    for (std::size_t l = 0; l < L; ++l)
        detail::gabor_layer_terms(p.gabor[l], p.dims, cfg, f_sin[l], f_env[l]);
    FrequencySet set;
    const std::size_t n = p.n_hidden;
    std::size_t tuples = 1;
    for (std::size_t l = 0; l < L; ++l) tuples *= n;
    const std::size_t signs = static_cast<std::size_t>(1) << (L - 1);
    set.entries.reserve(2 * tuples * signs);
    for (std::size_t t = 0; t < tuples; ++t) {
        std::size_t rem = t;
        double env = 0.0;
        std::vector<std::size_t> idx(L);
        for (std::size_t l = 0; l < L; ++l) {
            idx[l] = rem % n;
            rem /= n;
            env += f_env[l][idx[l]];
        }
        for (std::size_t s = 0; s < signs; ++s) {
            double freq = f_sin[0][idx[0]];  // s_1 = +1
            for (std::size_t l = 1; l < L; ++l)
                freq += ((s >> (l - 1)) & 1 ? -1.0 : 1.0) * f_sin[l][idx[l]];
            set.entries.push_back({freq, env});
            set.entries.push_back({-freq, env});
        }
    }
    return set;
}

inline double brute_force_max_freq(const FrequencySet& set) {
    double best = 0.0;
    for (const auto& e : set.entries) best = std::max(best, e.freq_hz + e.envelope_hz);
    return best;
}

// ---------------------------------------------------------------------------
// Empirical spectrum.
// ---------------------------------------------------------------------------

// Taper applied before the spectral measurement. `none` keeps the raw
// samples: exact for content that is periodic over the grid (the single-tone
// cases), but an aperiodic kernel then carries a wrap-around discontinuity
// whose leakage spreads across all bins well above small significance
// ratios. `blackman_harris` suppresses that truncation artifact (sidelobes
// near -92 dB) at the cost of a few bins of mainlobe spread, which is the
// right trade for bound-containment measurements on arbitrary kernels.
enum class SpectralWindow { none, blackman_harris };

namespace detail {

// Two-sided frequency of DFT bin b of an n-point period-2 window: the folded
// index over 2, in Hz.
inline double bin_frequency(std::size_t b, std::size_t n) {
    const std::size_t folded = b <= n / 2 ? b : n - b;
    return static_cast<double>(folded) / 2.0;
}

inline std::vector<double> window_taps(std::size_t n, SpectralWindow window) {
    std::vector<double> w(n, 1.0);
    if (window == SpectralWindow::blackman_harris) {
        const double a0 = 0.35875, a1 = 0.48829, a2 = 0.14128, a3 = 0.01168;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
            w[i] = a0 - a1 * std::cos(t) + a2 * std::cos(2.0 * t) - a3 * std::cos(3.0 * t);
        }
    }
    return w;
}

// Walks the DFT bins of every channel pair. The grid spans [-1,1] inclusive,
// so under the periodic extension the final sample per axis duplicates the
// first; dropping it leaves k-1 samples over a window of exactly 2 units,
// which makes bin b sit at b/2 Hz and puts the top bin at (k-1)/4 Hz, the
// grid's Nyquist frequency.
template <class Fn>
void for_each_spectrum_bin(const Kernel& kernel, SpectralWindow window, Fn fn) {
    const std::size_t k = kernel.resolution;
    const std::size_t spatial = kernel.dims == 2 ? k * k : k;
    const std::size_t channels = kernel.values.size() / spatial;
    const std::size_t n = k > 1 ? k - 1 : 1;
    const std::vector<double> taps = window_taps(n, window);
    std::vector<std::size_t> dims(kernel.dims);
    for (std::size_t d = 0; d < kernel.dims; ++d) dims[d] = d;
    for (std::size_t c = 0; c < channels; ++c) {
        Tensor plane(std::vector<std::size_t>(kernel.dims, n));
        if (kernel.dims == 1) {
            for (std::size_t i = 0; i < n; ++i)
                plane[i] = kernel.values[c * spatial + i] * taps[i];
        } else {
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x)
                    plane[y * n + x] = kernel.values[c * spatial + y * k + x] * taps[y] * taps[x];
        }
        CTensor spec = fft_nd(plane, dims);
        for (std::size_t f = 0; f < spec.size(); ++f) {
            double freq;
            if (kernel.dims == 1) {
                freq = bin_frequency(f, n);
            } else {
                const std::size_t by = f / n, bx = f % n;
                freq = std::max(bin_frequency(by, n), bin_frequency(bx, n));
            }
            fn(freq, std::abs(spec.values[f]));
        }
    }
}

}  // namespace detail

// Highest frequency bin whose magnitude reaches significance_ratio of the
// kernel's peak spectral magnitude. A bin's frequency is the larger of its
// per-axis two-sided frequencies, matching the per-axis analytic bound.
inline double empirical_max_frequency(const Kernel& kernel, const SpectrumConfig& cfg,
                                      SpectralWindow window = SpectralWindow::none) {
    double peak = 0.0;
    detail::for_each_spectrum_bin(kernel, window,
                                  [&](double, double mag) { peak = std::max(peak, mag); });
    double best = 0.0;
    if (peak == 0.0) return 0.0;
    detail::for_each_spectrum_bin(kernel, window, [&](double freq, double mag) {
        if (mag >= cfg.significance_ratio * peak) best = std::max(best, freq);
    });
    return best;
}

// Fraction of spectral energy (squared magnitude) strictly above f_cut Hz.
inline double spectral_mass_above(const Kernel& kernel, double f_cut,
                                  SpectralWindow window = SpectralWindow::none) {
    double total = 0.0, above = 0.0;
    detail::for_each_spectrum_bin(kernel, window, [&](double freq, double mag) {
        total += mag * mag;
        if (freq > f_cut) above += mag * mag;
    });
    return total > 0.0 ? above / total : 0.0;
}

// ---------------------------------------------------------------------------
// Report assembly.
// ---------------------------------------------------------------------------

inline SpectrumReport max_freq_flexconv(const MagnetParams& p, const GaussianMaskParams& mask,
                                        const SpectrumConfig& cfg) {
    SpectrumReport r;
    r.f_plus_magnet = max_freq_magnet(p, cfg);
    r.f_plus_mask = max_freq_mask(mask, cfg);
    r.f_plus_flexconv = r.f_plus_magnet + r.f_plus_mask;
    return r;
}

inline SpectrumReport spectrum_report(const MagnetParams& p, const GaussianMaskParams& mask,
                                      std::size_t k, const SpectrumConfig& cfg) {
    SpectrumReport r = max_freq_flexconv(p, mask, cfg);
    r.f_nyquist = nyquist(k);
    CoordinateGrid grid = make_grid(p.dims, k);
    Kernel kernel = magnet_forward(grid, p);
    Tensor m = gaussian_mask(grid, mask);
    Kernel masked = kernel;
    const std::size_t spatial = m.size();
    const std::size_t channels = kernel.values.size() / spatial;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t s = 0; s < spatial; ++s) masked.values[c * spatial + s] *= m[s];
    r.empirical_max = empirical_max_frequency(masked, cfg);
    r.aliasing_loss = aliasing_loss(r.f_plus_flexconv, r.f_nyquist);
    return r;
}

// ---------------------------------------------------------------------------
// Differentiable bound for training.
// ---------------------------------------------------------------------------

inline Var max_freq_magnet_t(Tape& tape, const MagnetVars& v, const SpectrumConfig& cfg) {
    Var total;
    for (std::size_t l = 0; l < v.gabor.size(); ++l) {
        const GaborLayerVars& g = v.gabor[l];
        Var w = cfg.use_abs_weights ? abs_v(g.sine_w) : g.sine_w;
        Var f_sin = scale(reduce_max_axis(w, 1), 1.0 / kTwoPi);  // [N]
        Var gx = softplus(g.gamma_x_raw);
        Var gmin = gx;
        if (v.dims == 2) {
            Var gy = g.isotropic ? gx : softplus(g.gamma_y_raw);
            gmin = minimum(gx, gy);
        }
        Var f_env = scale(gmin, cfg.sigma_cut / kTwoPi);
        Var layer_best = reduce_max_all(f_sin + f_env);
        total = l == 0 ? layer_best : total + layer_best;
    }
    return total;
}

inline Var max_freq_mask_t(Tape& tape, const MaskVars& v, const SpectrumConfig& cfg) {
    Var sx = softplus(v.raw_sigma_x);
    Var smax = sx;
    if (v.dims == 2) smax = maximum(sx, softplus(v.raw_sigma_y));
    Var one = tape.constant(Tensor::scalar(1.0));
    return scale(one / smax, cfg.sigma_cut / kTwoPi);
}

inline Var max_freq_flexconv_t(Tape& tape, const MagnetVars& mv, const MaskVars& kv,
                               const SpectrumConfig& cfg) {
    return max_freq_magnet_t(tape, mv, cfg) + max_freq_mask_t(tape, kv, cfg);
}

// relu(f_plus - f_nyq)^2: zero value and zero gradient below the hinge.
inline Var aliasing_loss_t(Var f_plus, double f_nyq) {
    Var over = relu(add_scalar(f_plus, -f_nyq));
    return over * over;
}

}  // namespace flexkernel
