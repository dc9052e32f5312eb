#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flexkernel/autodiff.hpp"
#include "flexkernel/grid.hpp"
#include "flexkernel/rng.hpp"

namespace flexkernel {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Optimizer grouping: mask parameters train at a reduced learning rate.
enum class ParamGroup { regular, mask };

// Live binding between a parameter tensor owned by a model struct and the
// tape node created for the current forward pass.
struct BoundParam {
    std::string name;
    Tensor* value;
    Var var;
    ParamGroup group = ParamGroup::regular;
};

// A sampled convolutional kernel: [n_out, n_in, spatial...].
struct Kernel {
    Tensor values;
    std::size_t resolution = 0;
    std::size_t dims = 0;
};

// One multiplicative Gabor layer: per-channel anisotropic Gaussian envelopes
// times a sinusoid. Envelope widths are stored as unconstrained reals and
// mapped through softplus, so positivity survives gradient updates. For
// dims == 1 the y-axis fields stay empty. The isotropic flag ties the y
// envelope to the x envelope (gamma_y_raw is then unused).
struct GaborLayerParams {
    Tensor gamma_x_raw;  // [N_hid]
    Tensor gamma_y_raw;  // [N_hid] or empty
    Tensor mu_x;         // [N_hid]
    Tensor mu_y;         // [N_hid] or empty
    Tensor sine_w;       // [N_hid, D], radians per unit
    Tensor sine_b;       // [N_hid], radians
    bool isotropic = false;

    Tensor gamma_x() const { return softplus_of(gamma_x_raw); }
    Tensor gamma_y() const { return softplus_of(isotropic ? gamma_x_raw : gamma_y_raw); }

    void set_gamma_x(const Tensor& gamma) { gamma_x_raw = raw_from(gamma); }
    void set_gamma_y(const Tensor& gamma) {
        require(!isotropic, "GaborLayerParams: cannot set gamma_y on an isotropic layer");
        gamma_y_raw = raw_from(gamma);
    }

    static Tensor softplus_of(const Tensor& raw) {
        Tensor g(raw.shape());
        for (std::size_t i = 0; i < raw.size(); ++i) g[i] = softplus_scalar(raw[i]);
        return g;
    }

    static Tensor raw_from(const Tensor& gamma) {
        Tensor raw(gamma.shape());
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            require(gamma[i] > 0.0, "GaborLayerParams: envelope width must be positive");
            raw[i] = softplus_inverse(gamma[i]);
        }
        return raw;
    }
};

// Multiplicative anisotropic Gabor network. `gabor.size()` counts the Gabor
// layers L; between consecutive Gabor products sit L-1 hidden affine maps,
// and a final affine map projects to N = n_out * n_in kernel channels.
struct MagnetParams {
    std::size_t dims = 2;
    std::size_t n_hidden = 0;
    std::size_t n_in = 1;
    std::size_t n_out = 1;
    std::vector<GaborLayerParams> gabor;
    std::vector<Tensor> lin_w;  // [N_hid, N_hid] each
    std::vector<Tensor> lin_b;  // [N_hid] each
    Tensor out_w;               // [N, N_hid]
    Tensor out_b;               // [N]

    std::size_t layers() const { return gabor.size(); }

    template <class Fn>
    void for_each_param(Fn fn, const std::string& prefix = "") {
        for (std::size_t l = 0; l < gabor.size(); ++l) {
            const std::string g = prefix + "gabor" + std::to_string(l + 1) + ".";
            fn(g + "gamma_x_raw", gabor[l].gamma_x_raw);
            if (dims == 2 && !gabor[l].isotropic) fn(g + "gamma_y_raw", gabor[l].gamma_y_raw);
            fn(g + "mu_x", gabor[l].mu_x);
            if (dims == 2) fn(g + "mu_y", gabor[l].mu_y);
            fn(g + "sine_w", gabor[l].sine_w);
            fn(g + "sine_b", gabor[l].sine_b);
        }
        for (std::size_t l = 0; l < lin_w.size(); ++l) {
            fn(prefix + "lin" + std::to_string(l + 2) + ".w", lin_w[l]);
            fn(prefix + "lin" + std::to_string(l + 2) + ".b", lin_b[l]);
        }
        fn(prefix + "out.w", out_w);
        fn(prefix + "out.b", out_b);
    }
};

struct GaborLayerVars {
    Var gamma_x_raw, gamma_y_raw, mu_x, mu_y, sine_w, sine_b;
    bool isotropic = false;
};

struct MagnetVars {
    std::size_t dims = 2, n_hidden = 0, n_in = 1, n_out = 1;
    std::vector<GaborLayerVars> gabor;
    std::vector<Var> lin_w, lin_b;
    Var out_w, out_b;
};

// Bind the parameter tensors onto a tape. With `reg` null they enter as
// constants (pure evaluation); otherwise as named inputs collected for the
// optimizer.
inline MagnetVars bind_magnet(Tape& tape, MagnetParams& p, std::vector<BoundParam>* reg,
                              const std::string& prefix = "") {
    MagnetVars v;
    v.dims = p.dims;
    v.n_hidden = p.n_hidden;
    v.n_in = p.n_in;
    v.n_out = p.n_out;
    auto bind = [&](const std::string& name, Tensor& t) -> Var {
        if (!reg) return tape.constant(t);
        Var var = tape.input(t, name);
        reg->push_back(BoundParam{name, &t, var, ParamGroup::regular});
        return var;
    };
    for (std::size_t l = 0; l < p.gabor.size(); ++l) {
        GaborLayerParams& g = p.gabor[l];
        const std::string gp = prefix + "gabor" + std::to_string(l + 1) + ".";
        GaborLayerVars gv;
        gv.isotropic = g.isotropic;
        gv.gamma_x_raw = bind(gp + "gamma_x_raw", g.gamma_x_raw);
        if (p.dims == 2 && !g.isotropic) gv.gamma_y_raw = bind(gp + "gamma_y_raw", g.gamma_y_raw);
        gv.mu_x = bind(gp + "mu_x", g.mu_x);
        if (p.dims == 2) gv.mu_y = bind(gp + "mu_y", g.mu_y);
        gv.sine_w = bind(gp + "sine_w", g.sine_w);
        gv.sine_b = bind(gp + "sine_b", g.sine_b);
        v.gabor.push_back(gv);
    }
    for (std::size_t l = 0; l < p.lin_w.size(); ++l) {
        v.lin_w.push_back(bind(prefix + "lin" + std::to_string(l + 2) + ".w", p.lin_w[l]));
        v.lin_b.push_back(bind(prefix + "lin" + std::to_string(l + 2) + ".b", p.lin_b[l]));
    }
    v.out_w = bind(prefix + "out.w", p.out_w);
    v.out_b = bind(prefix + "out.b", p.out_b);
    return v;
}

// g(x, y) = exp(-1/2 [(gamma_x (x - mu_x))^2 + (gamma_y (y - mu_y))^2])
//           * sin(W_g [x, y] + b_g), evaluated per channel over the grid.
// Returns [P, N_hid]. For dims == 1 the y terms are dropped entirely.
inline Var gabor_layer_forward_t(Tape& tape, const CoordinateGrid& grid,
                                 const GaborLayerVars& p) {
    const std::size_t D = grid.dims;
    require(p.sine_w.value().extent(1) == D,
            "gabor_layer_forward: sine weight columns must match grid dims");
    Var gx = softplus(p.gamma_x_raw);
    Var x = tape.constant(grid.axis_column(0));
    Var tx = (x - p.mu_x) * gx;
    Var q = tx * tx;
    if (D == 2) {
        Var gy = p.isotropic ? gx : softplus(p.gamma_y_raw);
        Var y = tape.constant(grid.axis_column(1));
        Var ty = (y - p.mu_y) * gy;
        q = q + ty * ty;
    }
    Var envelope = exp_v(scale(q, -0.5));
    Var pos = tape.constant(grid.flat_positions());
    Var phase = matmul(pos, transpose2d(p.sine_w)) + p.sine_b;
    return envelope * sin_v(phase);
}

// h1 = g1; hl = (W hl-1 + b) * gl; kernel = W_out hL + b_out, reshaped to
// [n_out, n_in, spatial...].
inline Var magnet_forward_t(Tape& tape, const CoordinateGrid& grid, const MagnetVars& v) {
    require(!v.gabor.empty(), "magnet_forward: at least one Gabor layer required");
    require(v.lin_w.size() + 1 == v.gabor.size(),
            "magnet_forward: need exactly L-1 hidden affine maps for L Gabor layers");
    Var h = gabor_layer_forward_t(tape, grid, v.gabor[0]);
    for (std::size_t l = 1; l < v.gabor.size(); ++l) {
        Var lin = matmul(h, transpose2d(v.lin_w[l - 1])) + v.lin_b[l - 1];
        h = lin * gabor_layer_forward_t(tape, grid, v.gabor[l]);
    }
    Var out = matmul(h, transpose2d(v.out_w)) + v.out_b;  // [P, N]
    std::vector<std::size_t> shape{v.n_out, v.n_in};
    for (std::size_t e : grid.spatial_shape()) shape.push_back(e);
    return reshape(transpose2d(out), shape);
}

inline Tensor gabor_layer_forward(const CoordinateGrid& grid, const GaborLayerParams& p) {
    Tape tape;
    GaborLayerParams copy = p;
    GaborLayerVars gv;
    gv.isotropic = copy.isotropic;
    gv.gamma_x_raw = tape.constant(copy.gamma_x_raw);
    if (grid.dims == 2 && !copy.isotropic) gv.gamma_y_raw = tape.constant(copy.gamma_y_raw);
    gv.mu_x = tape.constant(copy.mu_x);
    if (grid.dims == 2) gv.mu_y = tape.constant(copy.mu_y);
    gv.sine_w = tape.constant(copy.sine_w);
    gv.sine_b = tape.constant(copy.sine_b);
    return gabor_layer_forward_t(tape, grid, gv).value();
}

inline Kernel magnet_forward(const CoordinateGrid& grid, const MagnetParams& p) {
    Tape tape;
    MagnetParams copy = p;
    MagnetVars v = bind_magnet(tape, copy, nullptr);
    Tensor values = magnet_forward_t(tape, grid, v).value();
    return Kernel{std::move(values), grid.resolution, grid.dims};
}

// MGN is the isotropic special case; the forward path is shared.
inline Kernel mgn_forward(const CoordinateGrid& grid, const MagnetParams& p) {
    for (const auto& g : p.gabor)
        require(g.isotropic, "mgn_forward: all layers must be isotropic");
    return magnet_forward(grid, p);
}

// ---------------------------------------------------------------------------
// SIREN baseline: stacked sin(omega0 (W x + b)) layers with a linear head.
// ---------------------------------------------------------------------------

struct SirenParams {
    std::size_t dims = 2;
    std::size_t hidden = 0;
    std::size_t n_in = 1;
    std::size_t n_out = 1;
    double omega0 = 30.0;
    std::vector<Tensor> w;  // first [hidden, D], then [hidden, hidden]
    std::vector<Tensor> b;  // [hidden]
    Tensor out_w;           // [N, hidden]
    Tensor out_b;           // [N]

    std::size_t layers() const { return w.size(); }

    template <class Fn>
    void for_each_param(Fn fn, const std::string& prefix = "") {
        for (std::size_t l = 0; l < w.size(); ++l) {
            fn(prefix + "sine" + std::to_string(l + 1) + ".w", w[l]);
            fn(prefix + "sine" + std::to_string(l + 1) + ".b", b[l]);
        }
        fn(prefix + "out.w", out_w);
        fn(prefix + "out.b", out_b);
    }
};

struct SirenVars {
    std::size_t dims = 2, hidden = 0, n_in = 1, n_out = 1;
    double omega0 = 30.0;
    std::vector<Var> w, b;
    Var out_w, out_b;
};

inline SirenVars bind_siren(Tape& tape, SirenParams& p, std::vector<BoundParam>* reg,
                            const std::string& prefix = "") {
    SirenVars v;
    v.dims = p.dims;
    v.hidden = p.hidden;
    v.n_in = p.n_in;
    v.n_out = p.n_out;
    v.omega0 = p.omega0;
    auto bind = [&](const std::string& name, Tensor& t) -> Var {
        if (!reg) return tape.constant(t);
        Var var = tape.input(t, name);
        reg->push_back(BoundParam{name, &t, var, ParamGroup::regular});
        return var;
    };
    for (std::size_t l = 0; l < p.w.size(); ++l) {
        v.w.push_back(bind(prefix + "sine" + std::to_string(l + 1) + ".w", p.w[l]));
        v.b.push_back(bind(prefix + "sine" + std::to_string(l + 1) + ".b", p.b[l]));
    }
    v.out_w = bind(prefix + "out.w", p.out_w);
    v.out_b = bind(prefix + "out.b", p.out_b);
    return v;
}

// Sine layers apply sin(omega0 * W h + b): the frequency scale multiplies the
// weight product only, leaving phases in natural units.
inline Var siren_forward_t(Tape& tape, const CoordinateGrid& grid, const SirenVars& v) {
    require(!v.w.empty(), "siren_forward: at least one sine layer required");
    Var h = tape.constant(grid.flat_positions());
    for (std::size_t l = 0; l < v.w.size(); ++l)
        h = sin_v(scale(matmul(h, transpose2d(v.w[l])), v.omega0) + v.b[l]);
    Var out = matmul(h, transpose2d(v.out_w)) + v.out_b;
    std::vector<std::size_t> shape{v.n_out, v.n_in};
    for (std::size_t e : grid.spatial_shape()) shape.push_back(e);
    return reshape(transpose2d(out), shape);
}

inline Kernel siren_forward(const CoordinateGrid& grid, const SirenParams& p) {
    Tape tape;
    SirenParams copy = p;
    SirenVars v = bind_siren(tape, copy, nullptr);
    Tensor values = siren_forward_t(tape, grid, v).value();
    return Kernel{std::move(values), grid.resolution, grid.dims};
}

// ---------------------------------------------------------------------------
// Initialization.
// ---------------------------------------------------------------------------

// Gamma draws use the (shape, rate) convention with mean alpha/beta; envelope
// widths at Gabor layer l are drawn from Gamma(alpha/l, beta), so deeper
// layers start with smaller (wider-envelope) gammas. Checkpoints record the
// convention tag "shape-rate".
struct InitConfig {
    double alpha = 6.0;
    double beta = 1.0;
    double linear_scale = 25.6;      // relative to the 25.6 reference scale
    double sine_weight_scale = kTwoPi;  // radians per unit before 1/sqrt(D)
    std::uint64_t seed = 0;
};

inline constexpr const char* kGammaConventionTag = "shape-rate";

// Draw scheme, in stream order per Gabor layer: gamma_x, gamma_y (skipped
// when isotropic or 1-D), mu_x, mu_y, sine weights, sine phases; then each
// hidden affine map, then the output map.
//   gamma ~ Gamma(alpha/l, beta)
//   mu ~ U(-1, 1)
//   sine_w ~ U(-1, 1) * sine_weight_scale / sqrt(D)
//   sine_b ~ U(-pi, pi)
//   hidden W row i ~ U(-1, 1) * sqrt(mean_gamma_i / N_hid) * linear_scale/25.6
//     (mean_gamma from the Gabor layer the row feeds into)
//   output W ~ U(-1, 1) * sqrt(1 / N_hid) * linear_scale/25.6
//   affine biases ~ U(-2 pi, 2 pi)
inline MagnetParams init_magnet(std::size_t layers, std::size_t n_hidden, std::size_t n_in,
                                std::size_t n_out, std::size_t dims, const InitConfig& cfg,
                                RngStream& rng, bool isotropic = false) {
    require(layers >= 1 && n_hidden >= 1 && n_in >= 1 && n_out >= 1,
            "init_magnet: counts must be >= 1");
    require(dims == 1 || dims == 2, "init_magnet: dims must be 1 or 2");
    require(cfg.alpha > 0.0 && cfg.beta > 0.0, "init_magnet: Gamma parameters must be positive");
    require(cfg.linear_scale > 0.0 && cfg.sine_weight_scale > 0.0,
            "init_magnet: scales must be positive");
    MagnetParams p;
    p.dims = dims;
    p.n_hidden = n_hidden;
    p.n_in = n_in;
    p.n_out = n_out;
    const double sw = cfg.sine_weight_scale / std::sqrt(static_cast<double>(dims));
    std::vector<Tensor> mean_gamma(layers);
    for (std::size_t l = 1; l <= layers; ++l) {
        GaborLayerParams g;
        g.isotropic = isotropic;
        const double shape = cfg.alpha / static_cast<double>(l);
        Tensor gx = sample_gamma(rng, shape, cfg.beta, n_hidden);
        g.gamma_x_raw = GaborLayerParams::raw_from(gx);
        Tensor gbar = gx;
        if (dims == 2 && !isotropic) {
            Tensor gy = sample_gamma(rng, shape, cfg.beta, n_hidden);
            g.gamma_y_raw = GaborLayerParams::raw_from(gy);
            for (std::size_t i = 0; i < n_hidden; ++i) gbar[i] = 0.5 * (gx[i] + gy[i]);
        }
        mean_gamma[l - 1] = gbar;
        g.mu_x = sample_uniform(rng, -1.0, 1.0, n_hidden);
        if (dims == 2) g.mu_y = sample_uniform(rng, -1.0, 1.0, n_hidden);
        Tensor w = sample_uniform(rng, -sw, sw, n_hidden * dims);
        g.sine_w = w.reshaped({n_hidden, dims});
        g.sine_b = sample_uniform(rng, -kPi, kPi, n_hidden);
        p.gabor.push_back(std::move(g));
    }
    const double lin_factor = cfg.linear_scale / 25.6;
    for (std::size_t l = 1; l < layers; ++l) {
        Tensor w({n_hidden, n_hidden});
        const Tensor& gbar = mean_gamma[l];  // modulates the layer the rows feed into
        for (std::size_t i = 0; i < n_hidden; ++i) {
            const double s =
                std::sqrt(gbar[i] / static_cast<double>(n_hidden)) * lin_factor;
            for (std::size_t j = 0; j < n_hidden; ++j) w[i * n_hidden + j] = rng.uniform(-s, s);
        }
        p.lin_w.push_back(std::move(w));
        p.lin_b.push_back(sample_uniform(rng, -kTwoPi, kTwoPi, n_hidden));
    }
    const std::size_t n = n_out * n_in;
    const double so = std::sqrt(1.0 / static_cast<double>(n_hidden)) * lin_factor;
    p.out_w = sample_uniform(rng, -so, so, n * n_hidden).reshaped({n, n_hidden});
    p.out_b = sample_uniform(rng, -kTwoPi, kTwoPi, n);
    return p;
}

inline MagnetParams init_mgn(std::size_t layers, std::size_t n_hidden, std::size_t n_in,
                             std::size_t n_out, std::size_t dims, const InitConfig& cfg,
                             RngStream& rng) {
    return init_magnet(layers, n_hidden, n_in, n_out, dims, cfg, rng, /*isotropic=*/true);
}

inline std::size_t magnet_param_count(const MagnetParams& p) {
    std::size_t n = 0;
    const_cast<MagnetParams&>(p).for_each_param(
        [&](const std::string&, Tensor& t) { n += t.size(); });
    return n;
}

// Standard SIREN initialization: first layer U(-1/D, 1/D), hidden layers
// U(-sqrt(6/fan_in)/omega0, ...), biases U(-1/sqrt(fan_in), ...).
inline SirenParams init_siren(std::size_t sine_layers, std::size_t hidden, std::size_t n_in,
                              std::size_t n_out, std::size_t dims, double omega0,
                              RngStream& rng) {
    require(sine_layers >= 1 && hidden >= 1, "init_siren: counts must be >= 1");
    require(omega0 > 0.0, "init_siren: omega0 must be positive");
    SirenParams p;
    p.dims = dims;
    p.hidden = hidden;
    p.n_in = n_in;
    p.n_out = n_out;
    p.omega0 = omega0;
    for (std::size_t l = 0; l < sine_layers; ++l) {
        const std::size_t fan_in = l == 0 ? dims : hidden;
        const double bound = l == 0 ? 1.0 / static_cast<double>(fan_in)
                                    : std::sqrt(6.0 / static_cast<double>(fan_in)) / omega0;
        p.w.push_back(sample_uniform(rng, -bound, bound, hidden * fan_in)
                          .reshaped({hidden, fan_in}));
        const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
        p.b.push_back(sample_uniform(rng, -bb, bb, hidden));
    }
    const std::size_t n = n_out * n_in;
    const double bound = std::sqrt(6.0 / static_cast<double>(hidden)) / omega0;
    p.out_w = sample_uniform(rng, -bound, bound, n * hidden).reshaped({n, hidden});
    p.out_b = Tensor({n});
    return p;
}

// Hidden width for a SIREN whose parameter count is closest to (but at least
// matching from below) the given budget, used for fair fitting comparisons.
inline std::size_t siren_width_for_budget(std::size_t sine_layers, std::size_t n,
                                          std::size_t dims, std::size_t budget) {
    std::size_t best = 1;
    for (std::size_t h = 1; h < 4096; ++h) {
        std::size_t count = h * dims + h;                              // first layer
        count += (sine_layers - 1) * (h * h + h);                      // hidden layers
        count += n * h + n;                                            // output
        if (count > budget) break;
        best = h;
    }
    return best;
}

}  // namespace flexkernel
