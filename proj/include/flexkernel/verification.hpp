#pragma once

#include <string>
#include <vector>

#include "flexkernel/flexconv.hpp"
#include "flexkernel/gradcheck.hpp"
#include "flexkernel/spectral.hpp"
#include "flexkernel/training.hpp"

namespace flexkernel {

// Seeded random FlexConv configuration for gradient verification: a small
// MAGNet with mask whose loss is MSE against a random target plus the
// aliasing penalty on the combined bound. Shared between the command-line
// gradcheck and the acceptance run so both verify the same thing.
struct FlexConvGradCheck {
    GradCheckReport report;
    std::size_t dims = 0;
    std::size_t layers = 0;
    std::size_t n_hidden = 0;
    std::size_t param_count = 0;
};

inline FlexConvGradCheck run_flexconv_gradcheck(std::uint64_t seed, double step = 1e-4,
                                                double tolerance = 1e-4) {
    RngStream rng(seed);
    const std::size_t dims = 1 + rng.next_u64() % 2;
    const std::size_t layers = 1 + rng.next_u64() % 3;
    const std::size_t n_hidden = 1 + rng.next_u64() % 4;
    const std::size_t k = 7;
    InitConfig init;
    MagnetParams magnet = init_magnet(layers, n_hidden, 1, 1, dims, init, rng);
    // mask with distinct per-axis widths: equal sigmas would park the
    // max(sigma_x, sigma_y) term of the frequency bound on a subgradient tie,
    // where central differences are not meaningful
    GaussianMaskParams mask;
    mask.dims = dims;
    mask.mu_x = Tensor::scalar(rng.uniform(-0.3, 0.3));
    if (dims == 2) {
        mask.mu_y = Tensor::scalar(rng.uniform(-0.3, 0.3));
        mask.set_sigma(rng.uniform(0.3, 0.45), rng.uniform(0.5, 0.7));
    } else {
        mask.set_sigma(rng.uniform(0.3, 0.45));
    }
    CoordinateGrid grid = make_grid(dims, k);
    const std::size_t spatial = dims == 2 ? k * k : k;
    Tensor target = sample_uniform(rng, -1.0, 1.0, spatial);
    std::vector<std::size_t> kshape{1, 1};
    for (std::size_t e : grid.spatial_shape()) kshape.push_back(e);
    target = target.reshaped(kshape);
    SpectrumConfig spectrum;
    const double f_nyq = nyquist(k);

    std::vector<std::string> names;
    std::vector<Tensor> values;
    magnet.for_each_param([&](const std::string& n, Tensor& t) {
        names.push_back(n);
        values.push_back(t);
    });
    mask.for_each_param([&](const std::string& n, Tensor& t) {
        names.push_back(n);
        values.push_back(t);
    });

    auto build = [&](Tape& tape, const std::vector<Var>& vs) {
        MagnetVars mv;
        mv.dims = dims;
        mv.n_hidden = n_hidden;
        mv.n_in = 1;
        mv.n_out = 1;
        std::size_t i = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            GaborLayerVars gv;
            gv.gamma_x_raw = vs[i++];
            if (dims == 2) gv.gamma_y_raw = vs[i++];
            gv.mu_x = vs[i++];
            if (dims == 2) gv.mu_y = vs[i++];
            gv.sine_w = vs[i++];
            gv.sine_b = vs[i++];
            mv.gabor.push_back(gv);
        }
        for (std::size_t l = 1; l < layers; ++l) {
            mv.lin_w.push_back(vs[i++]);
            mv.lin_b.push_back(vs[i++]);
        }
        mv.out_w = vs[i++];
        mv.out_b = vs[i++];
        MaskVars kv;
        kv.dims = dims;
        kv.mu_x = vs[i++];
        kv.raw_sigma_x = vs[i++];
        if (dims == 2) {
            kv.mu_y = vs[i++];
            kv.raw_sigma_y = vs[i++];
        }
        Var kernel = magnet_forward_t(tape, grid, mv);
        Var m = gaussian_mask_t(tape, grid, kv);
        Var masked = kernel * m;
        Var task = mse_loss(masked, tape.constant(target));
        Var f_plus = max_freq_flexconv_t(tape, mv, kv, spectrum);
        return task + scale(aliasing_loss_t(f_plus, f_nyq), 0.1);
    };

    FlexConvGradCheck out;
    out.dims = dims;
    out.layers = layers;
    out.n_hidden = n_hidden;
    for (const Tensor& t : values) out.param_count += t.size();
    out.report = check_gradients(build, names, values, step, tolerance);
    return out;
}

// Single-layer Gabor kernel for cross-resolution experiments: atoms with
// moderate envelopes whose actual content tracks their sine frequencies. The
// band-limited variant keeps every atom under f_band; the deliberately
// aliasing variant additionally plants one strong atom at f_high.
inline MagnetParams make_crossres_magnet(std::uint64_t seed, double f_band, double f_high) {
    RngStream rng(seed);
    const std::size_t n_hidden = 4;
    MagnetParams p;
    p.dims = 2;
    p.n_hidden = n_hidden;
    GaborLayerParams g;
    g.set_gamma_x(Tensor::full({n_hidden}, 1.0));
    g.set_gamma_y(Tensor::full({n_hidden}, 1.0));
    g.mu_x = sample_uniform(rng, -0.3, 0.3, n_hidden);
    g.mu_y = sample_uniform(rng, -0.3, 0.3, n_hidden);
    g.sine_w = Tensor({n_hidden, 2});
    for (std::size_t i = 0; i < n_hidden; ++i) {
        const double f = rng.uniform(0.3 * f_band, f_band);
        const double theta = rng.uniform(0.0, kTwoPi);
        g.sine_w[i * 2 + 0] = kTwoPi * f * std::cos(theta);
        g.sine_w[i * 2 + 1] = kTwoPi * f * std::sin(theta);
    }
    if (f_high > 0.0) {
        g.sine_w[0] = kTwoPi * f_high;  // strong atom along x above the source Nyquist
        g.sine_w[1] = 0.0;
    }
    g.sine_b = sample_uniform(rng, -kPi, kPi, n_hidden);
    p.gabor.push_back(std::move(g));
    p.out_w = sample_uniform(rng, 0.5, 1.0, n_hidden).reshaped({1, n_hidden});
    p.out_b = Tensor({1});
    return p;
}

}  // namespace flexkernel
