#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flexkernel/flexconv.hpp"
#include "flexkernel/kernelgen.hpp"
#include "flexkernel/optim.hpp"
#include "flexkernel/spectral.hpp"

namespace flexkernel {

enum class GeneratorKind { magnet, mgn, siren };

inline GeneratorKind generator_from_string(const std::string& s) {
    if (s == "magnet") return GeneratorKind::magnet;
    if (s == "mgn") return GeneratorKind::mgn;
    if (s == "siren") return GeneratorKind::siren;
    throw ContractViolation("unknown generator kind '" + s + "'");
}

// Unit-peak Gabor image over [-1,1]^2: a Gaussian envelope around the origin
// times a plane wave of the given frequency and orientation. Built on the
// same code path as the network's own Gabor layers. phase = pi/2 puts the
// sinusoid's crest at the center.
inline Tensor make_gabor_target(std::size_t k, double freq_hz, double orientation_rad,
                                double envelope_gamma, double phase = kPi / 2.0) {
    require(freq_hz >= 0.0, "make_gabor_target: frequency must be non-negative");
    require(envelope_gamma > 0.0, "make_gabor_target: envelope gamma must be positive");
    CoordinateGrid grid = make_grid(2, k);
    GaborLayerParams g;
    g.set_gamma_x(Tensor::scalar(envelope_gamma));
    g.set_gamma_y(Tensor::scalar(envelope_gamma));
    g.mu_x = Tensor::scalar(0.0);
    g.mu_y = Tensor::scalar(0.0);
    g.sine_w = Tensor({1, 2}, {kTwoPi * freq_hz * std::cos(orientation_rad),
                               kTwoPi * freq_hz * std::sin(orientation_rad)});
    g.sine_b = Tensor::scalar(phase);
    return gabor_layer_forward(grid, g).reshaped({k, k});
}

// Seeded uniform noise target in [-1, 1].
inline Tensor make_noise_target(std::size_t k, std::uint64_t seed) {
    RngStream rng(seed);
    return sample_uniform(rng, -1.0, 1.0, k * k).reshaped({k, k});
}

// ---------------------------------------------------------------------------
// Loss composition.
// ---------------------------------------------------------------------------

struct LossBreakdown {
    double task_loss = 0.0;
    double aliasing_loss_total = 0.0;
    double lambda = 0.1;
    double total = 0.0;
};

// total = task + lambda * sum of per-layer aliasing penalties. The f_plus
// inputs are whichever bound the caller regularizes (the MAGNet term by
// default, the full FlexConv term when selected).
inline Var total_loss_t(Tape& tape, Var task, const std::vector<Var>& f_plus_layers,
                        double f_nyq, double lambda, LossBreakdown* breakdown = nullptr) {
    Var total = task;
    double reg_value = 0.0;
    if (lambda != 0.0 && !f_plus_layers.empty()) {
        Var reg;
        for (std::size_t i = 0; i < f_plus_layers.size(); ++i) {
            Var h = aliasing_loss_t(f_plus_layers[i], f_nyq);
            reg = i == 0 ? h : reg + h;
        }
        reg_value = reg.value().item();
        total = task + scale(reg, lambda);
    }
    if (breakdown) {
        breakdown->task_loss = task.value().item();
        breakdown->aliasing_loss_total = reg_value;
        breakdown->lambda = lambda;
        breakdown->total = total.value().item();
    }
    return total;
}

// ---------------------------------------------------------------------------
// Mask initialization priors.
// ---------------------------------------------------------------------------

enum class TaskKind { image, sequence };

// Images start with a small centered mask (variance 0.125 per axis);
// sequences center the mask on the final kernel position so the most recent
// inputs dominate at initialization.
inline GaussianMaskParams init_mask_for_task(TaskKind task) {
    const double sigma = std::sqrt(0.125);
    GaussianMaskParams m;
    if (task == TaskKind::image) {
        m.dims = 2;
        m.mu_x = Tensor::scalar(0.0);
        m.mu_y = Tensor::scalar(0.0);
        m.set_sigma(sigma, sigma);
    } else {
        m.dims = 1;
        m.mu_x = Tensor::scalar(1.0);
        m.set_sigma(sigma);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Kernel fitting.
// ---------------------------------------------------------------------------

struct FitOptions {
    GeneratorKind generator = GeneratorKind::magnet;
    std::size_t layers = 3;      // Gabor layers (MAGNet/MGN) or sine layers (SIREN)
    std::size_t n_hidden = 32;   // SIREN width of 0 means "match MAGNet budget"
    double omega0 = 30.0;
    InitConfig init;
    std::size_t steps = 5000;
    double lr = 0.01;
    double lambda = 0.0;         // aliasing regularization weight
    bool regularize_flexconv = false;  // include the mask term in the penalty
    SpectrumConfig spectrum;
    std::uint64_t seed = 1;
    std::vector<std::size_t> snapshot_steps;  // kernels to capture mid-run
    // Early stop: end once the task loss falls to stop_mse (0 disables) and,
    // when stop_reg >= 0, the aliasing penalty is simultaneously at or below it.
    double stop_mse = 0.0;
    double stop_reg = -1.0;
};

struct FitResult {
    std::vector<double> mse;        // task loss per step, before that step's update
    std::vector<double> reg;        // aliasing penalty per step
    Tensor final_kernel;            // [k, k] or [k]
    std::vector<std::pair<std::size_t, Tensor>> snapshots;
    bool diverged = false;
    MagnetParams magnet;            // populated for magnet/mgn
    SirenParams siren;              // populated for siren
    GeneratorKind generator = GeneratorKind::magnet;
};

// Fits a generator to a target image by MSE descent, optionally with the
// aliasing penalty on the generator's frequency bound. Deterministic under
// the seed; a non-finite loss stops the run and is reported, not thrown.
inline FitResult fit_kernel(const Tensor& target, const FitOptions& opt) {
    require(target.rank() == 2 || target.rank() == 1, "fit_kernel: target must be 1-D or 2-D");
    const std::size_t dims = target.rank();
    const std::size_t k = target.extent(0);
    require(k >= 5, "fit_kernel: target resolution must be at least 5");
    if (dims == 2)
        require(target.extent(1) == k, "fit_kernel: target must be square");

    CoordinateGrid grid = make_grid(dims, k);
    std::vector<std::size_t> kernel_shape{1, 1};
    for (std::size_t e : grid.spatial_shape()) kernel_shape.push_back(e);
    const Tensor target_k = target.reshaped(kernel_shape);

    FitResult result;
    result.generator = opt.generator;
    RngStream rng(opt.seed);
    if (opt.generator == GeneratorKind::siren) {
        std::size_t width = opt.n_hidden;
        if (width == 0) {
            RngStream probe(opt.seed);
            MagnetParams ref = init_magnet(opt.layers, 32, 1, 1, dims, opt.init, probe);
            width = siren_width_for_budget(opt.layers, 1, dims, magnet_param_count(ref));
        }
        result.siren = init_siren(opt.layers, width, 1, 1, dims, opt.omega0, rng);
    } else {
        result.magnet = init_magnet(opt.layers, opt.n_hidden, 1, 1, dims, opt.init, rng,
                                    opt.generator == GeneratorKind::mgn);
    }

    AdamOptimizer adam;
    const double f_nyq = k >= 2 ? nyquist(k) : 0.0;
    result.mse.reserve(opt.steps);
    for (std::size_t step = 0; step < opt.steps; ++step) {
        Tape tape;
        std::vector<BoundParam> params;
        Var kernel;
        std::vector<Var> f_plus;
        if (opt.generator == GeneratorKind::siren) {
            SirenVars sv = bind_siren(tape, result.siren, &params);
            kernel = siren_forward_t(tape, grid, sv);
        } else {
            MagnetVars mv = bind_magnet(tape, result.magnet, &params);
            kernel = magnet_forward_t(tape, grid, mv);
            if (opt.lambda != 0.0)
                f_plus.push_back(max_freq_magnet_t(tape, mv, opt.spectrum));
        }
        Var task = mse_loss(kernel, tape.constant(target_k));
        LossBreakdown breakdown;
        Var total = total_loss_t(tape, task, f_plus, f_nyq, opt.lambda, &breakdown);
        result.mse.push_back(breakdown.task_loss);
        result.reg.push_back(breakdown.aliasing_loss_total);
        for (std::size_t snap : opt.snapshot_steps)
            if (snap == step)
                result.snapshots.emplace_back(
                    step, kernel.value().reshaped(dims == 2 ? std::vector<std::size_t>{k, k}
                                                            : std::vector<std::size_t>{k}));
        if (!std::isfinite(breakdown.total)) {
            result.diverged = true;
            break;
        }
        if (opt.stop_mse > 0.0 && breakdown.task_loss <= opt.stop_mse &&
            (opt.stop_reg < 0.0 || breakdown.aliasing_loss_total <= opt.stop_reg))
            break;
        try {
            tape.backward(total);
            adam.step(params, tape, opt.lr, opt.lr);
        } catch (const NumericError&) {
            result.diverged = true;
            break;
        }
    }
    // final state: kernel and closing MSE entry for the trained parameters
    Kernel final_kernel = opt.generator == GeneratorKind::siren
                              ? siren_forward(grid, result.siren)
                              : magnet_forward(grid, result.magnet);
    result.final_kernel = final_kernel.values.reshaped(
        dims == 2 ? std::vector<std::size_t>{k, k} : std::vector<std::size_t>{k});
    if (!result.diverged) {
        double s = 0.0;
        for (std::size_t i = 0; i < target_k.size(); ++i) {
            const double d = final_kernel.values[i] - target_k[i];
            s += d * d;
        }
        result.mse.push_back(s / static_cast<double>(target_k.size()));
        if (opt.generator != GeneratorKind::siren && opt.lambda != 0.0) {
            result.reg.push_back(
                aliasing_loss(max_freq_magnet(result.magnet, opt.spectrum), f_nyq));
        } else {
            result.reg.push_back(0.0);
        }
    }
    return result;
}

}  // namespace flexkernel
