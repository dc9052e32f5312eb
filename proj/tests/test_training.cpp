#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexkernel/fft.hpp"
#include "flexkernel/training.hpp"

using namespace flexkernel;

TEST_CASE("gabor target hits its closed-form values") {
    // freq 0, tiny gamma, phase pi/2: constant 1; phase 0: zero image
    Tensor flat = make_gabor_target(9, 0.0, 0.0, 1e-9, kPi / 2.0);
    Tensor zero = make_gabor_target(9, 0.0, 0.0, 1e-9, 0.0);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        REQUIRE(flat[i] == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(zero[i] == Catch::Approx(0.0).margin(1e-12));
    }
    REQUIRE(make_gabor_target(33, 2.0, 0.0, 1.0).at({16, 16}) == Catch::Approx(1.0));
}

TEST_CASE("gabor target at 4 Hz along x peaks at the 4 Hz bin") {
    const std::size_t k = 33;
    Tensor target = make_gabor_target(k, 4.0, 0.0, 1e-9, 0.0);
    // drop the duplicated endpoint and transform rows
    Tensor row({k - 1});
    for (std::size_t x = 0; x < k - 1; ++x) row[x] = target.at({0, x});
    CTensor spec = fft_nd(row, {0});
    std::size_t best = 0;
    for (std::size_t b = 1; b < (k - 1) / 2; ++b)
        if (std::abs(spec.values[b]) > std::abs(spec.values[best])) best = b;
    REQUIRE(best == 8);  // bin 8 of a 32-point period-2 window = 4 Hz
}

TEST_CASE("gabor target equals the gabor layer code path") {
    const std::size_t k = 17;
    const double freq = 2.0, theta = 0.6, gamma = 1.3, phase = 0.9;
    Tensor target = make_gabor_target(k, freq, theta, gamma, phase);
    GaborLayerParams g;
    g.set_gamma_x(Tensor::scalar(gamma));
    g.set_gamma_y(Tensor::scalar(gamma));
    g.mu_x = Tensor::scalar(0.0);
    g.mu_y = Tensor::scalar(0.0);
    g.sine_w = Tensor({1, 2}, {kTwoPi * freq * std::cos(theta), kTwoPi * freq * std::sin(theta)});
    g.sine_b = Tensor::scalar(phase);
    Tensor direct = gabor_layer_forward(make_grid(2, k), g);
    for (std::size_t i = 0; i < target.size(); ++i) REQUIRE(target[i] == direct[i]);
}

TEST_CASE("noise targets are seeded and in range") {
    Tensor a = make_noise_target(9, 5), b = make_noise_target(9, 5), c = make_noise_target(9, 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i] == b[i]);
        REQUIRE(a[i] >= -1.0);
        REQUIRE(a[i] < 1.0);
        differs = differs || a[i] != c[i];
    }
    REQUIRE(differs);
}

TEST_CASE("loss breakdown composes task and aliasing terms") {
    Tape tape;
    Var task = tape.constant(Tensor::scalar(0.7));
    // below Nyquist: total equals the task loss
    Var f_low = tape.constant(Tensor::scalar(3.0));
    LossBreakdown low;
    Var t_low = total_loss_t(tape, task, {f_low}, 8.0, 0.1, &low);
    REQUIRE(t_low.value().item() == 0.7);
    REQUIRE(low.aliasing_loss_total == 0.0);

    // one layer two Hz over: total = task + 0.1 * 4
    Var f_hi = tape.constant(Tensor::scalar(10.0));
    LossBreakdown hi;
    Var t_hi = total_loss_t(tape, task, {f_hi}, 8.0, 0.1, &hi);
    REQUIRE(t_hi.value().item() == Catch::Approx(0.7 + 0.4));
    REQUIRE(hi.total == Catch::Approx(hi.task_loss + hi.lambda * hi.aliasing_loss_total));

    // random values keep the invariant
    RngStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Var f1 = tape.constant(Tensor::scalar(rng.uniform(0.0, 16.0)));
        Var f2 = tape.constant(Tensor::scalar(rng.uniform(0.0, 16.0)));
        LossBreakdown bd;
        total_loss_t(tape, task, {f1, f2}, 8.0, 0.1, &bd);
        REQUIRE(bd.total == Catch::Approx(bd.task_loss + bd.lambda * bd.aliasing_loss_total));
    }
}

TEST_CASE("mask initialization priors per task kind") {
    GaussianMaskParams img = init_mask_for_task(TaskKind::image);
    REQUIRE(img.dims == 2);
    REQUIRE(img.mu_x.item() == 0.0);
    REQUIRE(img.mu_y.item() == 0.0);
    REQUIRE(img.sigma_x() * img.sigma_x() == Catch::Approx(0.125));
    REQUIRE(img.sigma_y() * img.sigma_y() == Catch::Approx(0.125));

    GaussianMaskParams seq = init_mask_for_task(TaskKind::sequence);
    REQUIRE(seq.dims == 1);
    REQUIRE(seq.mu_x.item() == 1.0);
    REQUIRE(seq.sigma_x() * seq.sigma_x() == Catch::Approx(0.125));

    // the sequence prior peaks at the final kernel position
    Tensor mask = gaussian_mask(make_grid(1, 9), seq);
    REQUIRE(mask[8] == 1.0);
    for (std::size_t i = 0; i < 8; ++i) REQUIRE(mask[i] < 1.0);
}

TEST_CASE("self-fit starts at zero loss") {
    // target generated by the identically-initialized generator
    FitOptions opt;
    opt.layers = 2;
    opt.n_hidden = 4;
    opt.steps = 1;
    opt.seed = 9;
    RngStream rng(opt.seed);
    MagnetParams p = init_magnet(2, 4, 1, 1, 2, opt.init, rng);
    Kernel k = magnet_forward(make_grid(2, 9), p);
    FitResult r = fit_kernel(k.values.reshaped({9, 9}), opt);
    REQUIRE(r.mse[0] == 0.0);
}

TEST_CASE("a short magnet fit makes clear progress on an easy target") {
    Tensor target = make_gabor_target(17, 1.0, 0.0, 2.0);
    FitOptions opt;
    opt.layers = 2;
    opt.n_hidden = 8;
    opt.steps = 300;
    opt.lr = 0.02;
    opt.seed = 3;
    FitResult r = fit_kernel(target, opt);
    REQUIRE_FALSE(r.diverged);
    REQUIRE(r.mse.size() == 301);
    REQUIRE(r.mse.back() < r.mse.front() * 0.05);
    REQUIRE(r.final_kernel.shape() == std::vector<std::size_t>{17, 17});
}

TEST_CASE("fit trajectories are deterministic under the seed") {
    Tensor target = make_gabor_target(9, 1.0, 0.3, 1.5);
    FitOptions opt;
    opt.layers = 2;
    opt.n_hidden = 4;
    opt.steps = 50;
    opt.seed = 1;
    FitResult a = fit_kernel(target, opt);
    FitResult b = fit_kernel(target, opt);
    REQUIRE(a.mse.size() == b.mse.size());
    for (std::size_t i = 0; i < a.mse.size(); ++i) REQUIRE(a.mse[i] == b.mse[i]);
}

TEST_CASE("regularized fits drive the frequency bound under Nyquist") {
    // super-Nyquist initialization on a 17-grid (Nyquist 4 Hz). The target is
    // smooth, so the data term does not fight the hinge.
    Tensor target = make_gabor_target(17, 1.0, 0.0, 1.0);
    FitOptions opt;
    opt.layers = 2;
    opt.n_hidden = 8;
    opt.steps = 2000;
    opt.lr = 0.05;
    opt.seed = 2;
    opt.init.sine_weight_scale = 4.0 * kTwoPi;  // well above the 4 Hz budget
    opt.lambda = 0.1;
    FitResult reg = fit_kernel(target, opt);
    REQUIRE_FALSE(reg.diverged);
    REQUIRE(reg.reg.front() > 0.0);
    REQUIRE(reg.reg.back() < 1e-6);

    FitOptions control = opt;
    control.lambda = 0.0;
    FitResult free = fit_kernel(target, control);
    REQUIRE(aliasing_loss(max_freq_magnet(free.magnet, opt.spectrum), nyquist(17)) > 0.0);
}

TEST_CASE("mask widths shrink toward a small centered target") {
    // target: a tight centered bump on a 17-grid; the mask starts wider than
    // the bump, so gradients should flow into sigma and pull it inward
    const std::size_t k = 17;
    Tensor target = make_gabor_target(k, 0.0, 0.0, 6.0);  // narrow envelope, constant phase
    CoordinateGrid grid = make_grid(2, k);
    std::vector<std::size_t> kshape{1, 1, k, k};
    Tensor target_k = target.reshaped(kshape);

    RngStream rng(7);
    MagnetParams magnet = init_magnet(2, 8, 1, 1, 2, InitConfig{}, rng);
    GaussianMaskParams mask;
    mask.dims = 2;
    mask.mu_y = Tensor::scalar(0.0);
    mask.set_sigma(0.8, 0.8);  // much wider than the 1/6-width target bump
    const double sigma0 = mask.sigma_x();

    AdamOptimizer adam;
    double first_sigma_grad = 0.0;
    for (std::size_t step = 0; step < 400; ++step) {
        Tape tape;
        std::vector<BoundParam> params;
        MagnetVars mv = bind_magnet(tape, magnet, &params);
        MaskVars kv = bind_mask(tape, mask, &params);
        Var kernel = magnet_forward_t(tape, grid, mv);
        Var masked = kernel * gaussian_mask_t(tape, grid, kv);
        Var loss = mse_loss(masked, tape.constant(target_k));
        tape.backward(loss);
        if (step == 0) {
            for (const auto& bp : params)
                if (bp.name == "mask.raw_sigma_x") first_sigma_grad = tape.grad(bp.var).item();
        }
        adam.step(params, tape, 0.02, 0.02);
    }
    REQUIRE(first_sigma_grad != 0.0);      // gradient reaches the mask width
    REQUIRE(mask.sigma_x() < sigma0);      // and the learned support contracts
    REQUIRE(mask.sigma_y() < sigma0);
}

TEST_CASE("generator kinds parse from strings") {
    REQUIRE(generator_from_string("magnet") == GeneratorKind::magnet);
    REQUIRE(generator_from_string("mgn") == GeneratorKind::mgn);
    REQUIRE(generator_from_string("siren") == GeneratorKind::siren);
    REQUIRE_THROWS_AS(generator_from_string("mlp"), ContractViolation);
}
