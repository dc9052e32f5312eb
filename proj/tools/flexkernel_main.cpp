// Command-line harness for the FlexConv kernel library.
//
//   flexkernel fit <config>        fit a kernel generator to a target image
//   flexkernel train <config>      train a FlexNet classifier
//   flexkernel spectrum <config>   frequency report for a saved checkpoint
//   flexkernel crossres <config>   cross-resolution convolution comparison
//   flexkernel gradcheck <config>  analytic-vs-numeric gradient verification
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 4 gradient-check assertion failure. FLEXKERNEL_SEED overrides the seed.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexkernel/flexkernel.hpp"

namespace fs = std::filesystem;
using namespace flexkernel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradCheck = 4;

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

struct RunContext {
    std::string command;
    std::string outdir;
    RunManifest manifest;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void add_file(const std::string& name) { manifest.files.push_back(name); }

    void finish(const std::string& status) {
        manifest.status = status;
        manifest.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest.write(outdir);
    }
};

RunContext make_context(const std::string& command, const ConfigSection& cfg,
                        std::uint64_t seed) {
    RunContext ctx;
    ctx.command = command;
    ctx.outdir = cfg.get_string("outdir");
    fs::create_directories(ctx.outdir);
    ctx.manifest.command = command;
    ctx.manifest.seed = seed;
    ctx.manifest.started_at = timestamp_utc();
    for (const auto& [k, v] : cfg.values()) ctx.manifest.config.emplace_back(k, v);
    if (seed != cfg.get_u64("seed", seed))
        ctx.manifest.config.emplace_back("seed(effective)", std::to_string(seed));
    return ctx;
}

std::uint64_t effective_seed(const ConfigSection& cfg) {
    if (const char* env = std::getenv("FLEXKERNEL_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw ContractViolation("FLEXKERNEL_SEED is not an unsigned integer");
        }
    }
    return cfg.get_u64("seed", 1);
}

InitConfig init_from_config(const ConfigSection& cfg) {
    InitConfig init;
    init.alpha = cfg.get_double("alpha", init.alpha);
    init.beta = cfg.get_double("beta", init.beta);
    init.linear_scale = cfg.get_double("linear_scale", init.linear_scale);
    init.sine_weight_scale = cfg.get_double("sine_weight_scale", init.sine_weight_scale);
    return init;
}

void add_checkpoint_files(RunContext& ctx, const std::string& subdir) {
    for (const auto& entry : fs::directory_iterator(ctx.outdir + "/" + subdir))
        ctx.add_file(subdir + "/" + entry.path().filename().string());
}

void dump_kernel_image(const Tensor& kernel, const std::string& outdir,
                       const std::string& stem, RunContext& ctx) {
    if (kernel.rank() == 2) {
        dump_image(kernel, outdir + "/" + stem);
        ctx.add_file(stem + ".pgm");
        ctx.add_file(stem + ".csv");
    } else {
        save_csv_matrix(kernel, outdir + "/" + stem + ".csv");
        ctx.add_file(stem + ".csv");
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int run_fit(const ConfigFile& file) {
    ConfigSection cfg(file, "fit");
    cfg.restrict_keys({"seed", "outdir", "generator", "target", "freq", "orientation",
                       "envelope_gamma", "phase", "target_csv", "k", "layers", "n_hidden",
                       "steps", "lr", "lambda", "sigma_cut", "alpha", "beta", "linear_scale",
                       "sine_weight_scale", "omega0", "dump_kernels"});
    const std::uint64_t seed = effective_seed(cfg);
    RunContext ctx = make_context("fit", cfg, seed);
    try {
        const std::size_t k = static_cast<std::size_t>(cfg.get_int("k", 33));
        const std::string target_kind = cfg.get_string("target", "gabor");
        Tensor target;
        if (target_kind == "gabor") {
            target = make_gabor_target(k, cfg.get_double("freq", 1.0),
                                       cfg.get_double("orientation", 0.0),
                                       cfg.get_double("envelope_gamma", 1.0),
                                       cfg.get_double("phase", kPi / 2.0));
        } else if (target_kind == "noise") {
            target = make_noise_target(k, seed);
        } else if (target_kind == "csv") {
            target = load_csv_matrix(cfg.get_string("target_csv"));
            require(target.extent(0) == target.extent(1) && target.extent(0) == k,
                    "fit: csv target must be k x k");
        } else {
            throw ContractViolation("fit: unknown target kind '" + target_kind + "'");
        }

        FitOptions opt;
        opt.generator = generator_from_string(cfg.get_string("generator", "magnet"));
        opt.layers = static_cast<std::size_t>(cfg.get_int("layers", 3));
        opt.n_hidden = static_cast<std::size_t>(
            cfg.get_int("n_hidden", opt.generator == GeneratorKind::siren ? 0 : 32));
        opt.omega0 = cfg.get_double("omega0", 30.0);
        opt.init = init_from_config(cfg);
        opt.steps = static_cast<std::size_t>(cfg.get_int("steps", 5000));
        opt.lr = cfg.get_double("lr", opt.generator == GeneratorKind::siren ? 3e-4 : 0.01);
        opt.lambda = cfg.get_double("lambda", 0.0);
        opt.spectrum.sigma_cut = cfg.get_double("sigma_cut", 2.0);
        opt.seed = seed;
        opt.snapshot_steps = {0, opt.steps / 2};

        FitResult result = fit_kernel(target, opt);

        CsvWriter traj(ctx.outdir + "/mse_trajectory.csv", {"step", "mse", "aliasing_loss"});
        for (std::size_t s = 0; s < result.mse.size(); ++s)
            traj.row({std::to_string(s), format_double(result.mse[s]),
                      format_double(result.reg[s])});
        ctx.add_file("mse_trajectory.csv");

        if (cfg.get_bool("dump_kernels", true)) {
            dump_kernel_image(target, ctx.outdir, "target", ctx);
            for (const auto& [step, kernel] : result.snapshots) {
                const std::string stem =
                    step == 0 ? "kernel_step_start" : "kernel_step_mid";
                dump_kernel_image(kernel, ctx.outdir, stem, ctx);
            }
            dump_kernel_image(result.final_kernel, ctx.outdir, "kernel_step_final", ctx);
        }

        Checkpoint ckpt;
        if (result.generator == GeneratorKind::siren)
            ckpt = make_siren_checkpoint(result.siren, k, seed);
        else
            ckpt = make_magnet_checkpoint(result.magnet, k, seed);
        save_checkpoint(ctx.outdir + "/checkpoint", ckpt);
        add_checkpoint_files(ctx, "checkpoint");

        if (result.diverged) {
            ctx.finish("diverged");
            std::cerr << "fit: optimization diverged (recorded in trajectory)\n";
            return kExitOk;  // divergence is recorded and reported, not fatal
        }
        ctx.finish("ok");
        std::cout << "fit: final mse " << format_double(result.mse.back()) << "\n";
        return kExitOk;
    } catch (const NumericError& e) {
        ctx.finish(std::string("numeric-error: ") + e.what());
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractViolation& e) {
        ctx.finish(std::string("config-error: ") + e.what());
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        ctx.finish(std::string("io-error: ") + e.what());
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitConfig;
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const ConfigFile& file) {
    ConfigSection cfg(file, "train");
    cfg.restrict_keys({"seed", "outdir", "train_images", "train_labels", "test_images",
                       "test_labels", "downsample", "train_size", "test_size", "blocks",
                       "base_width", "classes", "magnet_layers", "magnet_hidden", "epochs",
                       "batch_size", "lr", "warmup_epochs", "mask_lr_factor", "lambda",
                       "regularize", "dropout", "stop_accuracy", "alpha", "beta",
                       "linear_scale", "sine_weight_scale"});
    const std::uint64_t seed = effective_seed(cfg);
    RunContext ctx = make_context("train", cfg, seed);
    try {
        Dataset train = load_idx_dataset(cfg.get_string("train_images"),
                                         cfg.get_string("train_labels"));
        Dataset test = load_idx_dataset(cfg.get_string("test_images"),
                                        cfg.get_string("test_labels"));
        if (cfg.get_bool("downsample", true)) {
            train = downsample2x(train);
            test = downsample2x(test);
        }
        if (cfg.has("train_size"))
            train = take(train, static_cast<std::size_t>(cfg.get_int("train_size")));
        if (cfg.has("test_size"))
            test = take(test, static_cast<std::size_t>(cfg.get_int("test_size")));

        const std::size_t data_res = train.images.extent(2);
        const std::size_t k = kernel_size_init(data_res);
        const std::size_t magnet_layers =
            static_cast<std::size_t>(cfg.get_int("magnet_layers", 3));
        const std::size_t magnet_hidden =
            static_cast<std::size_t>(cfg.get_int("magnet_hidden", 16));
        RngStream rng(seed);
        FlexNetParams net = make_flexnet(
            static_cast<std::size_t>(cfg.get_int("blocks", 2)),
            static_cast<std::size_t>(cfg.get_int("base_width", 8)),
            static_cast<std::size_t>(cfg.get_int("classes", 10)), train.images.extent(1), k,
            magnet_layers, magnet_hidden, init_from_config(cfg), rng,
            cfg.get_double("dropout", 0.2));

        ClassifierTrainConfig tc;
        tc.epochs = static_cast<std::size_t>(cfg.get_int("epochs", 20));
        tc.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 64));
        tc.base_lr = cfg.get_double("lr", 0.01);
        tc.warmup_epochs = cfg.get_double("warmup_epochs", 5.0);
        tc.mask_lr_factor = cfg.get_double("mask_lr_factor", 0.1);
        tc.lambda = cfg.get_double("lambda", 0.1);
        tc.regularize_flexconv = cfg.get_string("regularize", "magnet") == "flexconv";
        tc.seed = seed;
        tc.stop_accuracy = cfg.get_double("stop_accuracy", 0.0);

        TrainResult result = train_flexnet_classifier(net, train, test, tc);

        CsvWriter metrics(ctx.outdir + "/metrics.csv",
                          {"epoch", "step", "task_loss", "aliasing_loss", "total",
                           "lr_regular", "lr_mask", "accuracy"});
        for (const auto& r : result.records)
            metrics.row({std::to_string(r.epoch), std::to_string(r.step),
                         format_double(r.task_loss), format_double(r.aliasing_loss),
                         format_double(r.total), format_double(r.lr_regular),
                         format_double(r.lr_mask),
                         r.accuracy < 0.0 ? "" : format_double(r.accuracy)});
        ctx.add_file("metrics.csv");

        Checkpoint ckpt = make_flexnet_checkpoint(net, magnet_layers, magnet_hidden, seed);
        save_checkpoint(ctx.outdir + "/checkpoint", ckpt);
        add_checkpoint_files(ctx, "checkpoint");

        // learned mask widths per block, one line each
        CsvWriter sizes(ctx.outdir + "/mask_sizes.csv",
                        {"layer", "sigma_x", "sigma_y", "mu_x", "mu_y"});
        for (std::size_t b = 0; b < net.blocks.size(); ++b) {
            for (const auto& [name, mask] :
                 {std::pair<std::string, GaussianMaskParams*>{"block" + std::to_string(b) +
                                                                  ".conv1",
                                                              &net.blocks[b].mask1},
                  {"block" + std::to_string(b) + ".conv2", &net.blocks[b].mask2}}) {
                sizes.row({name, format_double(mask->sigma_x()),
                           format_double(mask->sigma_y()), format_double(mask->mu_x.item()),
                           format_double(mask->mu_y.item())});
            }
        }
        ctx.add_file("mask_sizes.csv");

        ctx.finish("ok");
        std::cout << "train: best accuracy " << format_double(result.best_accuracy) << " after "
                  << result.epochs_run << " epochs\n";
        return kExitOk;
    } catch (const NumericError& e) {
        ctx.finish(std::string("numeric-error: ") + e.what());
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractViolation& e) {
        ctx.finish(std::string("config-error: ") + e.what());
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        ctx.finish(std::string("io-error: ") + e.what());
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitConfig;
    }
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

int run_spectrum(const ConfigFile& file) {
    ConfigSection cfg(file, "spectrum");
    cfg.restrict_keys({"seed", "outdir", "checkpoint", "sigma_cut", "significance_ratio"});
    const std::uint64_t seed = effective_seed(cfg);
    RunContext ctx = make_context("spectrum", cfg, seed);
    try {
        SpectrumConfig sc;
        sc.sigma_cut = cfg.get_double("sigma_cut", 2.0);
        sc.significance_ratio = cfg.get_double("significance_ratio", 1e-3);
        Checkpoint ckpt = load_checkpoint(cfg.get_string("checkpoint"));
        const std::string arch = ckpt.meta_at("arch");

        CsvWriter csv(ctx.outdir + "/spectrum.csv",
                      {"layer", "f_plus_magnet", "f_plus_mask", "f_plus_flexconv",
                       "f_nyquist", "empirical_max", "aliasing_loss"});
        auto emit = [&](const std::string& layer, const SpectrumReport& r) {
            csv.row({layer, format_double(r.f_plus_magnet), format_double(r.f_plus_mask),
                     format_double(r.f_plus_flexconv), format_double(r.f_nyquist),
                     format_double(r.empirical_max), format_double(r.aliasing_loss)});
        };

        if (arch == "flexconv") {
            FlexConvCheckpoint fc = read_flexconv_checkpoint(ckpt);
            emit("kernel", spectrum_report(fc.magnet, fc.mask, fc.k, sc));
        } else if (arch == "magnet") {
            MagnetParams p = read_magnet_checkpoint(ckpt);
            const std::size_t k = ckpt.meta_count("k");
            // no mask: the mask term is zero and the combined bound is the
            // generator bound
            SpectrumReport r;
            r.f_plus_magnet = max_freq_magnet(p, sc);
            r.f_plus_mask = 0.0;
            r.f_plus_flexconv = r.f_plus_magnet;
            r.f_nyquist = nyquist(k);
            r.empirical_max = empirical_max_frequency(magnet_forward(make_grid(p.dims, k), p), sc);
            r.aliasing_loss = aliasing_loss(r.f_plus_flexconv, r.f_nyquist);
            emit("kernel", r);
        } else if (arch == "flexnet") {
            FlexNetCheckpoint fn = read_flexnet_checkpoint(ckpt);
            for (std::size_t b = 0; b < fn.net.blocks.size(); ++b) {
                const std::string prefix = "block" + std::to_string(b) + ".";
                emit(prefix + "conv1",
                     spectrum_report(fn.net.blocks[b].magnet1, fn.net.blocks[b].mask1,
                                     fn.net.kernel_resolution, sc));
                emit(prefix + "conv2",
                     spectrum_report(fn.net.blocks[b].magnet2, fn.net.blocks[b].mask2,
                                     fn.net.kernel_resolution, sc));
            }
        } else {
            throw ContractViolation("spectrum: no frequency analysis for arch '" + arch + "'");
        }
        ctx.add_file("spectrum.csv");
        ctx.finish("ok");
        return kExitOk;
    } catch (const NumericError& e) {
        ctx.finish(std::string("numeric-error: ") + e.what());
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractViolation& e) {
        ctx.finish(std::string("config-error: ") + e.what());
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        ctx.finish(std::string("io-error: ") + e.what());
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitConfig;
    }
}

// ---------------------------------------------------------------------------
// crossres
// ---------------------------------------------------------------------------

// Synthesized band-limited signal: a seeded sum of plane waves with per-axis
// frequencies at or below f_max, sampled analytically at any resolution.
Tensor bandlimited_signal(std::size_t k, double f_max, std::uint64_t seed) {
    RngStream rng(seed);
    const int terms = 6;
    std::vector<double> fx(terms), fy(terms), amp(terms), phase(terms);
    for (int t = 0; t < terms; ++t) {
        fx[t] = rng.uniform(-f_max, f_max);
        fy[t] = rng.uniform(-f_max, f_max);
        amp[t] = rng.uniform(0.3, 1.0);
        phase[t] = rng.uniform(0.0, kTwoPi);
    }
    CoordinateGrid grid = make_grid(2, k);
    Tensor out({1, k, k});
    for (std::size_t p = 0; p < grid.num_points(); ++p) {
        const double x = grid.positions[p * 2 + 0];
        const double y = grid.positions[p * 2 + 1];
        double v = 0.0;
        for (int t = 0; t < terms; ++t)
            v += amp[t] * std::sin(kTwoPi * (fx[t] * x + fy[t] * y) + phase[t]);
        out[p] = v;
    }
    return out;
}

int run_crossres(const ConfigFile& file) {
    ConfigSection cfg(file, "crossres");
    cfg.restrict_keys({"seed", "outdir", "k_src", "k_dst", "sigma", "signal_freq_max",
                       "super_nyquist", "crop_threshold"});
    const std::uint64_t seed = effective_seed(cfg);
    RunContext ctx = make_context("crossres", cfg, seed);
    try {
        const std::size_t k_src = static_cast<std::size_t>(cfg.get_int("k_src", 17));
        const std::size_t k_dst = static_cast<std::size_t>(cfg.get_int("k_dst", 33));
        const bool super = cfg.get_bool("super_nyquist", false);
        SpectrumConfig sc;
        // band-limited atoms below the source Nyquist; the aliasing variant
        // plants one strong atom between the source and destination limits
        MagnetParams magnet = make_crossres_magnet(
            seed, 0.6 * nyquist(k_src), super ? 0.75 * nyquist(k_dst) : 0.0);
        GaussianMaskParams mask;
        mask.dims = 2;
        mask.mu_y = Tensor::scalar(0.0);
        const double sigma = cfg.get_double("sigma", 0.3);
        mask.set_sigma(sigma, sigma);

        ConvConfig conv;
        conv.crop_threshold = cfg.get_double("crop_threshold", 0.1);
        const double f_sig = cfg.get_double("signal_freq_max", 0.5 * nyquist(k_src));
        Tensor sig_src = bandlimited_signal(k_src, f_sig, seed + 100);
        Tensor sig_dst = bandlimited_signal(k_dst, f_sig, seed + 100);

        CoordinateGrid grid_src = make_grid(2, k_src);
        Kernel kern_src = magnet_forward(grid_src, magnet);
        FlexKernel fk_src = apply_mask_and_crop(kern_src, gaussian_mask(grid_src, mask), conv);
        Tensor out_src = convolve(sig_src, fk_src, conv);

        ResampledKernel res = resample_kernel(magnet, mask, k_src, k_dst, conv);
        Tensor out_dst = convolve(sig_dst, res.kernel, conv);

        // compare at shared interior locations (the destination grid contains
        // the source grid when k_dst = 2 k_src - 1)
        require(k_dst == 2 * k_src - 1, "crossres: expects k_dst = 2 k_src - 1");
        const std::size_t radius = std::max(fk_src.crop_box.hi[0] - fk_src.crop_box.lo[0],
                                            fk_src.crop_box.hi[1] - fk_src.crop_box.lo[1]) /
                                   2;
        CsvWriter csv(ctx.outdir + "/crossres.csv",
                      {"row", "col", "coarse", "scaled_fine", "abs_err"});
        double err2 = 0.0, norm2 = 0.0, worst = 0.0;
        std::size_t count = 0;
        for (std::size_t y = radius; y + radius < k_src; ++y)
            for (std::size_t x = radius; x + radius < k_src; ++x) {
                const double coarse = out_src.at({0, y, x});
                const double fine = res.scale * out_dst.at({0, 2 * y, 2 * x});
                csv.row({std::to_string(y), std::to_string(x), format_double(coarse),
                         format_double(fine), format_double(std::fabs(coarse - fine))});
                err2 += (coarse - fine) * (coarse - fine);
                norm2 += coarse * coarse;
                worst = std::max(worst, std::fabs(coarse - fine));
                ++count;
            }
        ctx.add_file("crossres.csv");
        const double rel = norm2 > 0.0 ? std::sqrt(err2 / norm2) : 0.0;
        CsvWriter summary(ctx.outdir + "/crossres_summary.csv",
                          {"k_src", "k_dst", "scale", "f_plus_magnet", "f_nyq_src",
                           "interior_points", "rel_error", "max_abs_err"});
        summary.row({std::to_string(k_src), std::to_string(k_dst), format_double(res.scale),
                     format_double(max_freq_magnet(magnet, sc)),
                     format_double(nyquist(k_src)), std::to_string(count),
                     format_double(rel), format_double(worst)});
        ctx.add_file("crossres_summary.csv");
        ctx.finish("ok");
        std::cout << "crossres: relative error " << format_double(rel) << "\n";
        return kExitOk;
    } catch (const NumericError& e) {
        ctx.finish(std::string("numeric-error: ") + e.what());
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractViolation& e) {
        ctx.finish(std::string("config-error: ") + e.what());
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        ctx.finish(std::string("io-error: ") + e.what());
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitConfig;
    }
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int run_gradcheck(const ConfigFile& file) {
    ConfigSection cfg(file, "gradcheck");
    cfg.restrict_keys({"seed", "outdir", "count", "tolerance", "step"});
    const std::uint64_t seed = effective_seed(cfg);
    RunContext ctx = make_context("gradcheck", cfg, seed);
    try {
        const std::size_t count = static_cast<std::size_t>(cfg.get_int("count", 100));
        const double tolerance = cfg.get_double("tolerance", 1e-4);
        const double step = cfg.get_double("step", 1e-4);
        CsvWriter csv(ctx.outdir + "/gradcheck.csv",
                      {"config", "seed", "dims", "layers", "n_hidden", "param_count",
                       "max_rel_err", "worst_param", "pass"});
        std::size_t failures = 0;
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint64_t config_seed = seed + i;
            FlexConvGradCheck check = run_flexconv_gradcheck(config_seed, step, tolerance);
            csv.row({std::to_string(i), std::to_string(config_seed),
                     std::to_string(check.dims), std::to_string(check.layers),
                     std::to_string(check.n_hidden), std::to_string(check.param_count),
                     format_double(check.report.max_rel_err), check.report.worst_param,
                     check.report.pass ? "1" : "0"});
            if (!check.report.pass) ++failures;
        }
        ctx.add_file("gradcheck.csv");
        ctx.finish(failures == 0 ? "ok" : "gradcheck-failed");
        if (failures != 0) {
            std::cerr << "error: gradcheck: " << failures << "/" << count
                      << " configurations exceeded tolerance\n";
            return kExitGradCheck;
        }
        std::cout << "gradcheck: " << count << " configurations within tolerance\n";
        return kExitOk;
    } catch (const NumericError& e) {
        ctx.finish(std::string("numeric-error: ") + e.what());
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractViolation& e) {
        ctx.finish(std::string("config-error: ") + e.what());
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        ctx.finish(std::string("io-error: ") + e.what());
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FlexConv continuous-kernel toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::pair<std::string, int (*)(const ConfigFile&)>> commands = {
        {"fit", run_fit},
        {"train", run_train},
        {"spectrum", run_spectrum},
        {"crossres", run_crossres},
        {"gradcheck", run_gradcheck},
    };
    for (auto& [name, fn] : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("config", config_path, "configuration file")->required();
    }
    CLI11_PARSE(app, argc, argv);
    try {
        ConfigFile file = load_config(config_path);
        for (auto& [name, fn] : commands)
            if (app.got_subcommand(name)) return fn(file);
        return kExitConfig;
    } catch (const ContractViolation& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    }
}
