#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flexkernel/datasets.hpp"
#include "flexkernel/flexconv.hpp"
#include "flexkernel/spectral.hpp"
#include "flexkernel/training.hpp"

namespace flexkernel {

// Residual block of two FlexConvs:
//   x -> conv1 -> bn -> relu -> dropout -> conv2 -> bn -> (+ shortcut) -> relu
// with a 1x1 projection on the shortcut when channel counts differ.
struct FlexBlockParams {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    MagnetParams magnet1, magnet2;
    GaussianMaskParams mask1, mask2;
    Tensor bn1_gamma, bn1_beta, bn2_gamma, bn2_beta;
    BatchNormState bn1_state, bn2_state;
    Tensor proj_w;  // [out, in, 1, 1]; empty when in == out
    double dropout = 0.2;
};

struct FlexNetParams {
    std::vector<FlexBlockParams> blocks;
    Tensor fc_w;  // [classes, last_width]
    Tensor fc_b;  // [classes]
    std::size_t kernel_resolution = 0;
    std::size_t n_classes = 0;
    std::size_t in_channels = 1;
    std::size_t base_width = 0;
    ConvConfig conv;
    SpectrumConfig spectrum;

    // Field order mirrors the forward pass binding order exactly.
    template <class Fn>
    void for_each_param(Fn fn) {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string prefix = "block" + std::to_string(b) + ".";
            blocks[b].magnet1.for_each_param(fn, prefix + "conv1.");
            blocks[b].mask1.for_each_param(fn, prefix + "conv1.");
            fn(prefix + "bn1.gamma", blocks[b].bn1_gamma);
            fn(prefix + "bn1.beta", blocks[b].bn1_beta);
            blocks[b].magnet2.for_each_param(fn, prefix + "conv2.");
            blocks[b].mask2.for_each_param(fn, prefix + "conv2.");
            fn(prefix + "bn2.gamma", blocks[b].bn2_gamma);
            fn(prefix + "bn2.beta", blocks[b].bn2_beta);
            if (blocks[b].proj_w.size() != 0) fn(prefix + "proj.w", blocks[b].proj_w);
        }
        fn("fc.w", fc_w);
        fn("fc.b", fc_b);
    }
};

// Block widths scale the base count by [1, 1.5, 1.5, 2, 2]; deeper blocks
// reuse the last factor.
inline std::size_t flexnet_block_width(std::size_t base, std::size_t block_index) {
    static const double factors[5] = {1.0, 1.5, 1.5, 2.0, 2.0};
    const double f = factors[block_index < 4 ? block_index : 4];
    return static_cast<std::size_t>(std::lround(static_cast<double>(base) * f));
}

inline FlexNetParams make_flexnet(std::size_t n_blocks, std::size_t base_width,
                                  std::size_t n_classes, std::size_t in_channels,
                                  std::size_t kernel_resolution, std::size_t magnet_layers,
                                  std::size_t magnet_hidden, const InitConfig& cfg,
                                  RngStream& rng, double dropout = 0.2) {
    require(n_blocks >= 1 && base_width >= 1 && n_classes >= 1,
            "make_flexnet: counts must be >= 1");
    FlexNetParams net;
    net.kernel_resolution = kernel_resolution;
    net.n_classes = n_classes;
    net.in_channels = in_channels;
    net.base_width = base_width;
    std::size_t prev = in_channels;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t width = flexnet_block_width(base_width, b);
        FlexBlockParams block;
        block.in_channels = prev;
        block.out_channels = width;
        block.dropout = dropout;
        block.magnet1 = init_magnet(magnet_layers, magnet_hidden, prev, width, 2, cfg, rng);
        block.mask1 = init_mask_for_task(TaskKind::image);
        block.magnet2 = init_magnet(magnet_layers, magnet_hidden, width, width, 2, cfg, rng);
        block.mask2 = init_mask_for_task(TaskKind::image);
        block.bn1_gamma = Tensor::full({width}, 1.0);
        block.bn1_beta = Tensor({width});
        block.bn2_gamma = Tensor::full({width}, 1.0);
        block.bn2_beta = Tensor({width});
        block.bn1_state = BatchNormState(width);
        block.bn2_state = BatchNormState(width);
        if (prev != width) {
            const double bound = std::sqrt(1.0 / static_cast<double>(prev));
            block.proj_w =
                sample_uniform(rng, -bound, bound, width * prev).reshaped({width, prev, 1, 1});
        }
        net.blocks.push_back(std::move(block));
        prev = width;
    }
    const std::size_t last = prev;
    const double bound = std::sqrt(1.0 / static_cast<double>(last));
    net.fc_w = sample_uniform(rng, -bound, bound, n_classes * last).reshaped({n_classes, last});
    net.fc_b = Tensor({n_classes});
    return net;
}

struct FlexNetForward {
    Var logits;
    std::vector<Var> f_plus;  // per FlexConv layer, for aliasing regularization
    std::vector<CropBox> boxes;
};

// Forward pass over a batch [B, C, H, W]. In train mode batch statistics
// drive the normalization (and running stats update) and dropout is live.
// The kernels are regenerated from the current parameters on every call.
inline FlexNetForward flexnet_forward_t(Tape& tape, FlexNetParams& net, const Tensor& batch,
                                        bool train_mode, RngStream& dropout_rng,
                                        std::vector<BoundParam>* reg,
                                        bool regularize_flexconv = false) {
    require(batch.rank() == 4, "flexnet_forward: batch must be [B,C,H,W]");
    require(batch.extent(0) >= 1, "flexnet_forward: empty batch");
    require(batch.extent(1) == net.in_channels, "flexnet_forward: channel count mismatch");
    require(kernel_size_init(batch.extent(2)) == net.kernel_resolution &&
                kernel_size_init(batch.extent(3)) == net.kernel_resolution,
            "flexnet_forward: input spatial size does not match the kernel grid resolution");
    CoordinateGrid grid = make_grid(2, net.kernel_resolution);
    FlexNetForward out;
    Var x = tape.constant(batch);
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        FlexBlockParams& block = net.blocks[b];
        const std::string prefix = "block" + std::to_string(b) + ".";

        auto conv_layer = [&](MagnetParams& magnet, GaussianMaskParams& mask,
                              const std::string& name, Var input) {
            MagnetVars mv = bind_magnet(tape, magnet, reg, name);
            MaskVars kv = bind_mask(tape, mask, reg, name);
            TapeFlexKernel fk = flexconv_kernel_t(tape, grid, mv, kv, net.conv);
            out.boxes.push_back(fk.box);
            Var f = regularize_flexconv ? max_freq_flexconv_t(tape, mv, kv, net.spectrum)
                                        : max_freq_magnet_t(tape, mv, net.spectrum);
            out.f_plus.push_back(f);
            return conv2d(input, fk.cropped, fk.offsets[0], fk.offsets[1]);
        };

        Var h = conv_layer(block.magnet1, block.mask1, prefix + "conv1.", x);
        Var g1 = reg ? tape.input(block.bn1_gamma, prefix + "bn1.gamma")
                     : tape.constant(block.bn1_gamma);
        Var b1 = reg ? tape.input(block.bn1_beta, prefix + "bn1.beta")
                     : tape.constant(block.bn1_beta);
        if (reg) {
            reg->push_back({prefix + "bn1.gamma", &block.bn1_gamma, g1, ParamGroup::regular});
            reg->push_back({prefix + "bn1.beta", &block.bn1_beta, b1, ParamGroup::regular});
        }
        h = batchnorm2d(h, g1, b1, block.bn1_state, train_mode);
        h = relu(h);
        h = dropout(h, block.dropout, dropout_rng, train_mode);
        h = conv_layer(block.magnet2, block.mask2, prefix + "conv2.", h);
        Var g2 = reg ? tape.input(block.bn2_gamma, prefix + "bn2.gamma")
                     : tape.constant(block.bn2_gamma);
        Var b2 = reg ? tape.input(block.bn2_beta, prefix + "bn2.beta")
                     : tape.constant(block.bn2_beta);
        if (reg) {
            reg->push_back({prefix + "bn2.gamma", &block.bn2_gamma, g2, ParamGroup::regular});
            reg->push_back({prefix + "bn2.beta", &block.bn2_beta, b2, ParamGroup::regular});
        }
        h = batchnorm2d(h, g2, b2, block.bn2_state, train_mode);

        Var shortcut = x;
        if (block.proj_w.size() != 0) {
            Var pw = reg ? tape.input(block.proj_w, prefix + "proj.w")
                         : tape.constant(block.proj_w);
            if (reg) reg->push_back({prefix + "proj.w", &block.proj_w, pw, ParamGroup::regular});
            shortcut = conv2d(x, pw, 0, 0);
        }
        x = relu(h + shortcut);
    }
    Var pooled = global_avg_pool(x);  // [B, C]
    Var w = reg ? tape.input(net.fc_w, "fc.w") : tape.constant(net.fc_w);
    Var bb = reg ? tape.input(net.fc_b, "fc.b") : tape.constant(net.fc_b);
    if (reg) {
        reg->push_back({"fc.w", &net.fc_w, w, ParamGroup::regular});
        reg->push_back({"fc.b", &net.fc_b, bb, ParamGroup::regular});
    }
    out.logits = matmul(pooled, transpose2d(w)) + bb;
    return out;
}

// Evaluation-mode logits for a batch, no parameter registration.
inline Tensor flexnet_logits(FlexNetParams& net, const Tensor& batch) {
    Tape tape;
    RngStream unused(0);
    return flexnet_forward_t(tape, net, batch, false, unused, nullptr).logits.value();
}

inline double flexnet_accuracy(FlexNetParams& net, const Dataset& data,
                               std::size_t batch_size = 100) {
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i)
            idx.push_back(i);
        Tensor logits = flexnet_logits(net, gather_images(data, idx));
        correct += count_correct(logits, gather_labels(data, idx));
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Classifier training.
// ---------------------------------------------------------------------------

struct ClassifierTrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double base_lr = 0.01;
    double warmup_epochs = 5.0;
    double mask_lr_factor = 0.1;
    double lambda = 0.1;
    bool regularize_flexconv = false;
    std::uint64_t seed = 1;
    double stop_accuracy = 0.0;  // stop once test accuracy reaches this; 0 disables
};

struct TrainStepRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double task_loss = 0.0;
    double aliasing_loss = 0.0;
    double total = 0.0;
    double lr_regular = 0.0;
    double lr_mask = 0.0;
    double accuracy = -1.0;  // filled on evaluation rows only
};

struct TrainResult {
    std::vector<TrainStepRecord> records;
    std::vector<double> accuracy_per_epoch;
    double best_accuracy = 0.0;
    std::size_t epochs_run = 0;
};

// Cross-entropy training with cosine-annealed Adam, per-epoch accuracy
// evaluation, and the aliasing penalty summed over every FlexConv layer.
// Deterministic under the seed: batch order comes from one stream, dropout
// masks from another.
inline TrainResult train_flexnet_classifier(FlexNetParams& net, const Dataset& train,
                                            const Dataset& test,
                                            const ClassifierTrainConfig& cfg) {
    require(!train.labels.empty(), "train_flexnet_classifier: empty training set");
    TrainResult result;
    AdamOptimizer adam;
    RngStream shuffle_rng(cfg.seed + 1);
    RngStream dropout_rng(cfg.seed + 2);
    ScheduleConfig schedule;
    schedule.base_lr = cfg.base_lr;
    schedule.warmup_epochs = cfg.warmup_epochs;
    schedule.total_epochs = static_cast<double>(cfg.epochs);
    schedule.mask_lr_factor = cfg.mask_lr_factor;
    const double f_nyq = nyquist(net.kernel_resolution);
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = epoch_batches(train.size(), cfg.batch_size, shuffle_rng);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const double frac_epoch =
                static_cast<double>(epoch) +
                static_cast<double>(bi) / static_cast<double>(batches.size());
            const double lr_reg = lr_at(frac_epoch, LrGroup::regular, schedule);
            const double lr_mask = lr_at(frac_epoch, LrGroup::mask, schedule);
            Tensor images = gather_images(train, batches[bi]);
            std::vector<int> labels = gather_labels(train, batches[bi]);
            Tape tape;
            std::vector<BoundParam> params;
            FlexNetForward fwd = flexnet_forward_t(tape, net, images, true, dropout_rng,
                                                   &params, cfg.regularize_flexconv);
            Var task = cross_entropy_logits(fwd.logits, labels);
            LossBreakdown breakdown;
            Var total = total_loss_t(tape, task, fwd.f_plus, f_nyq, cfg.lambda, &breakdown);
            tape.backward(total);
            adam.step(params, tape, lr_reg, lr_mask);
            TrainStepRecord rec;
            rec.epoch = epoch;
            rec.step = global_step++;
            rec.task_loss = breakdown.task_loss;
            rec.aliasing_loss = breakdown.aliasing_loss_total;
            rec.total = breakdown.total;
            rec.lr_regular = lr_reg;
            rec.lr_mask = lr_mask;
            result.records.push_back(rec);
        }
        const double acc = flexnet_accuracy(net, test);
        result.accuracy_per_epoch.push_back(acc);
        result.best_accuracy = std::max(result.best_accuracy, acc);
        result.epochs_run = epoch + 1;
        if (!result.records.empty()) result.records.back().accuracy = acc;
        if (cfg.stop_accuracy > 0.0 && acc >= cfg.stop_accuracy) break;
    }
    return result;
}

}  // namespace flexkernel
