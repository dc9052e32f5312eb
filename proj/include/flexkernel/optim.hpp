#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "flexkernel/autodiff.hpp"
#include "flexkernel/kernelgen.hpp"

namespace flexkernel {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    Tensor m, v;
};

// Bias-corrected Adam update of one tensor; `t` is the 1-based step count.
inline void adam_step(Tensor& param, const Tensor& grad, AdamMoments& state, std::size_t t,
                      double lr, const AdamConfig& cfg = {}) {
    require(param.shape() == grad.shape(), "adam_step: gradient shape mismatch");
    if (state.m.size() == 0) {
        state.m = Tensor(param.shape());
        state.v = Tensor(param.shape());
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// Optimizer over bound parameters, with the mask group stepped at its own
// learning rate. Moments are keyed by parameter name, so the same optimizer
// instance carries state across per-step tape rebuilds.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<BoundParam>& params, Tape& tape, double lr_regular, double lr_mask) {
        ++step_;
        for (auto& p : params) {
            const Tensor& g = tape.grad(p.var);
            if (!g.all_finite())
                throw NumericError("NaN gradient in parameter '" + p.name + "'");
            const double lr = p.group == ParamGroup::mask ? lr_mask : lr_regular;
            adam_step(*p.value, g, moments_[p.name], step_, lr, cfg_);
        }
    }

    std::size_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const std::map<std::string, AdamMoments>& moments() const { return moments_; }

    void restore(std::map<std::string, AdamMoments> moments, std::size_t step) {
        moments_ = std::move(moments);
        step_ = step;
    }

private:
    AdamConfig cfg_;
    std::map<std::string, AdamMoments> moments_;
    std::size_t step_ = 0;
};

// Learning-rate schedule: linear warmup from zero over warmup_epochs, then
// cosine annealing to zero at total_epochs. The mask group runs at
// mask_lr_factor times the regular rate throughout.
struct ScheduleConfig {
    double base_lr = 0.01;
    double warmup_epochs = 5.0;
    double total_epochs = 0.0;
    double mask_lr_factor = 0.1;
};

enum class LrGroup { regular, mask };

inline double lr_at(double epoch, LrGroup group, const ScheduleConfig& cfg) {
    require(cfg.base_lr > 0.0 && cfg.mask_lr_factor > 0.0, "lr_at: factors must be positive");
    require(cfg.warmup_epochs <= cfg.total_epochs, "lr_at: warmup must not exceed total");
    require(epoch >= 0.0 && epoch < cfg.total_epochs, "lr_at: epoch out of range");
    double lr;
    if (epoch < cfg.warmup_epochs) {
        lr = cfg.base_lr * epoch / cfg.warmup_epochs;
    } else {
        const double span = cfg.total_epochs - cfg.warmup_epochs;
        const double progress = span > 0.0 ? (epoch - cfg.warmup_epochs) / span : 0.0;
        lr = cfg.base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
    }
    return group == LrGroup::mask ? lr * cfg.mask_lr_factor : lr;
}

}  // namespace flexkernel
