#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flexkernel/autodiff.hpp"

namespace flexkernel {

// Central-difference gradient oracle. Evaluates the loss with perturbed
// parameter copies only; it never touches the reverse-mode path it is used
// to verify.
using LossFn = std::function<double(const std::vector<Tensor>&)>;

inline std::vector<Tensor> finite_difference_grad(const LossFn& loss, std::vector<Tensor> params,
                                                  double step) {
    require(step > 0.0, "finite_difference_grad: step must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor g(params[p].shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double orig = params[p][i];
            params[p][i] = orig + step;
            const double fp = loss(params);
            params[p][i] = orig - step;
            const double fm = loss(params);
            params[p][i] = orig;
            g[i] = (fp - fm) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
};

// Compares per-scalar relative error; entries where both sides fall below
// `zero_floor` count as exact agreement, which keeps finite-difference noise
// on genuinely zero gradients from registering as error.
inline GradCheckReport compare_gradients(const std::vector<std::string>& names,
                                         const std::vector<Tensor>& analytic,
                                         const std::vector<Tensor>& fd, double tolerance,
                                         double zero_floor = 1e-6) {
    GradCheckReport report;
    require(analytic.size() == fd.size(), "compare_gradients: count mismatch");
    for (std::size_t p = 0; p < analytic.size(); ++p) {
        require(analytic[p].shape() == fd[p].shape(), "compare_gradients: shape mismatch");
        for (std::size_t i = 0; i < analytic[p].size(); ++i) {
            const double a = analytic[p][i];
            const double f = fd[p][i];
            const double denom = std::max(std::fabs(a), std::fabs(f));
            const double rel = denom < zero_floor ? 0.0 : std::fabs(a - f) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p < names.size() ? names[p] : std::to_string(p);
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_fd = f;
            }
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

// Builds the loss twice: once on a tape for reverse-mode gradients and once
// as a plain forward function for the central-difference oracle.
using TapeLossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline GradCheckReport check_gradients(const TapeLossBuilder& build,
                                       const std::vector<std::string>& names,
                                       const std::vector<Tensor>& params, double step = 1e-4,
                                       double tolerance = 1e-4) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
        vars.push_back(tape.input(params[p], p < names.size() ? names[p] : std::to_string(p)));
    Var loss = build(tape, vars);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Var& v : vars) analytic.push_back(tape.grad(v));

    LossFn forward_only = [&](const std::vector<Tensor>& ps) {
        Tape t;
        std::vector<Var> vs;
        vs.reserve(ps.size());
        for (const Tensor& p : ps) vs.push_back(t.constant(p));
        return build(t, vs).value().item();
    };
    std::vector<Tensor> fd = finite_difference_grad(forward_only, params, step);
    return compare_gradients(names, analytic, fd, tolerance);
}

}  // namespace flexkernel
