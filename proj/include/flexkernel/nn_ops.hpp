#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "flexkernel/autodiff.hpp"
#include "flexkernel/rng.hpp"

namespace flexkernel {

// Fused network-layer operations with hand-written backward passes. The
// convolutions parallelize over independent output planes only; every output
// element is produced by exactly one thread with a fixed accumulation order,
// so results are bitwise identical at any thread count.

namespace detail {

// Cross-correlation core: out[b,oc,y,x] += sum_{ic,ky,kx}
//   sig[b,ic,y+oy+ky,x+ox+kx] * ker[oc,ic,ky,kx], zero outside the signal.
inline void corr2d_accum(const double* sig, double* out, const double* ker, std::ptrdiff_t B,
                         std::ptrdiff_t Ci, std::ptrdiff_t H, std::ptrdiff_t W, std::ptrdiff_t Co,
                         std::ptrdiff_t kh, std::ptrdiff_t kw, std::ptrdiff_t oy,
                         std::ptrdiff_t ox) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t b = 0; b < B; ++b)
        for (std::ptrdiff_t oc = 0; oc < Co; ++oc) {
            double* oplane = out + (b * Co + oc) * H * W;
            for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                const double* splane = sig + (b * Ci + ic) * H * W;
                const double* kplane = ker + (oc * Ci + ic) * kh * kw;
                for (std::ptrdiff_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t dy = oy + ky;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min(H, H - dy);
                    for (std::ptrdiff_t kx = 0; kx < kw; ++kx) {
                        const double w = kplane[ky * kw + kx];
                        if (w == 0.0) continue;
                        const std::ptrdiff_t dx = ox + kx;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(W, W - dx);
                        for (std::ptrdiff_t y = y0; y < y1; ++y) {
                            const double* srow = splane + (y + dy) * W + dx;
                            double* orow = oplane + y * W;
                            for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += w * srow[x];
                        }
                    }
                }
            }
        }
}

}  // namespace detail

// 2-D cross-correlation of a batched signal [B,Ci,H,W] with a kernel
// [Co,Ci,kh,kw]. (oy, ox) give the signal offset of kernel tap (0,0) relative
// to the output position; centered "same" padding uses oy = -(kh-1)/2. Output
// is [B,Co,H,W] with zero padding outside the signal.
inline Var conv2d(Var signal, Var kernel, std::ptrdiff_t oy, std::ptrdiff_t ox) {
    require(signal.tape == kernel.tape, "conv2d: operands from different tapes");
    Tape& tape = *signal.tape;
    const Tensor& sv = tape.value(signal);
    const Tensor& kv = tape.value(kernel);
    require(sv.rank() == 4 && kv.rank() == 4, "conv2d: signal [B,C,H,W], kernel [Co,Ci,kh,kw]");
    require(sv.extent(1) == kv.extent(1), "conv2d: channel mismatch between signal and kernel");
    const std::ptrdiff_t B = sv.extent(0), Ci = sv.extent(1), H = sv.extent(2), W = sv.extent(3);
    const std::ptrdiff_t Co = kv.extent(0), kh = kv.extent(2), kw = kv.extent(3);
    Tensor out({static_cast<std::size_t>(B), static_cast<std::size_t>(Co),
                static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    detail::corr2d_accum(sv.data(), out.data(), kv.data(), B, Ci, H, W, Co, kh, kw, oy, ox);
    int sid = signal.id, kid = kernel.id;
    return tape.make(
        "conv2d", std::move(out), {sid, kid},
        [sid, kid, B, Ci, H, W, Co, kh, kw, oy, ox](Tape& t, int, const Tensor& gout) {
            const double* G = gout.data();
            if (t.requires_grad(sid)) {
                // dSig[b,ic,y+dy,x+dx] += w * gout[b,oc,y,x]: a correlation of
                // gout with the kernel transposed in channels and flipped taps.
                const double* K = t.value(kid).data();
                Tensor gs(t.value(sid).shape());
                double* GS = gs.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
                for (std::ptrdiff_t b = 0; b < B; ++b)
                    for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                        double* gplane = GS + (b * Ci + ic) * H * W;
                        for (std::ptrdiff_t oc = 0; oc < Co; ++oc) {
                            const double* dplane = G + (b * Co + oc) * H * W;
                            const double* kplane = K + (oc * Ci + ic) * kh * kw;
                            for (std::ptrdiff_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t dy = oy + ky;
                                const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                                const std::ptrdiff_t y1 = std::min(H, H - dy);
                                for (std::ptrdiff_t kx = 0; kx < kw; ++kx) {
                                    const double w = kplane[ky * kw + kx];
                                    if (w == 0.0) continue;
                                    const std::ptrdiff_t dx = ox + kx;
                                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                                    const std::ptrdiff_t x1 = std::min(W, W - dx);
                                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                                        double* grow = gplane + (y + dy) * W + dx;
                                        const double* drow = dplane + y * W;
                                        for (std::ptrdiff_t x = x0; x < x1; ++x)
                                            grow[x] += w * drow[x];
                                    }
                                }
                            }
                        }
                    }
                t.accumulate(sid, gs);
            }
            if (t.requires_grad(kid)) {
                const double* S = t.value(sid).data();
                Tensor gk(t.value(kid).shape());
                double* GK = gk.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
                for (std::ptrdiff_t oc = 0; oc < Co; ++oc)
                    for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                        double* kplane = GK + (oc * Ci + ic) * kh * kw;
                        for (std::ptrdiff_t b = 0; b < B; ++b) {
                            const double* splane = S + (b * Ci + ic) * H * W;
                            const double* dplane = G + (b * Co + oc) * H * W;
                            for (std::ptrdiff_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t dy = oy + ky;
                                const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                                const std::ptrdiff_t y1 = std::min(H, H - dy);
                                for (std::ptrdiff_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t dx = ox + kx;
                                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                                    const std::ptrdiff_t x1 = std::min(W, W - dx);
                                    double acc = 0.0;
                                    for (std::ptrdiff_t y = y0; y < y1; ++y) {
                                        const double* srow = splane + (y + dy) * W + dx;
                                        const double* drow = dplane + y * W;
                                        for (std::ptrdiff_t x = x0; x < x1; ++x)
                                            acc += srow[x] * drow[x];
                                    }
                                    kplane[ky * kw + kx] += acc;
                                }
                            }
                        }
                    }
                t.accumulate(kid, gk);
            }
        });
}

// 1-D cross-correlation, signal [B,Ci,T], kernel [Co,Ci,m]; `offset` is the
// signal offset of kernel tap 0 relative to the output position. Causal
// alignment of a full-length-k kernel cropped to taps [x0, x1) uses
// offset = x0 - (k - 1), which keeps every tap at or before the output time.
inline Var conv1d(Var signal, Var kernel, std::ptrdiff_t offset) {
    require(signal.tape == kernel.tape, "conv1d: operands from different tapes");
    Tape& tape = *signal.tape;
    const Tensor& sv = tape.value(signal);
    const Tensor& kv = tape.value(kernel);
    require(sv.rank() == 3 && kv.rank() == 3, "conv1d: signal [B,C,T], kernel [Co,Ci,m]");
    require(sv.extent(1) == kv.extent(1), "conv1d: channel mismatch between signal and kernel");
    const std::ptrdiff_t B = sv.extent(0), Ci = sv.extent(1), T = sv.extent(2);
    const std::ptrdiff_t Co = kv.extent(0), m = kv.extent(2);
    Tensor out({static_cast<std::size_t>(B), static_cast<std::size_t>(Co),
                static_cast<std::size_t>(T)});
    double* O = out.data();
    const double* S = sv.data();
    const double* K = kv.data();
    for (std::ptrdiff_t b = 0; b < B; ++b)
        for (std::ptrdiff_t oc = 0; oc < Co; ++oc) {
            double* orow = O + (b * Co + oc) * T;
            for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                const double* srow = S + (b * Ci + ic) * T;
                const double* krow = K + (oc * Ci + ic) * m;
                for (std::ptrdiff_t j = 0; j < m; ++j) {
                    const double w = krow[j];
                    if (w == 0.0) continue;
                    const std::ptrdiff_t d = offset + j;
                    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -d);
                    const std::ptrdiff_t t1 = std::min(T, T - d);
                    for (std::ptrdiff_t tt = t0; tt < t1; ++tt) orow[tt] += w * srow[tt + d];
                }
            }
        }
    int sid = signal.id, kid = kernel.id;
    return tape.make(
        "conv1d", std::move(out), {sid, kid},
        [sid, kid, B, Ci, T, Co, m, offset](Tape& t, int, const Tensor& gout) {
            const double* G = gout.data();
            if (t.requires_grad(sid)) {
                const double* K = t.value(kid).data();
                Tensor gs(t.value(sid).shape());
                double* GS = gs.data();
                for (std::ptrdiff_t b = 0; b < B; ++b)
                    for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                        double* grow = GS + (b * Ci + ic) * T;
                        for (std::ptrdiff_t oc = 0; oc < Co; ++oc) {
                            const double* drow = G + (b * Co + oc) * T;
                            const double* krow = K + (oc * Ci + ic) * m;
                            for (std::ptrdiff_t j = 0; j < m; ++j) {
                                const double w = krow[j];
                                if (w == 0.0) continue;
                                const std::ptrdiff_t d = offset + j;
                                const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -d);
                                const std::ptrdiff_t t1 = std::min(T, T - d);
                                for (std::ptrdiff_t tt = t0; tt < t1; ++tt)
                                    grow[tt + d] += w * drow[tt];
                            }
                        }
                    }
                t.accumulate(sid, gs);
            }
            if (t.requires_grad(kid)) {
                const double* S = t.value(sid).data();
                Tensor gk(t.value(kid).shape());
                double* GK = gk.data();
                for (std::ptrdiff_t oc = 0; oc < Co; ++oc)
                    for (std::ptrdiff_t ic = 0; ic < Ci; ++ic) {
                        double* krow = GK + (oc * Ci + ic) * m;
                        for (std::ptrdiff_t b = 0; b < B; ++b) {
                            const double* srow = S + (b * Ci + ic) * T;
                            const double* drow = G + (b * Co + oc) * T;
                            for (std::ptrdiff_t j = 0; j < m; ++j) {
                                const std::ptrdiff_t d = offset + j;
                                const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -d);
                                const std::ptrdiff_t t1 = std::min(T, T - d);
                                double acc = 0.0;
                                for (std::ptrdiff_t tt = t0; tt < t1; ++tt)
                                    acc += srow[tt + d] * drow[tt];
                                krow[j] += acc;
                            }
                        }
                    }
                t.accumulate(kid, gk);
            }
        });
}

// Running statistics of a batch-normalization layer; mutated during training
// forwards, read in evaluation mode.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;

    BatchNormState() = default;
    explicit BatchNormState(std::size_t channels)
        : running_mean({channels}), running_var(Tensor::full({channels}, 1.0)) {}
};

// Batch normalization over [B,C,H,W] with per-channel affine parameters.
// Training mode normalizes by batch statistics and updates the running
// estimates in place; evaluation mode uses the running estimates.
inline Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormState& state, bool train_mode,
                       double momentum = 0.1, double eps = 1e-5) {
    Tape& tape = *x.tape;
    const Tensor& xv = tape.value(x);
    require(xv.rank() == 4, "batchnorm2d: input [B,C,H,W] required");
    const std::size_t B = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
    const std::size_t plane = H * W;
    const std::size_t cnt = B * plane;
    require(tape.value(gamma).size() == C && tape.value(beta).size() == C,
            "batchnorm2d: affine parameter size mismatch");
    Tensor mean({C}), var({C});
    if (train_mode) {
        require(B > 0, "batchnorm2d: empty batch");
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = xv.data() + (b * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(cnt);
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = xv.data() + (b * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
            }
            mean[c] = mu;
            var[c] = v / static_cast<double>(cnt);
            state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mu;
            state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * var[c];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    const Tensor& gv = tape.value(gamma);
    const Tensor& bv = tape.value(beta);
    Tensor out(xv.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps);
            const double* p = xv.data() + (b * C + c) * plane;
            double* o = out.data() + (b * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                o[i] = gv[c] * (p[i] - mean[c]) * inv + bv[c];
        }
    int xid = x.id, gid = gamma.id, bid = beta.id;
    return tape.make(
        "batchnorm2d", std::move(out), {xid, gid, bid},
        [xid, gid, bid, B, C, plane, cnt, mean, var, eps, train_mode](Tape& t, int,
                                                                      const Tensor& gout) {
            const Tensor& xvv = t.value(xid);
            const Tensor& gvv = t.value(gid);
            Tensor gx(xvv.shape()), gg({C}), gb({C});
            for (std::size_t c = 0; c < C; ++c) {
                const double inv = 1.0 / std::sqrt(var[c] + eps);
                double sum_g = 0.0, sum_gxh = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double* xp = xvv.data() + (b * C + c) * plane;
                    const double* gp = gout.data() + (b * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_g += gp[i];
                        sum_gxh += gp[i] * (xp[i] - mean[c]) * inv;
                    }
                }
                gb[c] = sum_g;
                gg[c] = sum_gxh;
                const double n = static_cast<double>(cnt);
                for (std::size_t b = 0; b < B; ++b) {
                    const double* xp = xvv.data() + (b * C + c) * plane;
                    const double* gp = gout.data() + (b * C + c) * plane;
                    double* op = gx.data() + (b * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (train_mode) {
                            const double xh = (xp[i] - mean[c]) * inv;
                            op[i] = gvv[c] * inv * (gp[i] - sum_g / n - xh * sum_gxh / n);
                        } else {
                            op[i] = gvv[c] * inv * gp[i];
                        }
                    }
                }
            }
            t.accumulate(xid, gx);
            t.accumulate(gid, gg);
            t.accumulate(bid, gb);
        });
}

// Inverted dropout: active only in train mode, scaling kept values by
// 1/(1-rate). The mask is drawn from the given stream.
inline Var dropout(Var x, double rate, RngStream& rng, bool train_mode) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train_mode || rate == 0.0) return x;
    Tape& tape = *x.tape;
    const Tensor& xv = tape.value(x);
    Tensor mask(xv.shape());
    const double keep = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.next_unit() >= rate ? keep : 0.0;
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    int xid = x.id;
    return tape.make("dropout", std::move(out), {xid},
                     [xid, mask](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(xid)) return;
                         Tensor gx(gout.shape());
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gout[i] * mask[i];
                         t.accumulate(xid, gx);
                     });
}

// [B,C,H,W] -> [B,C] spatial mean.
inline Var global_avg_pool(Var x) {
    Tape& tape = *x.tape;
    const Tensor& xv = tape.value(x);
    require(xv.rank() == 4, "global_avg_pool: input [B,C,H,W] required");
    const std::size_t B = xv.extent(0), C = xv.extent(1), plane = xv.extent(2) * xv.extent(3);
    Tensor out({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* p = xv.data() + (b * C + c) * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            out[b * C + c] = s / static_cast<double>(plane);
        }
    int xid = x.id;
    return tape.make("global_avg_pool", std::move(out), {xid},
                     [xid, B, C, plane](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(xid)) return;
                         Tensor gx(t.value(xid).shape());
                         for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t c = 0; c < C; ++c) {
                                 const double g =
                                     gout[b * C + c] / static_cast<double>(plane);
                                 double* p = gx.data() + (b * C + c) * plane;
                                 for (std::size_t i = 0; i < plane; ++i) p[i] = g;
                             }
                         t.accumulate(xid, gx);
                     });
}

// Mean softmax cross-entropy of logits [B,K] against integer labels.
inline Var cross_entropy_logits(Var logits, const std::vector<int>& labels) {
    Tape& tape = *logits.tape;
    const Tensor& lv = tape.value(logits);
    require(lv.rank() == 2, "cross_entropy_logits: logits [B,K] required");
    const std::size_t B = lv.extent(0), K = lv.extent(1);
    require(labels.size() == B, "cross_entropy_logits: label count mismatch");
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = lv.data() + b * K;
        require(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < K,
                "cross_entropy_logits: label out of range");
        double m = row[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        double se = 0.0;
        for (std::size_t k = 0; k < K; ++k) se += std::exp(row[k] - m);
        loss += m + std::log(se) - row[static_cast<std::size_t>(labels[b])];
    }
    int lid = logits.id;
    return tape.make(
        "cross_entropy", Tensor::scalar(loss / static_cast<double>(B)), {lid},
        [lid, labels, B, K](Tape& t, int, const Tensor& gout) {
            if (!t.requires_grad(lid)) return;
            const Tensor& lvv = t.value(lid);
            Tensor gl({B, K});
            const double c = gout[0] / static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b) {
                const double* row = lvv.data() + b * K;
                double* grow = gl.data() + b * K;
                double m = row[0];
                for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
                double se = 0.0;
                for (std::size_t k = 0; k < K; ++k) se += std::exp(row[k] - m);
                for (std::size_t k = 0; k < K; ++k) {
                    double p = std::exp(row[k] - m) / se;
                    grow[k] = c * (p - (static_cast<std::size_t>(labels[b]) == k ? 1.0 : 0.0));
                }
            }
            t.accumulate(lid, gl);
        });
}

inline std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t B = logits.extent(0), K = logits.extent(1);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = logits.data() + b * K;
        std::size_t arg = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (row[k] > row[arg]) arg = k;
        if (static_cast<int>(arg) == labels[b]) ++correct;
    }
    return correct;
}

}  // namespace flexkernel
