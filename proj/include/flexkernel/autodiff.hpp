#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flexkernel/errors.hpp"
#include "flexkernel/tensor.hpp"

namespace flexkernel {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns all storage.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const;
};

// Reverse-mode gradient tape. Operations append nodes in evaluation order, so
// node inputs always have smaller ids and the recorded graph is acyclic by
// construction. Single-owner: one thread records and differentiates a tape;
// independent tapes may run in parallel.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self_id, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v) { return push("const", std::move(v), {}, nullptr, false); }

    // Leaf whose gradient is requested; `name` identifies it in gradient maps
    // and numeric error messages.
    Var input(Tensor v, std::string name) {
        Var var = push("input", std::move(v), {}, nullptr, true);
        nodes_[static_cast<std::size_t>(var.id)].name = std::move(name);
        params_.push_back(var.id);
        return var;
    }

    Var make(const char* op, Tensor value, std::vector<int> inputs, BackwardFn bw) {
        bool needs = false;
        for (int i : inputs) {
            require(i >= 0 && static_cast<std::size_t>(i) < nodes_.size(),
                    "Tape::make: unknown input node");
            needs = needs || nodes_[static_cast<std::size_t>(i)].requires_grad;
        }
        return push(op, std::move(value), std::move(inputs), std::move(bw), needs);
    }

    const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    const Tensor& value(Var v) const { return value(v.id); }
    bool requires_grad(int id) const {
        return nodes_.at(static_cast<std::size_t>(id)).requires_grad;
    }
    std::size_t num_nodes() const { return nodes_.size(); }
    const std::string& name(int id) const { return nodes_.at(static_cast<std::size_t>(id)).name; }

    // Accumulate into a node's workspace gradient during the current backward
    // sweep. No-op for nodes that do not require gradients.
    void accumulate(int id, const Tensor& g) {
        auto& node = nodes_.at(static_cast<std::size_t>(id));
        if (!node.requires_grad) return;
        require(g.shape() == node.value.shape(),
                std::string("Tape::accumulate: gradient shape mismatch at op ") + node.op);
        Tensor& slot = work_grads_[static_cast<std::size_t>(id)];
        if (slot.size() == 0) {
            slot = g;
        } else {
            double* d = slot.data();
            const double* s = g.data();
            for (std::size_t i = 0; i < slot.size(); ++i) d[i] += s[i];
        }
    }

    // Reverse sweep from a scalar output. Leaf gradients accumulate across
    // repeated calls until zero_grad(); interior gradients are per-call.
    void backward(Var output) {
        require(output.tape == this, "Tape::backward: output from another tape");
        require(value(output).size() == 1, "Tape::backward: output must be a scalar");
        work_grads_.assign(nodes_.size(), Tensor());
        accumulate(output.id, Tensor::scalar(1.0));
        for (int id = output.id; id >= 0; --id) {
            auto& node = nodes_[static_cast<std::size_t>(id)];
            Tensor& g = work_grads_[static_cast<std::size_t>(id)];
            if (!node.requires_grad || g.size() == 0) continue;
            check_finite(node.value, node.op, "value");
            check_finite(g, node.op, "gradient");
            if (node.backward) node.backward(*this, id, g);
        }
        for (int pid : params_) {
            Tensor& w = work_grads_[static_cast<std::size_t>(pid)];
            Tensor& acc = leaf_grads_[pid];
            const Tensor& v = nodes_[static_cast<std::size_t>(pid)].value;
            if (acc.size() == 0) acc = Tensor(v.shape());
            if (w.size() != 0) {
                double* d = acc.data();
                const double* s = w.data();
                for (std::size_t i = 0; i < acc.size(); ++i) d[i] += s[i];
            }
        }
        work_grads_.clear();
    }

    // Accumulated gradient of a registered input; zeros if it never
    // participated in a differentiated output.
    const Tensor& grad(Var v) const {
        auto it = leaf_grads_.find(v.id);
        require(it != leaf_grads_.end(),
                "Tape::grad: no gradient recorded; was backward() called on this tape?");
        return it->second;
    }

    void zero_grad() { leaf_grads_.clear(); }

    // (name, gradient) for every registered input, in registration order.
    std::vector<std::pair<std::string, Tensor>> parameter_gradients() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.reserve(params_.size());
        for (int pid : params_) {
            auto it = leaf_grads_.find(pid);
            const auto& node = nodes_[static_cast<std::size_t>(pid)];
            out.emplace_back(node.name,
                             it != leaf_grads_.end() ? it->second : Tensor(node.value.shape()));
        }
        return out;
    }

private:
    struct Node {
        Tensor value;
        std::vector<int> inputs;
        BackwardFn backward;
        const char* op;
        std::string name;
        bool requires_grad;
    };

    Var push(const char* op, Tensor value, std::vector<int> inputs, BackwardFn bw, bool needs) {
        nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(bw), op, {}, needs});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    static void check_finite(const Tensor& t, const char* op, const char* what) {
        if (!t.all_finite())
            throw NumericError(std::string("non-finite ") + what + " in operation '" + op + "'");
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> work_grads_;
    std::unordered_map<int, Tensor> leaf_grads_;
    std::vector<int> params_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline const std::vector<std::size_t>& Var::shape() const { return value().shape(); }

// ---------------------------------------------------------------------------
// Broadcasting machinery (NumPy-style trailing alignment).
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> broadcast_shape(const std::vector<std::size_t>& a,
                                                const std::vector<std::size_t>& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    std::vector<std::size_t> out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        require(ea == eb || ea == 1 || eb == 1,
                "broadcast: incompatible shapes " + shape_string(a) + " vs " + shape_string(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

// Strides of `shape` aligned into `out_shape`, zero on broadcast dims.
inline std::vector<std::size_t> broadcast_strides(const std::vector<std::size_t>& shape,
                                                  const std::vector<std::size_t>& out_shape) {
    std::vector<std::size_t> strides(out_shape.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        std::size_t oi = i + (out_shape.size() - shape.size());
        if (shape[i] != 1) strides[oi] = s;
        s *= shape[i];
    }
    return strides;
}

template <class Fn>
void for_each_broadcast(const std::vector<std::size_t>& out_shape,
                        const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        Fn fn) {
    const std::size_t total = Tensor::count(out_shape);
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        fn(flat, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            idx[d]++;
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out_shape[d]) break;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

// Sum `g` (shaped like out_shape) down to `target_shape`.
inline Tensor reduce_to_shape(const Tensor& g, const std::vector<std::size_t>& target_shape) {
    if (g.shape() == target_shape) return g;
    Tensor out(target_shape);
    auto st = broadcast_strides(target_shape, g.shape());
    auto sg = broadcast_strides(g.shape(), g.shape());
    for_each_broadcast(g.shape(), st, sg,
                       [&](std::size_t, std::size_t it, std::size_t ig) { out[it] += g[ig]; });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations with broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

template <class F, class DFa, class DFb>
Var binary_op(const char* name, Var a, Var b, F f, DFa dfda, DFb dfdb) {
    require(a.tape == b.tape, "binary op: operands from different tapes");
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    auto out_shape = broadcast_shape(av.shape(), bv.shape());
    auto sa = broadcast_strides(av.shape(), out_shape);
    auto sb = broadcast_strides(bv.shape(), out_shape);
    Tensor out(out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        out[o] = f(av[ia], bv[ib]);
    });
    int aid = a.id, bid = b.id;
    return tape.make(
        name, std::move(out), {aid, bid},
        [aid, bid, sa, sb, out_shape, dfda, dfdb](Tape& t, int, const Tensor& gout) {
            const Tensor& avv = t.value(aid);
            const Tensor& bvv = t.value(bid);
            if (t.requires_grad(aid)) {
                Tensor ga(out_shape);
                for_each_broadcast(out_shape, sa, sb,
                                   [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                       ga[o] = gout[o] * dfda(avv[ia], bvv[ib]);
                                   });
                t.accumulate(aid, reduce_to_shape(ga, avv.shape()));
            }
            if (t.requires_grad(bid)) {
                Tensor gb(out_shape);
                for_each_broadcast(out_shape, sa, sb,
                                   [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                       gb[o] = gout[o] * dfdb(avv[ia], bvv[ib]);
                                   });
                t.accumulate(bid, reduce_to_shape(gb, bvv.shape()));
            }
        });
}

template <class F, class DF>
Var unary_op(const char* name, Var a, F f, DF dfda) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    int aid = a.id;
    return tape.make(name, std::move(out), {aid},
                     [aid, dfda](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         const Tensor& avv = t.value(aid);
                         Tensor ga(avv.shape());
                         for (std::size_t i = 0; i < avv.size(); ++i)
                             ga[i] = gout[i] * dfda(avv[i]);
                         t.accumulate(aid, ga);
                     });
}

}  // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
    return detail::binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
    return detail::binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Var div(Var a, Var b) {
    return detail::binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// Elementwise min/max; ties route the gradient to the first operand.
inline Var minimum(Var a, Var b) {
    return detail::binary_op(
        "minimum", a, b, [](double x, double y) { return x < y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

inline Var maximum(Var a, Var b) {
    return detail::binary_op(
        "maximum", a, b, [](double x, double y) { return x > y ? x : y; },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; },
        [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

inline Var sin_v(Var a) {
    return detail::unary_op("sin", a, [](double x) { return std::sin(x); },
                            [](double x) { return std::cos(x); });
}

inline Var cos_v(Var a) {
    return detail::unary_op("cos", a, [](double x) { return std::cos(x); },
                            [](double x) { return -std::sin(x); });
}

inline Var exp_v(Var a) {
    return detail::unary_op("exp", a, [](double x) { return std::exp(x); },
                            [](double x) { return std::exp(x); });
}

inline Var log_v(Var a) {
    return detail::unary_op("log", a, [](double x) { return std::log(x); },
                            [](double x) { return 1.0 / x; });
}

inline Var neg(Var a) {
    return detail::unary_op("neg", a, [](double x) { return -x; },
                            [](double) { return -1.0; });
}

inline Var abs_v(Var a) {
    return detail::unary_op("abs", a, [](double x) { return std::fabs(x); },
                            [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var relu(Var a) {
    return detail::unary_op("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                            [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline double softplus_scalar(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Inverse of softplus; clamps to keep exp from overflowing.
inline double softplus_inverse(double y) {
    require(y > 0.0, "softplus_inverse: argument must be positive");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

inline Var softplus(Var a) {
    return detail::unary_op("softplus", a, softplus_scalar, sigmoid_scalar);
}

inline Var sigmoid(Var a) {
    return detail::unary_op("sigmoid", a, sigmoid_scalar, [](double x) {
        double s = sigmoid_scalar(x);
        return s * (1.0 - s);
    });
}

inline Var scale(Var a, double c) {
    return detail::unary_op("scale", a, [c](double x) { return c * x; },
                            [c](double) { return c; });
}

inline Var add_scalar(Var a, double c) {
    return detail::unary_op("add_scalar", a, [c](double x) { return x + c; },
                            [](double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

inline Var reshape(Var a, std::vector<std::size_t> new_shape) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a).reshaped(new_shape);
    int aid = a.id;
    return tape.make("reshape", std::move(out), {aid},
                     [aid](Tape& t, int, const Tensor& gout) {
                         t.accumulate(aid, gout.reshaped(t.value(aid).shape()));
                     });
}

inline Var transpose2d(Var a) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    require(av.rank() == 2, "transpose2d: rank-2 tensor required");
    const std::size_t m = av.extent(0), n = av.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    int aid = a.id;
    return tape.make("transpose2d", std::move(out), {aid},
                     [aid, m, n](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         Tensor ga({m, n});
                         for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                                 ga[i * n + j] = gout[j * m + i];
                         t.accumulate(aid, ga);
                     });
}

// Extract the half-open box [lo, hi) along every dim; the backward pass
// scatters gradients back into the box and leaves zeros elsewhere.
inline Var crop(Var a, const std::vector<std::size_t>& lo, const std::vector<std::size_t>& hi) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    const std::size_t rank = av.rank();
    require(lo.size() == rank && hi.size() == rank, "crop: box rank mismatch");
    std::vector<std::size_t> out_shape(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        require(lo[d] < hi[d] && hi[d] <= av.extent(d), "crop: box out of range");
        out_shape[d] = hi[d] - lo[d];
    }
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t d = rank - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * av.extent(d + 1);
    Tensor out(out_shape);
    const std::size_t total = out.size();
    std::vector<std::size_t> idx(rank, 0);
    auto in_flat = [&](const std::vector<std::size_t>& i) {
        std::size_t f = 0;
        for (std::size_t d = 0; d < rank; ++d) f += (lo[d] + i[d]) * in_strides[d];
        return f;
    };
    for (std::size_t o = 0; o < total; ++o) {
        out[o] = av[in_flat(idx)];
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    int aid = a.id;
    return tape.make("crop", std::move(out), {aid},
                     [aid, lo, out_shape, in_strides, rank](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         Tensor ga(t.value(aid).shape());
                         std::vector<std::size_t> idx(rank, 0);
                         for (std::size_t o = 0; o < gout.size(); ++o) {
                             std::size_t f = 0;
                             for (std::size_t d = 0; d < rank; ++d)
                                 f += (lo[d] + idx[d]) * in_strides[d];
                             ga[f] += gout[o];
                             for (std::size_t d = rank; d-- > 0;) {
                                 if (++idx[d] < out_shape[d]) break;
                                 idx[d] = 0;
                             }
                         }
                         t.accumulate(aid, ga);
                     });
}

// ---------------------------------------------------------------------------
// Matrix product and reductions.
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    require(a.tape == b.tape, "matmul: operands from different tapes");
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    require(av.rank() == 2 && bv.rank() == 2, "matmul: rank-2 tensors required");
    const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    require(bv.extent(0) == k, "matmul: inner extents differ");
    Tensor out({m, n});
    {
        const double* A = av.data();
        const double* B = bv.data();
        double* C = out.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = A[i * k + kk];
                const double* brow = B + kk * n;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
    }
    int aid = a.id, bid = b.id;
    return tape.make(
        "matmul", std::move(out), {aid, bid},
        [aid, bid, m, k, n](Tape& t, int, const Tensor& gout) {
            const double* G = gout.data();
            if (t.requires_grad(aid)) {
                const double* B = t.value(bid).data();
                Tensor ga({m, k});
                double* GA = ga.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = G[i * n + j];
                        const double* brow = B + j;  // column j of B via stride n
                        double* garow = GA + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk)
                            garow[kk] += g * brow[kk * n];
                    }
                t.accumulate(aid, ga);
            }
            if (t.requires_grad(bid)) {
                const double* A = t.value(aid).data();
                Tensor gb({k, n});
                double* GB = gb.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = A[i * k + kk];
                        const double* grow = G + i * n;
                        double* gbrow = GB + kk * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                    }
                t.accumulate(bid, gb);
            }
        });
}

inline Var sum_all(Var a) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    int aid = a.id;
    return tape.make("sum", Tensor::scalar(s), {aid},
                     [aid](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         t.accumulate(aid, Tensor::full(t.value(aid).shape(), gout[0]));
                     });
}

inline Var mean_all(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum_all(a), 1.0 / n);
}

// Max over all entries; gradient routes to the first argmax.
inline Var reduce_max_all(Var a) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    require(av.size() > 0, "reduce_max_all: empty tensor");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < av.size(); ++i)
        if (av[i] > av[arg]) arg = i;
    int aid = a.id;
    return tape.make("reduce_max", Tensor::scalar(av[arg]), {aid},
                     [aid, arg](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         Tensor ga(t.value(aid).shape());
                         ga[arg] = gout[0];
                         t.accumulate(aid, ga);
                     });
}

// Row- or column-wise max of a rank-2 tensor. axis = 1 reduces over columns
// (result per row); axis = 0 reduces over rows.
inline Var reduce_max_axis(Var a, std::size_t axis) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    require(av.rank() == 2 && axis < 2, "reduce_max_axis: rank-2 tensor, axis 0 or 1");
    const std::size_t m = av.extent(0), n = av.extent(1);
    const std::size_t keep = axis == 1 ? m : n;
    Tensor out({keep});
    std::vector<std::size_t> args(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        std::size_t best = axis == 1 ? i * n : i;
        const std::size_t step = axis == 1 ? 1 : n;
        const std::size_t cnt = axis == 1 ? n : m;
        std::size_t arg = best;
        for (std::size_t j = 1; j < cnt; ++j)
            if (av[best + j * step] > av[arg]) arg = best + j * step;
        args[i] = arg;
        out[i] = av[arg];
    }
    int aid = a.id;
    return tape.make("reduce_max_axis", std::move(out), {aid},
                     [aid, args](Tape& t, int, const Tensor& gout) {
                         if (!t.requires_grad(aid)) return;
                         Tensor ga(t.value(aid).shape());
                         for (std::size_t i = 0; i < args.size(); ++i) ga[args[i]] += gout[i];
                         t.accumulate(aid, ga);
                     });
}

// Mean squared error between two same-shape tensors.
inline Var mse_loss(Var a, Var b) {
    require(a.tape == b.tape, "mse_loss: operands from different tapes");
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    require(av.shape() == bv.shape(), "mse_loss: shape mismatch");
    const std::size_t n = av.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    int aid = a.id, bid = b.id;
    return tape.make(
        "mse", Tensor::scalar(s / static_cast<double>(n)), {aid, bid},
        [aid, bid, n](Tape& t, int, const Tensor& gout) {
            const Tensor& avv = t.value(aid);
            const Tensor& bvv = t.value(bid);
            const double c = 2.0 * gout[0] / static_cast<double>(n);
            if (t.requires_grad(aid)) {
                Tensor ga(avv.shape());
                for (std::size_t i = 0; i < n; ++i) ga[i] = c * (avv[i] - bvv[i]);
                t.accumulate(aid, ga);
            }
            if (t.requires_grad(bid)) {
                Tensor gb(bvv.shape());
                for (std::size_t i = 0; i < n; ++i) gb[i] = -c * (avv[i] - bvv[i]);
                t.accumulate(bid, gb);
            }
        });
}

}  // namespace flexkernel
