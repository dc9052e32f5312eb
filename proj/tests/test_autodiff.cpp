#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexkernel/autodiff.hpp"
#include "flexkernel/gradcheck.hpp"
#include "flexkernel/rng.hpp"

using namespace flexkernel;

namespace {

// Random tensor in [lo, hi], optionally pushed away from a kink at zero.
Tensor random_tensor(RngStream& rng, std::vector<std::size_t> shape, double lo, double hi,
                     double avoid_zero = 0.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = rng.uniform(lo, hi);
        if (avoid_zero > 0.0) {
            while (std::fabs(v) < avoid_zero) v = rng.uniform(lo, hi);
        }
        t[i] = v;
    }
    return t;
}

}  // namespace

TEST_CASE("analytic derivatives of the classics") {
    Tape tape;
    Var x = tape.input(Tensor::scalar(3.0), "x");
    tape.backward(x * x);
    REQUIRE(tape.grad(x).item() == Catch::Approx(6.0));

    Tape tape2;
    Var y = tape2.input(Tensor::scalar(0.0), "y");
    tape2.backward(sin_v(y));
    REQUIRE(tape2.grad(y).item() == Catch::Approx(1.0));
}

TEST_CASE("finite difference oracle on closed forms") {
    LossFn cube = [](const std::vector<Tensor>& p) {
        const double x = p[0].item();
        return x * x * x;
    };
    auto g = finite_difference_grad(cube, {Tensor::scalar(2.0)}, 1e-4);
    REQUIRE(std::fabs(g[0].item() - 12.0) < 1e-6);

    LossFn absf = [](const std::vector<Tensor>& p) { return std::fabs(p[0].item()); };
    auto g2 = finite_difference_grad(absf, {Tensor::scalar(0.0)}, 1e-4);
    REQUIRE(g2[0].item() == 0.0);

    REQUIRE_THROWS_AS(finite_difference_grad(cube, {Tensor::scalar(1.0)}, 0.0),
                      ContractViolation);
}

TEST_CASE("every elementwise op passes the finite-difference check") {
    struct OpCase {
        const char* name;
        double lo, hi, avoid_zero;
        std::function<Var(Tape&, Var)> apply;
    };
    const std::vector<OpCase> cases = {
        {"sin", -2.0, 2.0, 0.0, [](Tape&, Var v) { return sin_v(v); }},
        {"cos", -2.0, 2.0, 0.0, [](Tape&, Var v) { return cos_v(v); }},
        {"exp", -2.0, 2.0, 0.0, [](Tape&, Var v) { return exp_v(v); }},
        {"log", 0.1, 2.0, 0.0, [](Tape&, Var v) { return log_v(v); }},
        {"neg", -2.0, 2.0, 0.0, [](Tape&, Var v) { return neg(v); }},
        {"abs", -2.0, 2.0, 0.01, [](Tape&, Var v) { return abs_v(v); }},
        {"relu", -2.0, 2.0, 0.01, [](Tape&, Var v) { return relu(v); }},
        {"softplus", -2.0, 2.0, 0.0, [](Tape&, Var v) { return softplus(v); }},
        {"sigmoid", -2.0, 2.0, 0.0, [](Tape&, Var v) { return sigmoid(v); }},
        {"scale", -2.0, 2.0, 0.0, [](Tape&, Var v) { return scale(v, -1.7); }},
        {"add_scalar", -2.0, 2.0, 0.0, [](Tape&, Var v) { return add_scalar(v, 0.3); }},
    };
    RngStream rng(101);
    for (const auto& c : cases) {
        for (int trial = 0; trial < 100; ++trial) {
            Tensor x = random_tensor(rng, {3}, c.lo, c.hi, c.avoid_zero);
            auto build = [&](Tape& t, const std::vector<Var>& vs) {
                return sum_all(c.apply(t, vs[0]));
            };
            auto report = check_gradients(build, {c.name}, {x});
            INFO(c.name << " trial " << trial << " worst " << report.max_rel_err);
            REQUIRE(report.pass);
        }
    }
}

TEST_CASE("binary ops with broadcasting pass the finite-difference check") {
    struct OpCase {
        const char* name;
        std::function<Var(Var, Var)> apply;
        bool positive_b;
        bool avoid_ties;
    };
    const std::vector<OpCase> cases = {
        {"add", [](Var a, Var b) { return a + b; }, false, false},
        {"sub", [](Var a, Var b) { return a - b; }, false, false},
        {"mul", [](Var a, Var b) { return a * b; }, false, false},
        {"div", [](Var a, Var b) { return a / b; }, true, false},
        {"minimum", [](Var a, Var b) { return minimum(a, b); }, false, true},
        {"maximum", [](Var a, Var b) { return maximum(a, b); }, false, true},
    };
    const std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> shapes = {
        {{4}, {4}}, {{3, 4}, {4}}, {{3, 1}, {1, 4}}, {{2, 3, 1}, {3, 4}},
    };
    RngStream rng(202);
    for (const auto& c : cases) {
        for (const auto& [sa, sb] : shapes) {
            if (c.avoid_ties && sa != sb) continue;  // tie control needs aligned entries
            for (int trial = 0; trial < 25; ++trial) {
                Tensor a = random_tensor(rng, sa, -2.0, 2.0);
                Tensor b = c.positive_b ? random_tensor(rng, sb, 0.5, 2.0)
                                        : random_tensor(rng, sb, -2.0, 2.0);
                if (c.avoid_ties) {
                    // keep every pair separated well beyond the FD step
                    for (std::size_t i = 0; i < b.size(); ++i) {
                        const double s = rng.next_unit() < 0.5 ? -1.0 : 1.0;
                        b[i] = a[i] + s * rng.uniform(0.05, 0.3);
                    }
                }
                auto build = [&](Tape&, const std::vector<Var>& vs) {
                    return sum_all(c.apply(vs[0], vs[1]));
                };
                auto report = check_gradients(build, {"a", "b"}, {a, b});
                INFO(c.name << " shapes " << shape_string(sa) << shape_string(sb));
                REQUIRE(report.pass);
            }
        }
    }
}

TEST_CASE("matmul, transpose, reshape and crop propagate gradients") {
    RngStream rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor(rng, {3, 4}, -2.0, 2.0);
        Tensor b = random_tensor(rng, {4, 2}, -2.0, 2.0);
        auto build = [&](Tape&, const std::vector<Var>& vs) {
            Var m = matmul(vs[0], vs[1]);
            Var t = transpose2d(m);                       // [2,3]
            Var r = reshape(t, {6});
            return sum_all(r * r);
        };
        REQUIRE(check_gradients(build, {"a", "b"}, {a, b}).pass);
    }
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor(rng, {4, 5}, -2.0, 2.0);
        auto build = [&](Tape&, const std::vector<Var>& vs) {
            Var c = crop(vs[0], {1, 2}, {3, 5});
            return mean_all(c * c);
        };
        REQUIRE(check_gradients(build, {"a"}, {a}).pass);
    }
}

TEST_CASE("reductions route gradients to the right entries") {
    RngStream rng(404);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor a = random_tensor(rng, {3, 4}, -2.0, 2.0);
        // spread entries to keep argmax unambiguous under the FD step
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += static_cast<double>(i) * 1e-2;
        auto build_all = [&](Tape&, const std::vector<Var>& vs) {
            return reduce_max_all(vs[0]);
        };
        REQUIRE(check_gradients(build_all, {"a"}, {a}).pass);
        auto build_rows = [&](Tape&, const std::vector<Var>& vs) {
            return sum_all(reduce_max_axis(vs[0], 1));
        };
        REQUIRE(check_gradients(build_rows, {"a"}, {a}).pass);
        auto build_cols = [&](Tape&, const std::vector<Var>& vs) {
            return sum_all(reduce_max_axis(vs[0], 0));
        };
        REQUIRE(check_gradients(build_cols, {"a"}, {a}).pass);
    }
}

TEST_CASE("mse matches its primitive expansion") {
    RngStream rng(505);
    Tensor a = random_tensor(rng, {5}, -2.0, 2.0);
    Tensor b = random_tensor(rng, {5}, -2.0, 2.0);
    auto build = [&](Tape&, const std::vector<Var>& vs) { return mse_loss(vs[0], vs[1]); };
    REQUIRE(check_gradients(build, {"a", "b"}, {a, b}).pass);

    Tape tape;
    Var va = tape.constant(a), vb = tape.constant(b);
    Var direct = mse_loss(va, vb);
    Var expanded = mean_all((va - vb) * (va - vb));
    REQUIRE(direct.value().item() == Catch::Approx(expanded.value().item()));
}

TEST_CASE("repeated backward calls accumulate leaf gradients") {
    Tape tape;
    Var x = tape.input(Tensor::scalar(3.0), "x");
    Var y = x * x;
    tape.backward(y);
    REQUIRE(tape.grad(x).item() == Catch::Approx(6.0));
    tape.backward(y);
    REQUIRE(tape.grad(x).item() == Catch::Approx(12.0));
    tape.zero_grad();
    tape.backward(y);
    REQUIRE(tape.grad(x).item() == Catch::Approx(6.0));
}

TEST_CASE("unused parameters get exactly zero gradients") {
    Tape tape;
    Var x = tape.input(Tensor::scalar(2.0), "x");
    Var unused = tape.input(Tensor({3}, {1.0, 2.0, 3.0}), "unused");
    tape.backward(x * x);
    auto grads = tape.parameter_gradients();
    REQUIRE(grads.size() == 2);
    REQUIRE(grads[1].first == "unused");
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(grads[1].second[i] == 0.0);
    (void)unused;
}

TEST_CASE("backward rejects non-scalar outputs") {
    Tape tape;
    Var x = tape.input(Tensor({2}, {1.0, 2.0}), "x");
    Var y = x * x;
    REQUIRE_THROWS_AS(tape.backward(y), ContractViolation);
}

TEST_CASE("non-finite values raise a numeric error naming the op") {
    Tape tape;
    Var x = tape.input(Tensor::scalar(1000.0), "x");
    Var y = exp_v(x * x);  // overflows to inf
    try {
        tape.backward(y);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("exp") != std::string::npos);
    }
}

TEST_CASE("constants do not accumulate gradients") {
    Tape tape;
    Var c = tape.constant(Tensor::scalar(2.0));
    Var x = tape.input(Tensor::scalar(3.0), "x");
    tape.backward(c * x);
    REQUIRE(tape.grad(x).item() == Catch::Approx(2.0));
    REQUIRE_THROWS_AS(tape.grad(c), ContractViolation);
}
