#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexkernel/optim.hpp"

using namespace flexkernel;

TEST_CASE("adam moves against a constant gradient") {
    Tensor x = Tensor::scalar(0.0);
    AdamMoments state;
    for (std::size_t t = 1; t <= 50; ++t)
        adam_step(x, Tensor::scalar(2.0), state, t, 0.01);
    REQUIRE(x.item() < -0.1);

    Tensor y = Tensor::scalar(0.0);
    AdamMoments state2;
    for (std::size_t t = 1; t <= 50; ++t)
        adam_step(y, Tensor::scalar(-2.0), state2, t, 0.01);
    REQUIRE(y.item() > 0.1);
}

TEST_CASE("zero gradients leave fresh parameters unchanged while moments decay") {
    Tensor x = Tensor::scalar(1.5);
    AdamMoments state;
    for (std::size_t t = 1; t <= 10; ++t) adam_step(x, Tensor::scalar(0.0), state, t, 0.1);
    REQUIRE(x.item() == 1.5);

    // once primed, the moments decay geometrically under zero gradients
    AdamMoments primed;
    Tensor y = Tensor::scalar(0.0);
    adam_step(y, Tensor::scalar(1.0), primed, 1, 0.0);
    const double m0 = primed.m[0], v0 = primed.v[0];
    adam_step(y, Tensor::scalar(0.0), primed, 2, 0.0);
    REQUIRE(primed.m[0] == Catch::Approx(0.9 * m0));
    REQUIRE(primed.v[0] == Catch::Approx(0.999 * v0));
}

TEST_CASE("adam drives a quadratic bowl to the bottom") {
    Tensor x = Tensor::scalar(1.0);
    AdamMoments state;
    for (std::size_t t = 1; t <= 200; ++t) {
        Tensor grad = Tensor::scalar(2.0 * x.item());
        adam_step(x, grad, state, t, 0.1);
    }
    REQUIRE(std::fabs(x.item()) < 1e-3);
}

TEST_CASE("adam rejects mismatched gradient shapes") {
    Tensor x({3});
    AdamMoments state;
    REQUIRE_THROWS_AS(adam_step(x, Tensor({2}), state, 1, 0.1), ContractViolation);
}

TEST_CASE("schedule warms up linearly then anneals to zero") {
    ScheduleConfig cfg;
    cfg.base_lr = 0.01;
    cfg.warmup_epochs = 5;
    cfg.total_epochs = 20;
    REQUIRE(lr_at(0.0, LrGroup::regular, cfg) == 0.0);
    REQUIRE(lr_at(2.5, LrGroup::regular, cfg) == Catch::Approx(0.005));
    REQUIRE(lr_at(5.0, LrGroup::regular, cfg) == Catch::Approx(0.01));
    REQUIRE(lr_at(19.999, LrGroup::regular, cfg) < 1e-6);
    for (double e : {0.0, 1.0, 7.0, 15.0, 19.5}) {
        REQUIRE(lr_at(e, LrGroup::mask, cfg) ==
                Catch::Approx(0.1 * lr_at(e, LrGroup::regular, cfg)).margin(1e-15));
    }
    REQUIRE_THROWS_AS(lr_at(20.0, LrGroup::regular, cfg), ContractViolation);
    REQUIRE_THROWS_AS(lr_at(-1.0, LrGroup::regular, cfg), ContractViolation);
    ScheduleConfig bad = cfg;
    bad.warmup_epochs = 30;
    REQUIRE_THROWS_AS(lr_at(1.0, LrGroup::regular, bad), ContractViolation);
}

TEST_CASE("optimizer applies group learning rates") {
    Tensor w = Tensor::scalar(0.0), m = Tensor::scalar(0.0);
    Tape tape;
    Var wv = tape.input(w, "w");
    Var mv = tape.input(m, "mask.sigma");
    std::vector<BoundParam> params{{"w", &w, wv, ParamGroup::regular},
                                   {"mask.sigma", &m, mv, ParamGroup::mask}};
    tape.backward(wv + mv);  // gradient 1 for both
    AdamOptimizer opt;
    opt.step(params, tape, 0.01, 0.001);
    // first adam step moves by exactly lr (bias-corrected mhat/sqrt(vhat) = sign)
    REQUIRE(w.item() == Catch::Approx(-0.01).epsilon(1e-6));
    REQUIRE(m.item() == Catch::Approx(-0.001).epsilon(1e-6));
}
