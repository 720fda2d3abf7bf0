#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "w2vbert/optimizer.hpp"
#include "w2vbert/tensor.hpp"

using namespace w2v;
using Catch::Approx;

TEST_CASE("lr schedule: linear warmup then inverse-sqrt decay") {
    LrSchedule s; // peak 1e-3, warmup 200
    CHECK(lr_at(s, 1) == Approx(1e-3 / 200.0).epsilon(1e-12));
    CHECK(lr_at(s, 100) == Approx(0.5e-3).epsilon(1e-12));
    CHECK(lr_at(s, 200) == Approx(1e-3).epsilon(1e-12));
    CHECK(lr_at(s, 800) == Approx(1e-3 * std::sqrt(200.0 / 800.0)).epsilon(1e-12));
    CHECK(lr_at(s, 20000) == Approx(1e-3 * 0.1).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(s, 0), TensorError);
}

TEST_CASE("first Adam step moves each weight by ~lr in the -sign(g) direction") {
    std::map<std::string, Tensor<double>> params;
    Tensor<double> w(Shape{3}, {1.0, -2.0, 0.5}, true);
    params.emplace("w", w);
    backward(sum_all(mul(w, Tensor<double>(Shape{3}, {3.0, -0.7, 0.001}))));
    AdamState<double> st;
    adam_step(params, st, 0.01);
    // bias-corrected m-hat/sqrt(v-hat) = g/|g| on the first step, up to eps
    CHECK(w.values()[0] == Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(w.values()[1] == Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(w.values()[2] == Approx(0.5 - 0.01).epsilon(1e-4));
    CHECK(st.step == 1);
}

TEST_CASE("Adam drives a quadratic to its minimum") {
    std::map<std::string, Tensor<double>> params;
    Tensor<double> w(Shape{1}, {1.0}, true);
    params.emplace("w", w);
    AdamState<double> st;
    for (int i = 0; i < 300; ++i) {
        w.clear_grad();
        backward(sum_all(mul(w, w)));
        adam_step(params, st, 0.05);
    }
    CHECK(std::fabs(w.values()[0]) < 0.1);
}

TEST_CASE("parameters without gradients are left untouched") {
    std::map<std::string, Tensor<double>> params;
    Tensor<double> used(Shape{1}, {1.0}, true);
    Tensor<double> unused(Shape{2}, {5.0, 6.0}, true);
    params.emplace("used", used);
    params.emplace("unused", unused);
    backward(sum_all(mul(used, used)));
    AdamState<double> st;
    adam_step(params, st, 0.1);
    CHECK(unused.values()[0] == 5.0);
    CHECK(unused.values()[1] == 6.0);
    CHECK(used.values()[0] != 1.0);
}

TEST_CASE("non-finite gradients are rejected with the parameter name") {
    std::map<std::string, Tensor<double>> params;
    Tensor<double> w(Shape{1}, {1.0}, true);
    params.emplace("offender", w);
    w.node()->ensure_grad();
    w.node()->grad[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState<double> st;
    CHECK_THROWS_WITH(adam_step(params, st, 0.1), Catch::Matchers::ContainsSubstring("offender"));
    CHECK_THROWS_AS(adam_step(params, st, 0.0), TensorError);
}
