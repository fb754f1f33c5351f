#include <catch2/catch_amalgamated.hpp>

#include "warpkit/adam.hpp"

using namespace warpkit;

TEST_CASE("first step moves by approximately -lr") {
    AdamConfig<double> cfg;
    cfg.lr = 1e-4;
    cfg.total_steps = 100;
    AdamState<double> state;
    std::map<std::string, Tensor<double>> params{{"p", Tensor<double>({1}, 0.5)}};
    std::map<std::string, Tensor<double>> grads{{"p", Tensor<double>({1}, 1.0)}};
    adam_step(state, cfg, params, grads);
    // bias correction makes m_hat = v_hat = g on step 1, so the update is
    // lr * g / (|g| + eps)
    double delta = params.at("p")[0] - 0.5;
    REQUIRE(std::abs(delta + cfg.lr * 1.0 / (1.0 + cfg.eps)) < 1e-9);
    REQUIRE(state.step == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    AdamConfig<double> cfg;
    AdamState<double> state;
    std::map<std::string, Tensor<double>> params{{"p", Tensor<double>({3}, 1.25)}};
    std::map<std::string, Tensor<double>> grads{{"p", Tensor<double>({3})}};
    for (int i = 0; i < 5; ++i) adam_step(state, cfg, params, grads);
    for (double v : params.at("p").data) REQUIRE(v == 1.25);
}

TEST_CASE("opposite gradients give mirror updates") {
    AdamConfig<double> cfg;
    cfg.total_steps = 10;
    AdamState<double> state;
    std::map<std::string, Tensor<double>> params{{"a", Tensor<double>({1}, 0.0)},
                                                 {"b", Tensor<double>({1}, 0.0)}};
    std::map<std::string, Tensor<double>> grads{{"a", Tensor<double>({1}, 0.7)},
                                                {"b", Tensor<double>({1}, -0.7)}};
    for (int i = 0; i < 3; ++i) adam_step(state, cfg, params, grads);
    REQUIRE(params.at("a")[0] == Catch::Approx(-params.at("b")[0]).epsilon(1e-12));
}

TEST_CASE("learning rate holds then decays linearly to zero") {
    AdamConfig<float> cfg;
    cfg.lr = 2e-3f;
    cfg.total_steps = 1000;
    REQUIRE(adam_lr_at(cfg, 1) == cfg.lr);
    REQUIRE(adam_lr_at(cfg, 500) == cfg.lr);
    REQUIRE(adam_lr_at(cfg, 750) == Catch::Approx(cfg.lr * 0.5f));
    REQUIRE(adam_lr_at(cfg, 1000) == 0.0f);
    REQUIRE(adam_lr_at(cfg, 5000) == 0.0f);  // past the horizon: clamp at 0
}

TEST_CASE("missing gradient is an error") {
    AdamConfig<float> cfg;
    AdamState<float> state;
    std::map<std::string, Tensor<float>> params{{"p", Tensor<float>({2})}};
    std::map<std::string, Tensor<float>> grads;
    REQUIRE_THROWS_WITH(adam_step(state, cfg, params, grads),
                        Catch::Matchers::ContainsSubstring("p"));
}
