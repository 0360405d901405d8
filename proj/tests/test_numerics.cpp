#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cnalloc/kernels.hpp"
#include "cnalloc/numerics.hpp"

using namespace cnalloc;

namespace {

// Independent evaluation: plain loops, no kernels, no cache.
std::vector<double> reference_forward(const NetworkParameters& p, std::vector<double> x) {
    for (const auto& layer : p.layers) {
        std::vector<double> y(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            double s = layer.bias[o];
            for (std::size_t i = 0; i < layer.inputs; ++i) s += layer.weights[o * layer.inputs + i] * x[i];
            switch (layer.activation) {
                case Activation::linear:
                    y[o] = s;
                    break;
                case Activation::relu:
                    y[o] = s > 0.0 ? s : 0.0;
                    break;
                case Activation::tanh:
                    y[o] = std::tanh(s);
                    break;
            }
        }
        x = std::move(y);
    }
    return x;
}

NetworkParameters random_network(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> width(1, 8);
    std::uniform_int_distribution<std::size_t> depth(0, 3);
    std::vector<std::size_t> sizes{width(rng)};
    const std::size_t hidden = depth(rng);
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(width(rng));
    sizes.push_back(std::uniform_int_distribution<std::size_t>(1, 4)(rng));
    const Activation out = rng() % 2 == 0 ? Activation::linear : Activation::tanh;
    NetworkParameters p = mlp_init({sizes, Activation::relu, out}, rng());
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& layer : p.layers) {
        for (auto& b : layer.bias) b = u(rng);
    }
    return p;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

double objective(const NetworkParameters& p, const std::vector<double>& x, const std::vector<double>& g) {
    const auto y = reference_forward(p, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("init shapes, zero biases and determinism") {
    const auto p = mlp_init({{2, 1}}, 11);
    REQUIRE(p.layers.size() == 1);
    CHECK(p.layers[0].weights.size() == 2);
    CHECK(p.layers[0].bias == std::vector<double>{0.0});
    const auto q = mlp_init({{2, 1}}, 11);
    CHECK(p.layers[0].weights == q.layers[0].weights);
    CHECK_THROWS_AS(mlp_init({{3}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(mlp_init({{3, 0, 1}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(mlp_init({{}}, 1), std::invalid_argument);
}

TEST_CASE("parameter count of a 3-256-256-4 network") {
    const auto p = mlp_init({{3, 256, 256, 4}, Activation::relu, Activation::tanh}, 1);
    CHECK(p.parameter_count() == 67844);
}

TEST_CASE("init respects the fan-in bound") {
    const auto p = mlp_init({{9, 256, 3}}, 5);
    for (const auto& layer : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
        for (double w : layer.weights) CHECK(std::abs(w) <= bound);
    }
}

TEST_CASE("forward matches an independent layer-by-layer evaluation") {
    std::mt19937_64 rng(21);
    auto p = mlp_init({{2, 3, 1}, Activation::relu, Activation::linear}, 4);
    p.layers[0].bias = {0.1, -0.2, 0.3};
    p.layers[1].bias = {0.05};
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_vector(2, rng);
        const auto y = mlp_predict(p, x);
        CHECK(y[0] == doctest::Approx(reference_forward(p, x)[0]).epsilon(1e-14));
    }
    auto zero = p;
    for (auto& layer : zero.layers) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    CHECK(mlp_predict(zero, std::vector<double>{1.0, -3.0})[0] == 0.0);
}

TEST_CASE("forward is bit-identical on repeat and rejects bad widths") {
    const auto p = mlp_init({{4, 16, 2}}, 8);
    const std::vector<double> x{0.1, 0.2, -0.3, 0.4};
    const auto a = mlp_predict(p, x);
    const auto b = mlp_predict(p, x);
    CHECK(a == b);
    CHECK_THROWS_AS(mlp_predict(p, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("bounded outputs stay in [-1, 1] for extreme parameters") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = mlp_init({{3, 5, 2}, Activation::relu, Activation::tanh}, rng());
        for (auto& layer : p.layers) {
            for (auto& w : layer.weights) w *= 1e3;
        }
        const auto y = mlp_predict(p, random_vector(3, rng, 100.0));
        for (double v : y) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("linear layer gradients") {
    auto p = mlp_init({{3, 2}}, 2);
    const std::vector<double> x{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -0.7};
    const auto cache = mlp_forward(p, x);
    const auto grads = mlp_gradients(p, cache, g);
    for (std::size_t o = 0; o < 2; ++o) {
        CHECK(grads.bias[0][o] == g[o]);
        for (std::size_t i = 0; i < 3; ++i) CHECK(grads.weights[0][o * 3 + i] == doctest::Approx(g[o] * x[i]));
    }
    const auto zero = mlp_gradients(p, cache, std::vector<double>{0.0, 0.0});
    for (double v : zero.weights[0]) CHECK(v == 0.0);
    for (double v : zero.input) CHECK(v == 0.0);
}

TEST_CASE("stale caches are rejected") {
    auto p = mlp_init({{2, 4, 1}}, 3);
    const auto cache = mlp_forward(p, std::vector<double>{0.5, 0.5});
    auto grads = Gradients::zeros_like(p);
    AdamState opt = AdamState::for_network(p, 1e-3);
    grads.weights[0][0] = 1.0;
    adam_step(p, grads, opt);
    CHECK_THROWS_AS(mlp_gradients(p, cache, std::vector<double>{1.0}), ShapeError);
    const auto other = mlp_init({{2, 4, 1}}, 4);
    CHECK_THROWS_AS(mlp_gradients(other, mlp_forward(p, std::vector<double>{0.5, 0.5}), std::vector<double>{1.0}),
                    ShapeError);
}

TEST_CASE("gradients match central finite differences on 100 random networks") {
    std::mt19937_64 rng(2024);
    const double h = 1e-5;
    double worst = 0.0;
    for (int net = 0; net < 100; ++net) {
        auto p = random_network(rng);
        const auto x = random_vector(p.input_size(), rng);
        const auto g = random_vector(p.output_size(), rng);
        const auto grads = mlp_gradients(p, mlp_forward(p, x), g);
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            auto check_entry = [&](double& param, double analytic) {
                const double saved = param;
                param = saved + h;
                const double up = objective(p, x, g);
                param = saved - h;
                const double down = objective(p, x, g);
                param = saved;
                worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
            };
            for (std::size_t i = 0; i < p.layers[l].weights.size(); ++i) {
                check_entry(p.layers[l].weights[i], grads.weights[l][i]);
            }
            for (std::size_t i = 0; i < p.layers[l].bias.size(); ++i) {
                check_entry(p.layers[l].bias[i], grads.bias[l][i]);
            }
        }
        auto xs = x;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double saved = xs[i];
            xs[i] = saved + h;
            const double up = objective(p, xs, g);
            xs[i] = saved - h;
            const double down = objective(p, xs, g);
            xs[i] = saved;
            worst = std::max(worst, relative_error(grads.input[i], (up - down) / (2.0 * h)));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("batched passes equal the sum of per-sample passes") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_network(rng);
        const std::size_t batch = 1 + rng() % 11;
        std::vector<double> inputs, out_grads;
        for (std::size_t b = 0; b < batch; ++b) {
            const auto x = random_vector(p.input_size(), rng);
            const auto g = random_vector(p.output_size(), rng);
            inputs.insert(inputs.end(), x.begin(), x.end());
            out_grads.insert(out_grads.end(), g.begin(), g.end());
        }
        BatchCache bc;
        mlp_forward_batch(p, inputs, batch, bc);
        auto batched = Gradients::zeros_like(p);
        std::vector<double> input_grads;
        mlp_accumulate_gradients_batch(p, bc, out_grads, batched, &input_grads);

        auto summed = Gradients::zeros_like(p);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::vector<double> x(inputs.begin() + static_cast<long>(b * p.input_size()),
                                        inputs.begin() + static_cast<long>((b + 1) * p.input_size()));
            const std::vector<double> g(out_grads.begin() + static_cast<long>(b * p.output_size()),
                                        out_grads.begin() + static_cast<long>((b + 1) * p.output_size()));
            const auto cache = mlp_forward(p, x);
            const auto out = bc.output(b);
            for (std::size_t o = 0; o < out.size(); ++o) CHECK(out[o] == doctest::Approx(cache.output()[o]).epsilon(1e-12));
            mlp_accumulate_gradients(p, cache, g, summed, true);
            for (std::size_t i = 0; i < p.input_size(); ++i) {
                CHECK(input_grads[b * p.input_size() + i] == doctest::Approx(summed.input[i]).epsilon(1e-12));
            }
        }
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            for (std::size_t i = 0; i < summed.weights[l].size(); ++i) {
                CHECK(batched.weights[l][i] == doctest::Approx(summed.weights[l][i]).epsilon(1e-12));
            }
            for (std::size_t i = 0; i < summed.bias[l].size(); ++i) {
                CHECK(batched.bias[l][i] == doctest::Approx(summed.bias[l][i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("first adam step moves a scalar by the learning rate") {
    for (double g : {3.0, -0.25, 1e-3}) {
        auto p = mlp_init({{1, 1}}, 1);
        p.layers[0].weights[0] = 0.5;
        AdamState opt = AdamState::for_network(p, 0.01);
        auto grads = Gradients::zeros_like(p);
        grads.weights[0][0] = g;
        adam_step(p, grads, opt);
        const double moved = 0.5 - p.layers[0].weights[0];
        // bias-corrected m/sqrt(v) = sign(g) up to the epsilon floor
        CHECK(moved == doctest::Approx(0.01 * g / (std::abs(g) + 1e-8)).epsilon(1e-12));
        CHECK(p.layers[0].bias[0] == 0.0);
        CHECK(opt.step_count == 1);
    }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged and is deterministic") {
    auto p = mlp_init({{3, 4, 2}}, 6);
    const auto before = p;
    AdamState opt = AdamState::for_network(p, 1e-3);
    adam_step(p, Gradients::zeros_like(p), opt);
    for (std::size_t l = 0; l < p.layers.size(); ++l) CHECK(p.layers[l].weights == before.layers[l].weights);

    auto a = mlp_init({{3, 4, 2}}, 6), b = a;
    AdamState oa = AdamState::for_network(a, 1e-3), ob = oa;
    auto grads = Gradients::zeros_like(a);
    std::mt19937_64 rng(1);
    for (auto& w : grads.weights) w = random_vector(w.size(), rng);
    adam_step(a, grads, oa);
    adam_step(b, grads, ob);
    for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(a.layers[l].weights == b.layers[l].weights);
}

TEST_CASE("adam rejects non-finite gradients without mutating") {
    auto p = mlp_init({{2, 2}}, 1);
    const auto before = p;
    AdamState opt = AdamState::for_network(p, 1e-3);
    auto grads = Gradients::zeros_like(p);
    grads.bias[0][1] = std::nan("");
    CHECK_THROWS_AS(adam_step(p, grads, opt), NonFiniteError);
    CHECK(p.layers[0].weights == before.layers[0].weights);
    CHECK(opt.step_count == 0);
}

TEST_CASE("soft update algebra") {
    auto target = mlp_init({{1, 1}}, 1);
    auto online = target;
    target.layers[0].weights[0] = 0.0;
    online.layers[0].weights[0] = 1.0;
    soft_update(target, online, 0.005);
    CHECK(target.layers[0].weights[0] == 0.005);

    auto t2 = mlp_init({{4, 3}}, 2);
    const auto o2 = mlp_init({{4, 3}}, 3);
    const auto keep = t2;
    soft_update(t2, o2, 0.0);
    CHECK(t2.layers[0].weights == keep.layers[0].weights);
    soft_update(t2, o2, 1.0);
    CHECK(t2.layers[0].weights == o2.layers[0].weights);

    // Two blends with tau equal one blend with 1 - (1 - tau)^2 (scalars, exact in binary).
    auto a = mlp_init({{1, 1}}, 1), b = a, on = a;
    a.layers[0].weights[0] = b.layers[0].weights[0] = 0.0;
    on.layers[0].weights[0] = 1.0;
    soft_update(a, on, 0.5);
    soft_update(a, on, 0.5);
    soft_update(b, on, 0.75);
    CHECK(a.layers[0].weights[0] == b.layers[0].weights[0]);

    CHECK_THROWS_AS(soft_update(t2, mlp_init({{4, 2}}, 1), 0.5), ShapeError);
    CHECK_THROWS_AS(soft_update(t2, o2, 1.5), std::invalid_argument);
}

TEST_CASE("repeated soft updates never move away from a frozen online network") {
    std::mt19937_64 rng(12);
    auto target = mlp_init({{3, 8, 2}}, 1);
    const auto online = mlp_init({{3, 8, 2}}, 2);
    auto distance = [&] {
        double d = 0.0;
        for (std::size_t l = 0; l < target.layers.size(); ++l) {
            for (std::size_t i = 0; i < target.layers[l].weights.size(); ++i) {
                d += std::abs(target.layers[l].weights[i] - online.layers[l].weights[i]);
            }
        }
        return d;
    };
    double last = distance();
    for (int i = 0; i < 50; ++i) {
        soft_update(target, online, 0.005);
        const double now = distance();
        CHECK(now <= last);
        last = now;
    }
}

TEST_CASE("snapshots round-trip exactly") {
    auto p = mlp_init({{3, 5, 2}, Activation::relu, Activation::tanh}, 77);
    p.layers[1].bias = {0.125, -3.5e-7};
    const auto j = to_json(p);
    CHECK(j.at("format") == "cnalloc.mlp/1");
    const auto q = network_from_json(nlohmann::json::parse(j.dump()));
    REQUIRE(q.same_architecture(p));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(q.layers[l].weights == p.layers[l].weights);
        CHECK(q.layers[l].bias == p.layers[l].bias);
        CHECK(q.layers[l].activation == p.layers[l].activation);
    }
    AdamState opt = AdamState::for_network(p, 2e-4);
    auto grads = Gradients::zeros_like(p);
    grads.weights[0][3] = 0.7;
    adam_step(p, grads, opt);
    const auto restored = adam_state_from_json(nlohmann::json::parse(to_json(opt).dump()), p);
    CHECK(restored.step_count == opt.step_count);
    CHECK(restored.first_moment.weights == opt.first_moment.weights);
    CHECK(restored.second_moment.weights == opt.second_moment.weights);
}

TEST_CASE("network results do not depend on the backend beyond rounding") {
    const kernels::Backend original = kernels::active_backend();
    const auto p = mlp_init({{12, 256, 256, 1}}, 9);
    std::mt19937_64 rng(4);
    const auto x = random_vector(12, rng);
    kernels::set_backend(kernels::Backend::scalar);
    const double ref = mlp_predict(p, x)[0];
    kernels::set_backend(original);
    CHECK(mlp_predict(p, x)[0] == doctest::Approx(ref).epsilon(1e-12));
}

}
