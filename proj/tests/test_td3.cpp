#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cnalloc/td3.hpp"

using namespace cnalloc;

namespace {

Td3Hyperparams small_hp() {
    Td3Hyperparams hp;
    hp.actor_hidden = {8};
    hp.critic_hidden = {8};
    hp.batch_size = 4;
    return hp;
}

// Single affine layer: out = act(W x + b).
NetworkParameters affine(std::vector<double> w, std::vector<double> b, Activation act) {
    const std::size_t out = b.size();
    const std::size_t in = w.size() / out;
    auto p = mlp_init({{in, out}, act, act}, 1);
    p.layers[0].weights = std::move(w);
    p.layers[0].bias = std::move(b);
    return p;
}

ReplayBuffer<std::vector<double>> filled_buffer(std::size_t n, std::size_t sdim, std::size_t adim, Rng& rng) {
    ReplayBuffer<std::vector<double>> buf(1000, sdim, adim);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        ContinuousTransition t;
        for (std::size_t k = 0; k < sdim; ++k) t.state.push_back(u(rng));
        for (std::size_t k = 0; k < adim; ++k) t.action.push_back(u(rng));
        for (std::size_t k = 0; k < sdim; ++k) t.next_state.push_back(u(rng));
        t.reward = u(rng);
        buf.push(t);
    }
    return buf;
}

}  // namespace

TEST_SUITE("td3") {

TEST_CASE("targets reduce to the reward when gamma is zero") {
    auto hp = small_hp();
    hp.gamma = 0.0;
    Td3Agent agent(3, 2, hp, 5);
    Rng rng(1);
    auto buf = filled_buffer(16, 3, 2, rng);
    const auto batch = buf.sample(16, rng);
    const std::vector<std::vector<double>> noise(16, std::vector<double>(2, 0.3));
    const auto y = agent.target_values(batch, noise);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == batch[i].get().reward);
}

TEST_CASE("targets match a hand-computed twin-minimum oracle") {
    auto hp = small_hp();
    hp.actor_hidden = {};
    hp.critic_hidden = {};
    hp.gamma = 0.9;
    Td3Agent agent(2, 1, hp, 3);
    // actor: a = tanh(0.5 s0 - s1 + 0.1); critics: Q = w . [s, a] + b
    const auto actor = affine({0.5, -1.0}, {0.1}, Activation::tanh);
    const auto c1 = mlp_init({{3, 1}}, 1);
    auto q1 = c1, q2 = c1;
    q1.layers[0].weights = {1.0, 0.0, 2.0};
    q1.layers[0].bias = {0.0};
    q2.layers[0].weights = {0.0, 1.0, -1.0};
    q2.layers[0].bias = {0.5};
    agent.set_targets(actor, q1, q2);

    ReplayBuffer<std::vector<double>> buf(4, 2, 1);
    buf.push({{0.0, 0.0}, {0.0}, 1.0, {0.4, 0.2}});
    buf.push({{0.0, 0.0}, {0.0}, -2.0, {-1.0, 0.7}});
    Rng rng(1);
    ReplayBuffer<std::vector<double>>::Batch batch{std::cref(buf.at(0)), std::cref(buf.at(1))};
    const std::vector<std::vector<double>> noise{{0.5}, {-0.2}};
    const auto y = agent.target_values(batch, noise);

    auto oracle = [](double r, double s0, double s1, double eps) {
        const double a = std::clamp(std::tanh(0.5 * s0 - s1 + 0.1) + eps, -1.0, 1.0);
        const double v1 = s0 + 2.0 * a;
        const double v2 = s1 - a + 0.5;
        return r + 0.9 * std::min(v1, v2);
    };
    CHECK(y[0] == doctest::Approx(oracle(1.0, 0.4, 0.2, 0.5)).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(oracle(-2.0, -1.0, 0.7, -0.2)).epsilon(1e-14));
}

TEST_CASE("identical target critics give their common value") {
    auto hp = small_hp();
    hp.gamma = 0.5;
    Td3Agent agent(2, 2, hp, 7);
    agent.set_targets(agent.target_actor(), agent.target_critic1(), agent.target_critic1());
    Rng rng(2);
    auto buf = filled_buffer(8, 2, 2, rng);
    const auto batch = buf.sample(8, rng);
    const std::vector<std::vector<double>> noise(8, std::vector<double>(2, 0.0));
    const auto y = agent.target_values(batch, noise);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch[i].get();
        auto input = t.next_state;
        const auto a = mlp_predict(agent.target_actor(), t.next_state);
        input.insert(input.end(), a.begin(), a.end());
        const double q = mlp_predict(agent.target_critic1(), input)[0];
        CHECK(y[i] == doctest::Approx(t.reward + 0.5 * q).epsilon(1e-12));
    }
}

TEST_CASE("actions stay in bounds in every mode") {
    auto hp = small_hp();
    hp.noise_sigma = 5.0;
    Td3Agent agent(3, 4, hp, 1);
    Rng rng(3);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 2000; ++i) {
        const std::vector<double> s{u(rng), u(rng), u(rng)};
        for (auto mode : {ActionMode::explore, ActionMode::train, ActionMode::eval}) {
            for (double a : agent.select_action(s, mode, rng)) {
                CHECK(a >= -1.0);
                CHECK(a <= 1.0);
            }
        }
    }
    CHECK_THROWS_AS(agent.select_action(std::vector<double>{1.0}, ActionMode::eval, rng), ShapeError);
}

TEST_CASE("exploration actions are centred uniform draws") {
    Td3Agent agent(1, 3, small_hp(), 1);
    Rng rng(8);
    const std::vector<double> s{0.0};
    double sum = 0.0, sum_sq = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws / 3 + 1; ++i) {
        for (double a : agent.select_action(s, ActionMode::explore, rng)) {
            sum += a;
            sum_sq += a * a;
        }
    }
    const double n = 3.0 * (draws / 3 + 1);
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sum_sq / n == doctest::Approx(1.0 / 3.0).epsilon(0.02));
}

TEST_CASE("training actions without noise equal the evaluation action") {
    auto hp = small_hp();
    hp.noise_sigma = 0.0;
    Td3Agent agent(2, 2, hp, 4);
    Rng rng(1);
    const std::vector<double> s{0.3, -0.7};
    CHECK(agent.select_action(s, ActionMode::train, rng) == agent.select_action(s, ActionMode::eval, rng));
}

TEST_CASE("training noise has the configured spread") {
    auto hp = small_hp();
    hp.actor_hidden = {};
    Td3Agent agent(1, 1, hp, 4);
    agent.set_networks(affine({0.0}, {0.0}, Activation::tanh), agent.critic1(), agent.critic2());
    Rng rng(6);
    const std::vector<double> s{0.0};
    double sum = 0.0, sum_sq = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const double a = agent.select_action(s, ActionMode::train, rng)[0];
        sum += a;
        sum_sq += a * a;
    }
    CHECK(std::abs(sum / draws) < 0.002);
    CHECK(std::sqrt(sum_sq / draws) == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("targets and actor move only on delayed steps") {
    Td3Agent agent(2, 2, small_hp(), 9);
    Rng rng(4);
    auto buf = filled_buffer(32, 2, 2, rng);
    const auto t_critic = agent.target_critic1().layers[0].weights;
    const auto t_actor = agent.target_actor().layers[0].weights;
    const auto actor = agent.actor().layers[0].weights;
    const auto critic = agent.critic1().layers[0].weights;
    const auto t_critic2 = agent.target_critic2().layers[0].weights;

    auto stats = agent.train_step(buf.sample(4, rng));
    CHECK_FALSE(stats.actor_loss.has_value());
    CHECK(agent.train_calls() == 1);
    CHECK(agent.target_critic1().layers[0].weights == t_critic);
    CHECK(agent.target_actor().layers[0].weights == t_actor);
    CHECK(agent.actor().layers[0].weights == actor);
    CHECK(agent.critic1().layers[0].weights != critic);

    stats = agent.train_step(buf.sample(4, rng));
    CHECK(stats.actor_loss.has_value());
    CHECK(agent.target_critic1().layers[0].weights != t_critic);
    CHECK(agent.target_actor().layers[0].weights != t_actor);
    CHECK(agent.actor().layers[0].weights != actor);

    // After one blend each target sits tau of the way towards its online net.
    const auto& online = agent.critic2().layers[0].weights;
    const auto& target = agent.target_critic2().layers[0].weights;
    for (std::size_t i = 0; i < target.size(); ++i) {
        CHECK(target[i] == doctest::Approx(0.005 * online[i] + 0.995 * t_critic2[i]).epsilon(1e-12));
    }
}

TEST_CASE("critic regression lowers the loss on a fixed batch") {
    auto hp = small_hp();
    hp.critic_lr = 1e-3;
    hp.gamma = 0.0;
    Td3Agent agent(2, 1, hp, 2);
    Rng rng(5);
    auto buf = filled_buffer(16, 2, 1, rng);
    const auto batch = buf.sample(16, rng);
    const double first = agent.train_step(batch).critic_loss();
    double last = first;
    for (int i = 0; i < 200; ++i) last = agent.train_step(batch).critic_loss();
    CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Rng r1(3), r2(3);
    auto b1 = filled_buffer(32, 2, 2, r1);
    auto b2 = filled_buffer(32, 2, 2, r2);
    Td3Agent a1(2, 2, small_hp(), 11), a2(2, 2, small_hp(), 11);
    for (int i = 0; i < 10; ++i) {
        a1.train_step(b1.sample(4, r1));
        a2.train_step(b2.sample(4, r2));
    }
    CHECK(a1.actor().layers[0].weights == a2.actor().layers[0].weights);
    CHECK(a1.target_critic2().layers[1].weights == a2.target_critic2().layers[1].weights);
}

TEST_CASE("checkpoints restore the exact agent state") {
    Rng rng(3);
    auto buf = filled_buffer(32, 2, 2, rng);
    Td3Agent a(2, 2, small_hp(), 11);
    for (int i = 0; i < 3; ++i) a.train_step(buf.sample(4, rng));
    Td3Agent b(2, 2, small_hp(), 99);
    b.restore(nlohmann::json::parse(a.checkpoint().dump()));
    CHECK(b.train_calls() == a.train_calls());
    CHECK(b.actor().layers[1].weights == a.actor().layers[1].weights);
    CHECK(b.target_critic1().layers[0].bias == a.target_critic1().layers[0].bias);
    const auto batch = buf.sample(4, rng);
    const auto sa = a.train_step(batch);
    const auto sb = b.train_step(batch);
    CHECK(sa.critic1_loss == sb.critic1_loss);
}

TEST_CASE("invalid hyperparameters are rejected") {
    auto hp = small_hp();
    hp.policy_delay = 0;
    CHECK_THROWS_AS(Td3Agent(2, 2, hp, 1), std::invalid_argument);
    CHECK_THROWS_AS(Td3Agent(0, 2, small_hp(), 1), std::invalid_argument);
    Td3Agent agent(2, 2, small_hp(), 1);
    CHECK_THROWS_AS(agent.set_networks(mlp_init({{3, 2}}, 1), agent.critic1(), agent.critic2()), ShapeError);
}

}
