#include "cnalloc/td3.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cnalloc {

void Td3Hyperparams::validate() const {
    if (!(critic_lr > 0.0) || !(actor_lr > 0.0) || !(tau > 0.0 && tau <= 1.0) || noise_sigma < 0.0 ||
        target_noise_clip < 0.0) {
        throw std::invalid_argument("td3: learning rates and tau must be positive, noise non-negative");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("td3: gamma must lie in [0, 1)");
    }
    if (policy_delay == 0 || batch_size == 0 || buffer_capacity == 0) {
        throw std::invalid_argument("td3: policy_delay, batch_size and buffer_capacity must be positive");
    }
    if (exploration_steps >= total_steps) {
        throw std::invalid_argument("td3: exploration_steps must be smaller than total_steps");
    }
}

void to_json(nlohmann::json& j, const Td3Hyperparams& hp) {
    j = {{"critic_lr", hp.critic_lr},
         {"actor_lr", hp.actor_lr},
         {"noise_sigma", hp.noise_sigma},
         {"target_noise_clip", hp.target_noise_clip},
         {"gamma", hp.gamma},
         {"tau", hp.tau},
         {"policy_delay", hp.policy_delay},
         {"batch_size", hp.batch_size},
         {"exploration_steps", hp.exploration_steps},
         {"total_steps", hp.total_steps},
         {"buffer_capacity", hp.buffer_capacity},
         {"actor_hidden", hp.actor_hidden},
         {"critic_hidden", hp.critic_hidden}};
}

void from_json(const nlohmann::json& j, Td3Hyperparams& hp) {
    hp.critic_lr = j.value("critic_lr", hp.critic_lr);
    hp.actor_lr = j.value("actor_lr", hp.actor_lr);
    hp.noise_sigma = j.value("noise_sigma", hp.noise_sigma);
    hp.target_noise_clip = j.value("target_noise_clip", hp.target_noise_clip);
    hp.gamma = j.value("gamma", hp.gamma);
    hp.tau = j.value("tau", hp.tau);
    hp.policy_delay = j.value("policy_delay", hp.policy_delay);
    hp.batch_size = j.value("batch_size", hp.batch_size);
    hp.exploration_steps = j.value("exploration_steps", hp.exploration_steps);
    hp.total_steps = j.value("total_steps", hp.total_steps);
    hp.buffer_capacity = j.value("buffer_capacity", hp.buffer_capacity);
    hp.actor_hidden = j.value("actor_hidden", hp.actor_hidden);
    hp.critic_hidden = j.value("critic_hidden", hp.critic_hidden);
}

namespace {

std::vector<std::size_t> layout(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

void require_same(const NetworkParameters& a, const NetworkParameters& b, const char* what) {
    if (!a.same_architecture(b)) {
        throw ShapeError(std::string("td3: replacement ") + what + " has a different architecture");
    }
}

}  // namespace

Td3Agent::Td3Agent(std::size_t state_dim, std::size_t action_dim, Td3Hyperparams hp, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), hp_(std::move(hp)) {
    hp_.validate();
    if (state_dim == 0 || action_dim == 0) {
        throw std::invalid_argument("td3: state and action dimensions must be positive");
    }
    Rng seeds = make_stream(seed, Stream::agent_init);
    actor_ = mlp_init({layout(state_dim, hp_.actor_hidden, action_dim), Activation::relu, Activation::tanh}, seeds());
    const auto critic_sizes = layout(state_dim + action_dim, hp_.critic_hidden, 1);
    critic1_ = mlp_init({critic_sizes, Activation::relu, Activation::linear}, seeds());
    critic2_ = mlp_init({critic_sizes, Activation::relu, Activation::linear}, seeds());
    target_actor_ = actor_;
    target_critic1_ = critic1_;
    target_critic2_ = critic2_;
    actor_opt_ = AdamState::for_network(actor_, hp_.actor_lr);
    critic1_opt_ = AdamState::for_network(critic1_, hp_.critic_lr);
    critic2_opt_ = AdamState::for_network(critic2_, hp_.critic_lr);
    noise_rng_ = make_stream(seed, Stream::agent_noise);
    grad_actor_ = Gradients::zeros_like(actor_);
    grad_c1_ = Gradients::zeros_like(critic1_);
    grad_c2_ = Gradients::zeros_like(critic2_);
}

std::vector<double> Td3Agent::critic_input(std::span<const double> state, std::span<const double> action) const {
    std::vector<double> input;
    input.reserve(state.size() + action.size());
    input.insert(input.end(), state.begin(), state.end());
    input.insert(input.end(), action.begin(), action.end());
    return input;
}

std::vector<double> Td3Agent::select_action(std::span<const double> state, ActionMode mode, Rng& rng) const {
    if (state.size() != state_dim_) {
        throw ShapeError("td3: state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_dim_));
    }
    if (mode == ActionMode::explore) {
        std::uniform_real_distribution<double> uniform(-1.0, 1.0);
        std::vector<double> action(action_dim_);
        for (double& a : action) a = uniform(rng);
        return action;
    }
    std::vector<double> action = mlp_predict(actor_, state);
    if (mode == ActionMode::train && hp_.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, hp_.noise_sigma);
        for (double& a : action) a += noise(rng);
    }
    for (double& a : action) a = std::clamp(a, -1.0, 1.0);
    return action;
}

std::vector<double> Td3Agent::draw_smoothing_noise() {
    std::vector<double> eps(action_dim_, 0.0);
    if (hp_.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, hp_.noise_sigma);
        for (double& e : eps) e = std::clamp(noise(noise_rng_), -hp_.target_noise_clip, hp_.target_noise_clip);
    }
    return eps;
}

std::vector<double> Td3Agent::target_values(const ReplayBuffer<std::vector<double>>::Batch& batch,
                                            const std::vector<std::vector<double>>& smoothing_noise) const {
    if (smoothing_noise.size() != batch.size()) {
        throw ShapeError("td3: one smoothing-noise vector per batch element is required");
    }
    const std::size_t n = batch.size();
    thread_local BatchCache actor_pass, critic_pass;
    thread_local std::vector<double> rows;
    rows.clear();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& next = batch[i].get().next_state;
        rows.insert(rows.end(), next.begin(), next.end());
    }
    mlp_forward_batch(target_actor_, rows, n, actor_pass);
    std::vector<double> inputs;
    inputs.reserve(n * (state_dim_ + action_dim_));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& next = batch[i].get().next_state;
        inputs.insert(inputs.end(), next.begin(), next.end());
        const auto a = actor_pass.output(i);
        for (std::size_t k = 0; k < action_dim_; ++k) {
            inputs.push_back(std::clamp(a[k] + smoothing_noise[i].at(k), -1.0, 1.0));
        }
    }
    std::vector<double> q1(n), q2(n);
    mlp_forward_batch(target_critic1_, inputs, n, critic_pass);
    for (std::size_t i = 0; i < n; ++i) q1[i] = critic_pass.output(i)[0];
    mlp_forward_batch(target_critic2_, inputs, n, critic_pass);
    for (std::size_t i = 0; i < n; ++i) q2[i] = critic_pass.output(i)[0];
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = batch[i].get().reward + hp_.gamma * std::min(q1[i], q2[i]);
    }
    return y;
}

Td3TrainStats Td3Agent::train_step(const ReplayBuffer<std::vector<double>>::Batch& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("td3: empty training batch");
    }
    const std::size_t n = batch.size();
    std::vector<std::vector<double>> noise(n);
    for (auto& e : noise) e = draw_smoothing_noise();
    const std::vector<double> y = target_values(batch, noise);

    std::vector<double> inputs;
    inputs.reserve(n * (state_dim_ + action_dim_));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = batch[i].get();
        const auto row = critic_input(t.state, t.action);
        inputs.insert(inputs.end(), row.begin(), row.end());
    }

    Td3TrainStats stats;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> out_grad(n);
    auto regress = [&](NetworkParameters& critic, AdamState& opt, Gradients& grads) {
        grads.set_zero();
        mlp_forward_batch(critic, inputs, n, critic_cache_);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = critic_cache_.output(i)[0] - y[i];
            loss += diff * diff;
            out_grad[i] = 2.0 * diff * inv_n;
        }
        loss *= inv_n;
        if (!std::isfinite(loss)) {
            throw NonFiniteError("td3: critic loss is not finite at train call " + std::to_string(train_calls_ + 1));
        }
        mlp_accumulate_gradients_batch(critic, critic_cache_, out_grad, grads);
        adam_step(critic, grads, opt);
        return loss;
    };
    stats.critic1_loss = regress(critic1_, critic1_opt_, grad_c1_);
    stats.critic2_loss = regress(critic2_, critic2_opt_, grad_c2_);

    ++train_calls_;
    if (train_calls_ % hp_.policy_delay == 0) {
        double actor_loss = 0.0;
        update_actor(batch, actor_loss);
        stats.actor_loss = actor_loss;
        soft_update(target_critic1_, critic1_, hp_.tau);
        soft_update(target_critic2_, critic2_, hp_.tau);
        soft_update(target_actor_, actor_, hp_.tau);
    }
    return stats;
}

void Td3Agent::update_actor(const ReplayBuffer<std::vector<double>>::Batch& batch, double& actor_loss) {
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> states;
    states.reserve(n * state_dim_);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = batch[i].get().state;
        states.insert(states.end(), s.begin(), s.end());
    }
    mlp_forward_batch(actor_, states, n, actor_cache_);
    std::vector<double> inputs;
    inputs.reserve(n * (state_dim_ + action_dim_));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = critic_input(batch[i].get().state, actor_cache_.output(i));
        inputs.insert(inputs.end(), row.begin(), row.end());
    }
    mlp_forward_batch(critic1_, inputs, n, critic_cache_);
    actor_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) actor_loss -= critic_cache_.output(i)[0] * inv_n;
    if (!std::isfinite(actor_loss)) {
        throw NonFiniteError("td3: actor loss is not finite at train call " + std::to_string(train_calls_));
    }

    // d(actor loss)/dQ is -1/N per element; only the action slice of the
    // critic's input gradient feeds the actor.
    const std::vector<double> dq(n, -inv_n);
    grad_c1_.set_zero();
    std::vector<double> input_grad;
    mlp_accumulate_gradients_batch(critic1_, critic_cache_, dq, grad_c1_, &input_grad);
    std::vector<double> action_grad(n * action_dim_);
    const std::size_t width = state_dim_ + action_dim_;
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(input_grad.begin() + static_cast<std::ptrdiff_t>(i * width + state_dim_), action_dim_,
                    action_grad.begin() + static_cast<std::ptrdiff_t>(i * action_dim_));
    }
    grad_actor_.set_zero();
    mlp_accumulate_gradients_batch(actor_, actor_cache_, action_grad, grad_actor_);
    adam_step(actor_, grad_actor_, actor_opt_);
}

void Td3Agent::set_networks(NetworkParameters actor, NetworkParameters critic1, NetworkParameters critic2) {
    require_same(actor, actor_, "actor");
    require_same(critic1, critic1_, "critic1");
    require_same(critic2, critic2_, "critic2");
    actor_ = std::move(actor);
    critic1_ = std::move(critic1);
    critic2_ = std::move(critic2);
}

void Td3Agent::set_targets(NetworkParameters actor, NetworkParameters critic1, NetworkParameters critic2) {
    require_same(actor, target_actor_, "target actor");
    require_same(critic1, target_critic1_, "target critic1");
    require_same(critic2, target_critic2_, "target critic2");
    target_actor_ = std::move(actor);
    target_critic1_ = std::move(critic1);
    target_critic2_ = std::move(critic2);
}

nlohmann::json Td3Agent::checkpoint() const {
    return {{"format", "cnalloc.td3/1"},
            {"state_dim", state_dim_},
            {"action_dim", action_dim_},
            {"hyperparams", hp_},
            {"train_calls", train_calls_},
            {"actor", to_json(actor_)},
            {"critic1", to_json(critic1_)},
            {"critic2", to_json(critic2_)},
            {"target_actor", to_json(target_actor_)},
            {"target_critic1", to_json(target_critic1_)},
            {"target_critic2", to_json(target_critic2_)},
            {"actor_optimizer", to_json(actor_opt_)},
            {"critic1_optimizer", to_json(critic1_opt_)},
            {"critic2_optimizer", to_json(critic2_opt_)},
            {"noise_rng", (std::ostringstream{} << noise_rng_).str()}};
}

void Td3Agent::restore(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "cnalloc.td3/1" || j.at("state_dim").get<std::size_t>() != state_dim_ ||
        j.at("action_dim").get<std::size_t>() != action_dim_) {
        throw ShapeError("td3: checkpoint does not match this agent");
    }
    set_networks(network_from_json(j.at("actor")), network_from_json(j.at("critic1")),
                 network_from_json(j.at("critic2")));
    set_targets(network_from_json(j.at("target_actor")), network_from_json(j.at("target_critic1")),
                network_from_json(j.at("target_critic2")));
    actor_opt_ = adam_state_from_json(j.at("actor_optimizer"), actor_);
    critic1_opt_ = adam_state_from_json(j.at("critic1_optimizer"), critic1_);
    critic2_opt_ = adam_state_from_json(j.at("critic2_optimizer"), critic2_);
    train_calls_ = j.at("train_calls").get<std::uint64_t>();
    if (j.contains("noise_rng")) {
        std::istringstream in(j.at("noise_rng").get<std::string>());
        in >> noise_rng_;
    }
}

}  // namespace cnalloc
