#include "cnalloc/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace cnalloc {

void DqnHyperparams::validate() const {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("dqn: learning rate must be positive");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("dqn: gamma must lie in [0, 1)");
    }
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw std::invalid_argument("dqn: epsilon must lie in [0, 1]");
    }
    if (target_sync_period == 0 || batch_size == 0 || buffer_capacity == 0) {
        throw std::invalid_argument("dqn: sync period, batch size and buffer capacity must be positive");
    }
    if (exploration_steps >= total_steps) {
        throw std::invalid_argument("dqn: exploration_steps must be smaller than total_steps");
    }
}

void to_json(nlohmann::json& j, const DqnHyperparams& hp) {
    j = {{"learning_rate", hp.learning_rate},
         {"gamma", hp.gamma},
         {"epsilon", hp.epsilon},
         {"target_sync_period", hp.target_sync_period},
         {"batch_size", hp.batch_size},
         {"exploration_steps", hp.exploration_steps},
         {"total_steps", hp.total_steps},
         {"buffer_capacity", hp.buffer_capacity},
         {"hidden", hp.hidden}};
}

void from_json(const nlohmann::json& j, DqnHyperparams& hp) {
    hp.learning_rate = j.value("learning_rate", hp.learning_rate);
    hp.gamma = j.value("gamma", hp.gamma);
    hp.epsilon = j.value("epsilon", hp.epsilon);
    hp.target_sync_period = j.value("target_sync_period", hp.target_sync_period);
    hp.batch_size = j.value("batch_size", hp.batch_size);
    hp.exploration_steps = j.value("exploration_steps", hp.exploration_steps);
    hp.total_steps = j.value("total_steps", hp.total_steps);
    hp.buffer_capacity = j.value("buffer_capacity", hp.buffer_capacity);
    hp.hidden = j.value("hidden", hp.hidden);
}

std::size_t argmin_index(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmin_index: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] < values[best]) {
            best = i;
        }
    }
    return best;
}

DqnAgent::DqnAgent(std::size_t state_dim, std::size_t action_count, DqnHyperparams hp, std::uint64_t seed)
    : state_dim_(state_dim), action_count_(action_count), hp_(std::move(hp)) {
    hp_.validate();
    if (state_dim == 0 || action_count == 0) {
        throw std::invalid_argument("dqn: state width and action count must be positive");
    }
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), hp_.hidden.begin(), hp_.hidden.end());
    sizes.push_back(action_count);
    Rng seeds = make_stream(seed, Stream::agent_init);
    online_ = mlp_init({sizes, Activation::relu, Activation::linear}, seeds());
    target_ = online_;
    optimizer_ = AdamState::for_network(online_, hp_.learning_rate);
    grads_ = Gradients::zeros_like(online_);
}

void DqnAgent::set_epsilon(double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw std::invalid_argument("dqn: epsilon must lie in [0, 1]");
    }
    hp_.epsilon = epsilon;
}

std::vector<double> DqnAgent::q_values(std::span<const double> state) const {
    if (state.size() != state_dim_) {
        throw ShapeError("dqn: state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_dim_));
    }
    return mlp_predict(online_, state);
}

std::vector<double> DqnAgent::target_q_values(std::span<const double> state) const {
    if (state.size() != state_dim_) {
        throw ShapeError("dqn: state width mismatch");
    }
    return mlp_predict(target_, state);
}

std::size_t DqnAgent::select_action(std::span<const double> state, DqnPhase phase, Rng& rng) const {
    if (state.size() != state_dim_) {
        throw ShapeError("dqn: state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_dim_));
    }
    std::uniform_int_distribution<std::size_t> uniform(0, action_count_ - 1);
    if (phase == DqnPhase::explore) {
        return uniform(rng);
    }
    if (phase == DqnPhase::train) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < hp_.epsilon) {
            return uniform(rng);
        }
    }
    return argmin_index(q_values(state));
}

std::vector<double> DqnAgent::target_values(const ReplayBuffer<std::size_t>::Batch& batch) const {
    const std::size_t n = batch.size();
    thread_local BatchCache pass;
    std::vector<double> rows;
    rows.reserve(n * state_dim_);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = batch[i].get().next_state;
        rows.insert(rows.end(), s.begin(), s.end());
    }
    std::vector<double> y(n);
    if (n == 0) {
        return y;
    }
    mlp_forward_batch(target_, rows, n, pass);
    for (std::size_t i = 0; i < n; ++i) {
        const auto q_next = pass.output(i);
        y[i] = batch[i].get().reward + hp_.gamma * *std::min_element(q_next.begin(), q_next.end());
    }
    return y;
}

double DqnAgent::train_step(const ReplayBuffer<std::size_t>::Batch& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("dqn: empty training batch");
    }
    const std::size_t n = batch.size();
    const std::vector<double> y = target_values(batch);
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> rows;
    rows.reserve(n * state_dim_);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = batch[i].get();
        if (t.action >= action_count_) {
            throw ShapeError("dqn: action index out of range in batch");
        }
        rows.insert(rows.end(), t.state.begin(), t.state.end());
    }
    mlp_forward_batch(online_, rows, n, cache_);
    std::vector<double> out_grad(n * action_count_, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = batch[i].get().action;
        const double diff = cache_.output(i)[a] - y[i];
        loss += diff * diff;
        out_grad[i * action_count_ + a] = 2.0 * diff * inv_n;
    }
    loss *= inv_n;
    if (!std::isfinite(loss)) {
        throw NonFiniteError("dqn: loss is not finite after " + std::to_string(optimizer_.step_count) +
                             " optimizer steps");
    }
    grads_.set_zero();
    mlp_accumulate_gradients_batch(online_, cache_, out_grad, grads_);
    adam_step(online_, grads_, optimizer_);
    return loss;
}

void DqnAgent::sync_target() { soft_update(target_, online_, 1.0); }

void DqnAgent::set_online(NetworkParameters params) {
    if (!params.same_architecture(online_)) {
        throw ShapeError("dqn: replacement Q-network has a different architecture");
    }
    online_ = std::move(params);
}

void DqnAgent::set_target(NetworkParameters params) {
    if (!params.same_architecture(target_)) {
        throw ShapeError("dqn: replacement target network has a different architecture");
    }
    target_ = std::move(params);
}

nlohmann::json DqnAgent::checkpoint() const {
    return {{"format", "cnalloc.dqn/1"},
            {"state_dim", state_dim_},
            {"action_count", action_count_},
            {"hyperparams", hp_},
            {"online", to_json(online_)},
            {"target", to_json(target_)},
            {"optimizer", to_json(optimizer_)}};
}

void DqnAgent::restore(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "cnalloc.dqn/1" || j.at("state_dim").get<std::size_t>() != state_dim_ ||
        j.at("action_count").get<std::size_t>() != action_count_) {
        throw ShapeError("dqn: checkpoint does not match this agent");
    }
    set_online(network_from_json(j.at("online")));
    set_target(network_from_json(j.at("target")));
    optimizer_ = adam_state_from_json(j.at("optimizer"), online_);
}

}  // namespace cnalloc
