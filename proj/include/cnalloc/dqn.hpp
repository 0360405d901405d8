#pragma once

// Centralized Q-network over a discrete joint-action space with cost
// semantics: the greedy action is the one with the *smallest* Q value and the
// bootstrap target uses the minimum over actions.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "cnalloc/numerics.hpp"
#include "cnalloc/random.hpp"
#include "cnalloc/replay.hpp"

namespace cnalloc {

struct DqnHyperparams {
    double learning_rate = 1e-3;
    double gamma = 0.99;
    double epsilon = 0.1;
    std::size_t target_sync_period = 100;
    std::size_t batch_size = 64;
    std::size_t exploration_steps = 500;
    std::size_t total_steps = 5000;
    std::size_t buffer_capacity = 10000;
    std::vector<std::size_t> hidden{256, 256};

    void validate() const;
};

void to_json(nlohmann::json& j, const DqnHyperparams& hp);
void from_json(const nlohmann::json& j, DqnHyperparams& hp);

enum class DqnPhase {
    explore,  // uniform over all joint actions
    train,    // epsilon-greedy
    eval,     // pure argmin
};

/// Index of the smallest value; ties go to the lowest index.
std::size_t argmin_index(std::span<const double> values);

class DqnAgent {
public:
    DqnAgent(std::size_t state_dim, std::size_t action_count, DqnHyperparams hp, std::uint64_t seed);

    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t action_count() const noexcept { return action_count_; }
    const DqnHyperparams& hyperparams() const noexcept { return hp_; }
    void set_epsilon(double epsilon);

    std::size_t select_action(std::span<const double> state, DqnPhase phase, Rng& rng) const;

    std::vector<double> q_values(std::span<const double> state) const;
    std::vector<double> target_q_values(std::span<const double> state) const;

    /// y = r + gamma * min_a Q'(s', a) for each element; reads only the target network.
    std::vector<double> target_values(const ReplayBuffer<std::size_t>::Batch& batch) const;

    /// Squared TD error on the taken action, averaged over the batch, then one
    /// optimizer step. Returns the pre-update loss.
    double train_step(const ReplayBuffer<std::size_t>::Batch& batch);

    void sync_target();

    const NetworkParameters& online() const noexcept { return online_; }
    const NetworkParameters& target() const noexcept { return target_; }
    void set_online(NetworkParameters params);
    void set_target(NetworkParameters params);

    nlohmann::json checkpoint() const;
    void restore(const nlohmann::json& j);

private:
    std::size_t state_dim_;
    std::size_t action_count_;
    DqnHyperparams hp_;
    NetworkParameters online_;
    NetworkParameters target_;
    AdamState optimizer_;
    BatchCache cache_;
    Gradients grads_;
};

}  // namespace cnalloc
