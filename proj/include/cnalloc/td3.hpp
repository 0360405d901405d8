#pragma once

// Twin-critic, delayed-actor deterministic policy gradient agent producing
// continuous actions in [-1, 1]^n.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cnalloc/numerics.hpp"
#include "cnalloc/random.hpp"
#include "cnalloc/replay.hpp"

namespace cnalloc {

struct Td3Hyperparams {
    double critic_lr = 1e-4;
    double actor_lr = 2e-4;
    double noise_sigma = 0.1;         // exploration and target-smoothing std-dev
    double target_noise_clip = 0.5;   // |smoothing noise| bound before the action clip
    double gamma = 0.99;
    double tau = 0.005;               // soft target blend rate
    std::size_t policy_delay = 2;
    std::size_t batch_size = 64;
    std::size_t exploration_steps = 40;
    std::size_t total_steps = 8000;
    std::size_t buffer_capacity = 100000;
    std::vector<std::size_t> actor_hidden{256, 256, 256};
    std::vector<std::size_t> critic_hidden{256, 256};

    void validate() const;
};

void to_json(nlohmann::json& j, const Td3Hyperparams& hp);
void from_json(const nlohmann::json& j, Td3Hyperparams& hp);

enum class ActionMode {
    explore,  // uniform in [-1, 1]^n
    train,    // actor output + Gaussian noise, clipped
    eval,     // actor output
};

struct Td3TrainStats {
    double critic1_loss = 0.0;
    double critic2_loss = 0.0;
    std::optional<double> actor_loss;  // set on delayed (policy) steps only

    double critic_loss() const { return 0.5 * (critic1_loss + critic2_loss); }
};

class Td3Agent {
public:
    Td3Agent(std::size_t state_dim, std::size_t action_dim, Td3Hyperparams hp, std::uint64_t seed);

    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t action_dim() const noexcept { return action_dim_; }
    const Td3Hyperparams& hyperparams() const noexcept { return hp_; }

    std::vector<double> select_action(std::span<const double> state, ActionMode mode, Rng& rng) const;

    /// One critic regression step on the batch; every policy_delay-th call
    /// also takes an actor step and soft-updates all three targets.
    Td3TrainStats train_step(const ReplayBuffer<std::vector<double>>::Batch& batch);

    /// Target values y = r + gamma * min_i Q'_i(s', a~) for a batch, using the
    /// supplied smoothing noise (one vector per element). Does not mutate.
    std::vector<double> target_values(const ReplayBuffer<std::vector<double>>::Batch& batch,
                                      const std::vector<std::vector<double>>& smoothing_noise) const;

    std::uint64_t train_calls() const noexcept { return train_calls_; }

    const NetworkParameters& actor() const noexcept { return actor_; }
    const NetworkParameters& critic1() const noexcept { return critic1_; }
    const NetworkParameters& critic2() const noexcept { return critic2_; }
    const NetworkParameters& target_actor() const noexcept { return target_actor_; }
    const NetworkParameters& target_critic1() const noexcept { return target_critic1_; }
    const NetworkParameters& target_critic2() const noexcept { return target_critic2_; }

    // Test and checkpoint hooks. Replacements must keep the architecture.
    void set_networks(NetworkParameters actor, NetworkParameters critic1, NetworkParameters critic2);
    void set_targets(NetworkParameters actor, NetworkParameters critic1, NetworkParameters critic2);

    nlohmann::json checkpoint() const;
    void restore(const nlohmann::json& j);

private:
    std::vector<double> critic_input(std::span<const double> state, std::span<const double> action) const;
    std::vector<double> draw_smoothing_noise();
    void update_actor(const ReplayBuffer<std::vector<double>>::Batch& batch, double& actor_loss);

    std::size_t state_dim_;
    std::size_t action_dim_;
    Td3Hyperparams hp_;
    NetworkParameters actor_, critic1_, critic2_;
    NetworkParameters target_actor_, target_critic1_, target_critic2_;
    AdamState actor_opt_, critic1_opt_, critic2_opt_;
    Rng noise_rng_;
    std::uint64_t train_calls_ = 0;

    // Scratch reused across train steps.
    BatchCache critic_cache_;
    BatchCache actor_cache_;
    Gradients grad_actor_, grad_c1_, grad_c2_;
};

}  // namespace cnalloc
