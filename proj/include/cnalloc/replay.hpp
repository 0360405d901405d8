#pragma once

// Bounded FIFO experience store with uniform sampling (with replacement).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "cnalloc/random.hpp"

namespace cnalloc {

/// Continuous actions for TD3, a joint-action index for DQN.
template <typename Action>
struct Transition {
    std::vector<double> state;
    Action action{};
    double reward = 0.0;
    std::vector<double> next_state;
};

using ContinuousTransition = Transition<std::vector<double>>;
using DiscreteTransition = Transition<std::size_t>;

template <typename Action>
class ReplayBuffer {
public:
    using value_type = Transition<Action>;
    using Batch = std::vector<std::reference_wrapper<const value_type>>;

    /// action_dim is the action vector width for continuous actions and the
    /// number of discrete actions otherwise.
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
        : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
        if (capacity == 0) {
            throw std::invalid_argument("ReplayBuffer: capacity must be positive");
        }
        items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
    }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return items_.empty(); }
    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t action_dim() const noexcept { return action_dim_; }

    /// i = 0 is the oldest stored transition.
    const value_type& at(std::size_t i) const {
        if (i >= items_.size()) {
            throw std::out_of_range("ReplayBuffer::at");
        }
        return items_[(head_ + i) % items_.size()];
    }

    void push(value_type transition) {
        validate(transition);
        if (items_.size() < capacity_) {
            items_.push_back(std::move(transition));
            return;
        }
        items_[head_] = std::move(transition);
        head_ = (head_ + 1) % capacity_;
    }

    /// n uniform draws with replacement; n may exceed size(). Throws on an empty buffer.
    Batch sample(std::size_t n, Rng& rng) const {
        if (items_.empty()) {
            throw std::logic_error("ReplayBuffer::sample: buffer is empty");
        }
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        Batch batch;
        batch.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            batch.emplace_back(items_[pick(rng)]);
        }
        return batch;
    }

private:
    void validate(const value_type& t) const {
        if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_) {
            throw std::invalid_argument("ReplayBuffer::push: state width mismatch");
        }
        if constexpr (std::is_same_v<Action, std::size_t>) {
            if (t.action >= action_dim_) {
                throw std::invalid_argument("ReplayBuffer::push: action index out of range");
            }
        } else {
            if (t.action.size() != action_dim_) {
                throw std::invalid_argument("ReplayBuffer::push: action width mismatch");
            }
        }
        if (!std::isfinite(t.reward)) {
            throw std::invalid_argument("ReplayBuffer::push: reward is not finite");
        }
    }

    std::size_t capacity_;
    std::size_t state_dim_;
    std::size_t action_dim_;
    std::size_t head_ = 0;  // oldest slot once the ring is full
    std::vector<value_type> items_;
};

}  // namespace cnalloc
