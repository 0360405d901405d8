#pragma once

// Fully-connected networks with analytic gradients, an adaptive-moment
// optimizer and target-network blending. Double precision throughout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cnalloc {

/// Raised on shape mismatches between networks, caches, gradients and inputs.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a gradient, loss or parameter stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Activation {
    linear,
    relu,
    tanh,  // bounded-symmetric output in [-1, 1]
};

std::string_view to_string(Activation activation) noexcept;
Activation activation_from_string(std::string_view name);

/// One affine layer followed by a pointwise nonlinearity.
/// Weights are row-major with shape (out x in).
struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::linear;

    std::span<const double> row(std::size_t o) const { return {weights.data() + o * inputs, inputs}; }
    std::span<double> row(std::size_t o) { return {weights.data() + o * inputs, inputs}; }
};

struct NetworkParameters {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseLayer> layers;
    // Bumped on every in-place modification; activation caches remember it.
    std::uint64_t revision = 0;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;
    bool same_architecture(const NetworkParameters& other) const;
    bool all_finite() const;
};

/// Architecture description consumed by mlp_init.
struct NetworkSpec {
    std::vector<std::size_t> layer_sizes;
    Activation hidden = Activation::relu;
    Activation output = Activation::linear;
};

/// Everything mlp_gradients needs from a forward pass.
struct ActivationCache {
    std::vector<std::vector<double>> layer_inputs;  // input fed to each layer
    std::vector<std::vector<double>> outputs;       // post-activation output of each layer
    std::uint64_t revision = 0;
    const NetworkParameters* source = nullptr;

    std::span<const double> output() const { return outputs.back(); }
};

/// Gradients shaped like a NetworkParameters, plus the input gradient.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
    std::vector<double> input;

    static Gradients zeros_like(const NetworkParameters& params);
    void set_zero();
    void scale(double factor);
    bool all_finite() const;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
NetworkParameters mlp_init(const NetworkSpec& spec, std::uint64_t seed);

void mlp_forward(const NetworkParameters& params, std::span<const double> input, ActivationCache& cache);
ActivationCache mlp_forward(const NetworkParameters& params, std::span<const double> input);

/// Output only; no cache retained.
std::vector<double> mlp_predict(const NetworkParameters& params, std::span<const double> input);

/// Adds d(output . output_gradient)/d(theta) into `grads`. The input gradient
/// is overwritten (not accumulated) and only computed when want_input is set.
void mlp_accumulate_gradients(const NetworkParameters& params, const ActivationCache& cache,
                              std::span<const double> output_gradient, Gradients& grads, bool want_input = true);

Gradients mlp_gradients(const NetworkParameters& params, const ActivationCache& cache,
                        std::span<const double> output_gradient);

/// Forward pass over a batch; every matrix is row-major with one row per sample.
struct BatchCache {
    std::size_t batch = 0;
    std::vector<double> input;                // batch x layer_sizes[0]
    std::vector<std::vector<double>> outputs;  // per layer: batch x layer width
    std::uint64_t revision = 0;
    const NetworkParameters* source = nullptr;

    std::span<const double> output(std::size_t b) const;
};

void mlp_forward_batch(const NetworkParameters& params, std::span<const double> inputs, std::size_t batch,
                       BatchCache& cache);

/// Adds the batch-summed parameter gradients for `output_gradients`
/// (batch x outputs) into `grads`. When `input_gradients` is given it is
/// overwritten with the batch x inputs gradient.
void mlp_accumulate_gradients_batch(const NetworkParameters& params, const BatchCache& cache,
                                    std::span<const double> output_gradients, Gradients& grads,
                                    std::vector<double>* input_gradients = nullptr);

struct AdamState {
    std::uint64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Gradients first_moment;
    Gradients second_moment;

    static AdamState for_network(const NetworkParameters& params, double learning_rate);
};

/// One bias-corrected adaptive-moment update. Throws NonFiniteError before
/// touching anything if a gradient entry is NaN or infinite.
void adam_step(NetworkParameters& params, const Gradients& grads, AdamState& state);

/// target = tau * online + (1 - tau) * target, elementwise.
void soft_update(NetworkParameters& target, const NetworkParameters& online, double tau);

// Checkpoint layout:
//   {"format": "cnalloc.mlp/1", "layer_sizes": [...], "activations": [...],
//    "entries": [{"layer": l, "kind": "weight"|"bias", "rows": r, "cols": c, "values": [...]}, ...]}
// Values are row-major. Optimizer snapshots use the same entry list for each moment.
nlohmann::json to_json(const NetworkParameters& params);
NetworkParameters network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_state_from_json(const nlohmann::json& j, const NetworkParameters& params);

}  // namespace cnalloc
