#include "cnalloc/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include "cnalloc/kernels.hpp"

namespace cnalloc {

namespace {

std::uint64_t next_revision() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu:
            return z > 0.0 ? z : 0.0;
        case Activation::tanh:
            return std::tanh(z);
        case Activation::linear:
            break;
    }
    return z;
}

// Derivative expressed through the activation output y = f(z).
double derivative_from_output(Activation a, double y) {
    switch (a) {
        case Activation::relu:
            return y > 0.0 ? 1.0 : 0.0;
        case Activation::tanh:
            return 1.0 - y * y;
        case Activation::linear:
            break;
    }
    return 1.0;
}

bool finite_all(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_shape(bool ok, const std::string& what) {
    if (!ok) {
        throw ShapeError(what);
    }
}

void check_gradient_shape(const NetworkParameters& params, const Gradients& grads) {
    require_shape(grads.weights.size() == params.layers.size() && grads.bias.size() == params.layers.size(),
                  "gradient layer count does not match network");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        require_shape(grads.weights[l].size() == params.layers[l].weights.size() &&
                          grads.bias[l].size() == params.layers[l].bias.size(),
                      "gradient shape mismatch at layer " + std::to_string(l));
    }
}

}  // namespace

std::string_view to_string(Activation activation) noexcept {
    switch (activation) {
        case Activation::linear:
            return "linear";
        case Activation::relu:
            return "relu";
        case Activation::tanh:
            return "tanh";
    }
    return "linear";
}

Activation activation_from_string(std::string_view name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::size_t NetworkParameters::parameter_count() const {
    std::size_t count = 0;
    for (const auto& layer : layers) {
        count += layer.weights.size() + layer.bias.size();
    }
    return count;
}

bool NetworkParameters::same_architecture(const NetworkParameters& other) const {
    if (layer_sizes != other.layer_sizes || layers.size() != other.layers.size()) {
        return false;
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].activation != other.layers[l].activation) {
            return false;
        }
    }
    return true;
}

bool NetworkParameters::all_finite() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const DenseLayer& l) { return finite_all(l.weights) && finite_all(l.bias); });
}

Gradients Gradients::zeros_like(const NetworkParameters& params) {
    Gradients g;
    g.weights.reserve(params.layers.size());
    g.bias.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        g.weights.emplace_back(layer.weights.size(), 0.0);
        g.bias.emplace_back(layer.bias.size(), 0.0);
    }
    g.input.assign(params.input_size(), 0.0);
    return g;
}

void Gradients::set_zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
    std::fill(input.begin(), input.end(), 0.0);
}

void Gradients::scale(double factor) {
    for (auto& w : weights)
        for (double& x : w) x *= factor;
    for (auto& b : bias)
        for (double& x : b) x *= factor;
    for (double& x : input) x *= factor;
}

bool Gradients::all_finite() const {
    return std::all_of(weights.begin(), weights.end(), [](const auto& w) { return finite_all(w); }) &&
           std::all_of(bias.begin(), bias.end(), [](const auto& b) { return finite_all(b); }) && finite_all(input);
}

NetworkParameters mlp_init(const NetworkSpec& spec, std::uint64_t seed) {
    if (spec.layer_sizes.size() < 2) {
        throw std::invalid_argument("mlp_init: need at least an input and an output layer size");
    }
    if (std::any_of(spec.layer_sizes.begin(), spec.layer_sizes.end(), [](std::size_t s) { return s == 0; })) {
        throw std::invalid_argument("mlp_init: layer sizes must be positive");
    }
    std::mt19937_64 rng(seed);
    NetworkParameters params;
    params.layer_sizes = spec.layer_sizes;
    params.revision = next_revision();
    const std::size_t n_layers = spec.layer_sizes.size() - 1;
    params.layers.reserve(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        DenseLayer layer;
        layer.inputs = spec.layer_sizes[l];
        layer.outputs = spec.layer_sizes[l + 1];
        layer.activation = (l + 1 == n_layers) ? spec.output : spec.hidden;
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
        std::uniform_real_distribution<double> dist(-bound, bound);
        layer.weights.resize(layer.inputs * layer.outputs);
        for (double& w : layer.weights) {
            w = dist(rng);
        }
        layer.bias.assign(layer.outputs, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

void mlp_forward(const NetworkParameters& params, std::span<const double> input, ActivationCache& cache) {
    if (input.size() != params.input_size()) {
        throw ShapeError("mlp_forward: input has " + std::to_string(input.size()) + " entries, network expects " +
                         std::to_string(params.input_size()));
    }
    const auto& k = kernels::active_table();
    const std::size_t n_layers = params.layers.size();
    cache.layer_inputs.resize(n_layers);
    cache.outputs.resize(n_layers);
    std::span<const double> x = input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const DenseLayer& layer = params.layers[l];
        cache.layer_inputs[l].assign(x.begin(), x.end());
        auto& out = cache.outputs[l];
        out.resize(layer.outputs);
        const double* w = layer.weights.data();
        const double* xin = cache.layer_inputs[l].data();
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            out[o] = activate(layer.activation, k.dot(w + o * layer.inputs, xin, layer.inputs) + layer.bias[o]);
        }
        x = out;
    }
    cache.revision = params.revision;
    cache.source = &params;
}

ActivationCache mlp_forward(const NetworkParameters& params, std::span<const double> input) {
    ActivationCache cache;
    mlp_forward(params, input, cache);
    return cache;
}

std::vector<double> mlp_predict(const NetworkParameters& params, std::span<const double> input) {
    thread_local ActivationCache scratch;
    mlp_forward(params, input, scratch);
    return scratch.outputs.back();
}

void mlp_accumulate_gradients(const NetworkParameters& params, const ActivationCache& cache,
                              std::span<const double> output_gradient, Gradients& grads, bool want_input) {
    const std::size_t n_layers = params.layers.size();
    if (cache.source != &params || cache.revision != params.revision || cache.outputs.size() != n_layers) {
        throw ShapeError("mlp_gradients: activation cache is stale or belongs to another network");
    }
    if (output_gradient.size() != params.output_size()) {
        throw ShapeError("mlp_gradients: output gradient has wrong length");
    }
    check_gradient_shape(params, grads);

    const auto& k = kernels::active_table();
    thread_local std::vector<double> delta;
    thread_local std::vector<double> upstream;
    upstream.assign(output_gradient.begin(), output_gradient.end());

    for (std::size_t li = n_layers; li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const auto& y = cache.outputs[li];
        const auto& x = cache.layer_inputs[li];
        delta.resize(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            delta[o] = upstream[o] * derivative_from_output(layer.activation, y[o]);
        }
        double* dw = grads.weights[li].data();
        double* db = grads.bias[li].data();
        const bool propagate = li > 0 || want_input;
        if (propagate) {
            upstream.assign(layer.inputs, 0.0);
        }
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = delta[o];
            if (d == 0.0) {
                continue;
            }
            k.axpy(d, x.data(), dw + o * layer.inputs, layer.inputs);
            db[o] += d;
            if (propagate) {
                k.axpy(d, layer.weights.data() + o * layer.inputs, upstream.data(), layer.inputs);
            }
        }
        if (!propagate) {
            break;
        }
    }
    if (want_input) {
        grads.input.assign(upstream.begin(), upstream.end());
    }
}

std::span<const double> BatchCache::output(std::size_t b) const {
    const auto& last = outputs.back();
    const std::size_t width = last.size() / batch;
    return {last.data() + b * width, width};
}

void mlp_forward_batch(const NetworkParameters& params, std::span<const double> inputs, std::size_t batch,
                       BatchCache& cache) {
    if (batch == 0 || inputs.size() != batch * params.input_size()) {
        throw ShapeError("mlp_forward_batch: expected " + std::to_string(batch) + " rows of " +
                         std::to_string(params.input_size()) + " inputs, got " + std::to_string(inputs.size()) +
                         " values");
    }
    const auto& k = kernels::active_table();
    const std::size_t n_layers = params.layers.size();
    cache.batch = batch;
    cache.input.assign(inputs.begin(), inputs.end());
    cache.outputs.resize(n_layers);
    const double* x = cache.input.data();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const DenseLayer& layer = params.layers[l];
        const std::size_t in = layer.inputs;
        const std::size_t out_w = layer.outputs;
        auto& y = cache.outputs[l];
        y.resize(batch * out_w);
        for (std::size_t o = 0; o < out_w; ++o) {
            const double* w = layer.weights.data() + o * in;
            std::size_t b = 0;
            for (; b + 4 <= batch; b += 4) {
                const double* rows[4] = {x + b * in, x + (b + 1) * in, x + (b + 2) * in, x + (b + 3) * in};
                double d[4];
                k.dot4(w, rows, in, d);
                for (std::size_t j = 0; j < 4; ++j) y[(b + j) * out_w + o] = d[j];
            }
            for (; b < batch; ++b) {
                y[b * out_w + o] = k.dot(w, x + b * in, in);
            }
        }
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < out_w; ++o) {
                double& v = y[b * out_w + o];
                v = activate(layer.activation, v + layer.bias[o]);
            }
        }
        x = y.data();
    }
    cache.revision = params.revision;
    cache.source = &params;
}

void mlp_accumulate_gradients_batch(const NetworkParameters& params, const BatchCache& cache,
                                    std::span<const double> output_gradients, Gradients& grads,
                                    std::vector<double>* input_gradients) {
    const std::size_t n_layers = params.layers.size();
    if (cache.source != &params || cache.revision != params.revision || cache.outputs.size() != n_layers) {
        throw ShapeError("mlp_gradients: activation cache is stale or belongs to another network");
    }
    const std::size_t batch = cache.batch;
    if (output_gradients.size() != batch * params.output_size()) {
        throw ShapeError("mlp_gradients: output gradient has wrong length");
    }
    check_gradient_shape(params, grads);

    const auto& k = kernels::active_table();
    thread_local std::vector<double> delta;
    thread_local std::vector<double> upstream;
    thread_local std::vector<std::size_t> active;
    upstream.assign(output_gradients.begin(), output_gradients.end());

    for (std::size_t li = n_layers; li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const std::size_t in = layer.inputs;
        const std::size_t out_w = layer.outputs;
        const auto& y = cache.outputs[li];
        const double* x = li == 0 ? cache.input.data() : cache.outputs[li - 1].data();
        delta.resize(batch * out_w);
        for (std::size_t i = 0; i < batch * out_w; ++i) {
            delta[i] = upstream[i] * derivative_from_output(layer.activation, y[i]);
        }

        double* dw = grads.weights[li].data();
        double* db = grads.bias[li].data();
        for (std::size_t o = 0; o < out_w; ++o) {
            active.clear();
            for (std::size_t b = 0; b < batch; ++b) {
                const double d = delta[b * out_w + o];
                if (d != 0.0) {
                    active.push_back(b);
                    db[o] += d;
                }
            }
            double* row = dw + o * in;
            std::size_t a = 0;
            for (; a + 4 <= active.size(); a += 4) {
                const double alpha[4] = {delta[active[a] * out_w + o], delta[active[a + 1] * out_w + o],
                                         delta[active[a + 2] * out_w + o], delta[active[a + 3] * out_w + o]};
                const double* xs[4] = {x + active[a] * in, x + active[a + 1] * in, x + active[a + 2] * in,
                                       x + active[a + 3] * in};
                k.axpy4(alpha, xs, row, in);
            }
            for (; a < active.size(); ++a) {
                k.axpy(delta[active[a] * out_w + o], x + active[a] * in, row, in);
            }
        }

        const bool propagate = li > 0 || input_gradients != nullptr;
        if (!propagate) {
            break;
        }
        upstream.assign(batch * in, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            active.clear();
            for (std::size_t o = 0; o < out_w; ++o) {
                if (delta[b * out_w + o] != 0.0) active.push_back(o);
            }
            double* target = upstream.data() + b * in;
            const double* drow = delta.data() + b * out_w;
            std::size_t a = 0;
            for (; a + 4 <= active.size(); a += 4) {
                const double alpha[4] = {drow[active[a]], drow[active[a + 1]], drow[active[a + 2]],
                                         drow[active[a + 3]]};
                const double* ws[4] = {layer.weights.data() + active[a] * in, layer.weights.data() + active[a + 1] * in,
                                       layer.weights.data() + active[a + 2] * in,
                                       layer.weights.data() + active[a + 3] * in};
                k.axpy4(alpha, ws, target, in);
            }
            for (; a < active.size(); ++a) {
                k.axpy(drow[active[a]], layer.weights.data() + active[a] * in, target, in);
            }
        }
    }
    if (input_gradients != nullptr) {
        input_gradients->assign(upstream.begin(), upstream.end());
    }
}

Gradients mlp_gradients(const NetworkParameters& params, const ActivationCache& cache,
                        std::span<const double> output_gradient) {
    Gradients grads = Gradients::zeros_like(params);
    mlp_accumulate_gradients(params, cache, output_gradient, grads, true);
    return grads;
}

AdamState AdamState::for_network(const NetworkParameters& params, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("AdamState: learning rate must be positive");
    }
    AdamState state;
    state.learning_rate = learning_rate;
    state.first_moment = Gradients::zeros_like(params);
    state.second_moment = Gradients::zeros_like(params);
    state.first_moment.input.clear();
    state.second_moment.input.clear();
    return state;
}

void adam_step(NetworkParameters& params, const Gradients& grads, AdamState& state) {
    check_gradient_shape(params, grads);
    check_gradient_shape(params, state.first_moment);
    check_gradient_shape(params, state.second_moment);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (!finite_all(grads.weights[l]) || !finite_all(grads.bias[l])) {
            throw NonFiniteError("adam_step: non-finite gradient in layer " + std::to_string(l));
        }
    }
    ++state.step_count;
    kernels::AdamCoefficients c;
    c.learning_rate = state.learning_rate;
    c.beta1 = state.beta1;
    c.beta2 = state.beta2;
    c.epsilon = state.epsilon;
    const double t = static_cast<double>(state.step_count);
    c.bias_correction1 = 1.0 - std::pow(state.beta1, t);
    c.bias_correction2 = 1.0 - std::pow(state.beta2, t);

    const auto& k = kernels::active_table();
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        DenseLayer& layer = params.layers[l];
        k.adam(c, grads.weights[l].data(), layer.weights.data(), state.first_moment.weights[l].data(),
               state.second_moment.weights[l].data(), layer.weights.size());
        k.adam(c, grads.bias[l].data(), layer.bias.data(), state.first_moment.bias[l].data(),
               state.second_moment.bias[l].data(), layer.bias.size());
    }
    params.revision = next_revision();
}

void soft_update(NetworkParameters& target, const NetworkParameters& online, double tau) {
    if (!target.same_architecture(online)) {
        throw ShapeError("soft_update: target and online networks differ in architecture");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
    }
    const auto& k = kernels::active_table();
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        auto& t = target.layers[l];
        const auto& o = online.layers[l];
        k.blend(tau, o.weights.data(), t.weights.data(), t.weights.size());
        k.blend(tau, o.bias.data(), t.bias.data(), t.bias.size());
    }
    target.revision = next_revision();
}

namespace {

nlohmann::json entries_json(const NetworkParameters& shape, const std::vector<std::vector<double>>& weights,
                            const std::vector<std::vector<double>>& bias) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t l = 0; l < shape.layers.size(); ++l) {
        const auto& layer = shape.layers[l];
        entries.push_back({{"layer", l},
                           {"kind", "weight"},
                           {"rows", layer.outputs},
                           {"cols", layer.inputs},
                           {"values", weights[l]}});
        entries.push_back({{"layer", l}, {"kind", "bias"}, {"rows", layer.outputs}, {"cols", 1}, {"values", bias[l]}});
    }
    return entries;
}

void read_entries(const nlohmann::json& entries, const NetworkParameters& shape,
                  std::vector<std::vector<double>>& weights, std::vector<std::vector<double>>& bias) {
    weights.assign(shape.layers.size(), {});
    bias.assign(shape.layers.size(), {});
    for (const auto& e : entries) {
        const auto l = e.at("layer").get<std::size_t>();
        if (l >= shape.layers.size()) {
            throw ShapeError("snapshot entry refers to layer " + std::to_string(l));
        }
        const auto kind = e.at("kind").get<std::string>();
        auto values = e.at("values").get<std::vector<double>>();
        if (kind == "weight") {
            require_shape(values.size() == shape.layers[l].weights.size(), "snapshot weight size mismatch");
            weights[l] = std::move(values);
        } else if (kind == "bias") {
            require_shape(values.size() == shape.layers[l].bias.size(), "snapshot bias size mismatch");
            bias[l] = std::move(values);
        } else {
            throw ShapeError("snapshot entry kind '" + kind + "'");
        }
    }
    for (std::size_t l = 0; l < shape.layers.size(); ++l) {
        require_shape(weights[l].size() == shape.layers[l].weights.size() &&
                          bias[l].size() == shape.layers[l].bias.size(),
                      "snapshot is missing entries for layer " + std::to_string(l));
    }
}

}  // namespace

nlohmann::json to_json(const NetworkParameters& params) {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;
    std::vector<std::string> activations;
    for (const auto& layer : params.layers) {
        w.push_back(layer.weights);
        b.push_back(layer.bias);
        activations.emplace_back(to_string(layer.activation));
    }
    return {{"format", "cnalloc.mlp/1"},
            {"layer_sizes", params.layer_sizes},
            {"activations", activations},
            {"entries", entries_json(params, w, b)}};
}

NetworkParameters network_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "cnalloc.mlp/1") {
        throw std::invalid_argument("network snapshot: unsupported format");
    }
    NetworkParameters params;
    params.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto activations = j.at("activations").get<std::vector<std::string>>();
    if (params.layer_sizes.size() < 2 || activations.size() + 1 != params.layer_sizes.size()) {
        throw ShapeError("network snapshot: layer_sizes and activations disagree");
    }
    for (std::size_t l = 0; l + 1 < params.layer_sizes.size(); ++l) {
        DenseLayer layer;
        layer.inputs = params.layer_sizes[l];
        layer.outputs = params.layer_sizes[l + 1];
        layer.activation = activation_from_string(activations[l]);
        layer.weights.resize(layer.inputs * layer.outputs);
        layer.bias.resize(layer.outputs);
        params.layers.push_back(std::move(layer));
    }
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;
    read_entries(j.at("entries"), params, w, b);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        params.layers[l].weights = std::move(w[l]);
        params.layers[l].bias = std::move(b[l]);
    }
    if (!params.all_finite()) {
        throw NonFiniteError("network snapshot contains non-finite values");
    }
    params.revision = next_revision();
    return params;
}

nlohmann::json to_json(const AdamState& state) {
    // Moments carry no architecture of their own; rebuild a shape view from them.
    NetworkParameters shape;
    for (std::size_t l = 0; l < state.first_moment.weights.size(); ++l) {
        DenseLayer layer;
        layer.outputs = state.first_moment.bias[l].size();
        layer.inputs = layer.outputs == 0 ? 0 : state.first_moment.weights[l].size() / layer.outputs;
        shape.layers.push_back(std::move(layer));
    }
    return {{"step_count", state.step_count},
            {"learning_rate", state.learning_rate},
            {"beta1", state.beta1},
            {"beta2", state.beta2},
            {"epsilon", state.epsilon},
            {"first_moment", entries_json(shape, state.first_moment.weights, state.first_moment.bias)},
            {"second_moment", entries_json(shape, state.second_moment.weights, state.second_moment.bias)}};
}

AdamState adam_state_from_json(const nlohmann::json& j, const NetworkParameters& params) {
    AdamState state = AdamState::for_network(params, j.at("learning_rate").get<double>());
    state.step_count = j.at("step_count").get<std::uint64_t>();
    state.beta1 = j.at("beta1").get<double>();
    state.beta2 = j.at("beta2").get<double>();
    state.epsilon = j.at("epsilon").get<double>();
    read_entries(j.at("first_moment"), params, state.first_moment.weights, state.first_moment.bias);
    read_entries(j.at("second_moment"), params, state.second_moment.weights, state.second_moment.bias);
    return state;
}

}  // namespace cnalloc
