#include "cnalloc/slicing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cnalloc::slicing {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw std::invalid_argument("slice config: " + message);
    }
}

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<double> filled(std::size_t n, double value) { return std::vector<double>(n, value); }

}  // namespace

void SliceConfig::validate() const {
    require(slices >= 1, "need at least one slice");
    require(std::isfinite(bandwidth) && bandwidth > 0.0, "bandwidth must be positive");
    require(k_min.size() == slices && k_max.size() == slices, "k_min/k_max need one entry per slice");
    require(ideal_scores.size() == slices, "ideal_scores need one entry per slice");
    require(latency_weights.size() == slices, "latency_weights need one entry per slice");
    for (std::size_t i = 0; i < slices; ++i) {
        require(k_min[i] > 0.0 && k_min[i] <= k_max[i] && k_max[i] <= bandwidth,
                "slice " + std::to_string(i + 1) + " violates 0 < k_min <= k_max <= B");
        require(ideal_scores[i] > 0.0, "ideal scores must be positive");
        require(latency_weights[i] > 0.0, "latency weights must be positive");
    }
    require(sum(k_min) <= bandwidth, "sum of k_min exceeds the bandwidth");
    require(step_duration > 0.0, "step_duration must be positive");
    if (mode == ScoreMode::analytic) {
        require(demands.size() == slices, "analytic mode needs one demand per slice");
        require(std::all_of(demands.begin(), demands.end(), [](double d) { return d > 0.0; }),
                "demands must be positive");
    } else {
        require(services.size() == slices, "emulated mode needs one service profile per slice");
        for (const auto& s : services) s.validate();
    }
    std::uint64_t last = 0;
    for (const auto& c : changes) {
        require(c.after_step >= last, "demand changes must be ordered by step");
        last = c.after_step;
        if (mode == ScoreMode::analytic) {
            require(c.demands.size() == slices, "each demand change needs one demand per slice");
            require(std::all_of(c.demands.begin(), c.demands.end(), [](double d) { return d > 0.0; }),
                    "changed demands must be positive");
        }
        require(c.load_scale.empty() || c.load_scale.size() == slices, "load_scale needs one entry per slice");
    }
}

SliceConfig SliceConfig::analytic_default() {
    SliceConfig c;
    c.slices = 3;
    c.bandwidth = 1.5;
    c.k_min = filled(3, 0.05 * c.bandwidth);
    c.k_max = filled(3, c.bandwidth);
    c.demands = {1.0, 1.0, 0.1};
    c.ideal_scores = {0.5, 0.5, 1.0};
    c.latency_weights = filled(3, 1.0);
    c.changes = {{4000, {0.5, 1.5, 0.1}, {}}};
    c.mode = ScoreMode::analytic;
    return c;
}

SliceConfig SliceConfig::emulated_default() {
    SliceConfig c;
    c.slices = 3;
    c.bandwidth = 4.0;
    c.k_min = filled(3, 0.05 * c.bandwidth);
    c.k_max = filled(3, c.bandwidth);
    c.demands = {};
    c.ideal_scores = {0.5, 0.5, 1.0};
    c.latency_weights = filled(3, 1.0);
    c.services = {traffic::ServiceProfile::defaults(traffic::ServiceKind::video),
                  traffic::ServiceProfile::defaults(traffic::ServiceKind::voice),
                  traffic::ServiceProfile::defaults(traffic::ServiceKind::chat)};
    c.changes = {{4000, {}, {0.5, 1.5, 1.0}}};
    c.mode = ScoreMode::emulated;
    return c;
}

void to_json(nlohmann::json& j, const SliceConfig& c) {
    j = {{"slices", c.slices},
         {"bandwidth", c.bandwidth},
         {"k_min", c.k_min},
         {"k_max", c.k_max},
         {"ideal_scores", c.ideal_scores},
         {"latency_weights", c.latency_weights},
         {"mode", c.mode == ScoreMode::analytic ? "analytic" : "emulated"},
         {"step_duration", c.step_duration}};
    if (!c.demands.empty()) j["demands"] = c.demands;
    if (!c.services.empty()) j["services"] = c.services;
    nlohmann::json changes = nlohmann::json::array();
    for (const auto& ch : c.changes) {
        nlohmann::json e = {{"after_step", ch.after_step}};
        if (!ch.demands.empty()) e["demands"] = ch.demands;
        if (!ch.load_scale.empty()) e["load_scale"] = ch.load_scale;
        changes.push_back(std::move(e));
    }
    j["changes"] = std::move(changes);
}

void from_json(const nlohmann::json& j, SliceConfig& c) {
    const std::string mode = j.value("mode", std::string("analytic"));
    if (mode != "analytic" && mode != "emulated") {
        throw std::invalid_argument("slice config: mode must be 'analytic' or 'emulated'");
    }
    c = mode == "analytic" ? SliceConfig::analytic_default() : SliceConfig::emulated_default();
    c.slices = j.value("slices", c.slices);
    c.bandwidth = j.value("bandwidth", c.bandwidth);
    // Bounds may be given as absolute vectors or as fractions of B.
    if (j.contains("k_min")) {
        c.k_min = j.at("k_min").get<std::vector<double>>();
    } else {
        c.k_min = filled(c.slices, j.value("k_min_fraction", 0.05) * c.bandwidth);
    }
    if (j.contains("k_max")) {
        c.k_max = j.at("k_max").get<std::vector<double>>();
    } else {
        c.k_max = filled(c.slices, j.value("k_max_fraction", 1.0) * c.bandwidth);
    }
    c.demands = j.value("demands", c.demands);
    c.ideal_scores = j.value("ideal_scores", c.ideal_scores);
    c.latency_weights = j.value("latency_weights", c.latency_weights);
    if (c.ideal_scores.size() != c.slices && !j.contains("ideal_scores")) c.ideal_scores = filled(c.slices, 1.0);
    if (c.latency_weights.size() != c.slices && !j.contains("latency_weights"))
        c.latency_weights = filled(c.slices, 1.0);
    if (j.contains("services")) {
        c.services.clear();
        for (const auto& s : j.at("services")) {
            if (s.is_string()) {
                c.services.push_back(traffic::ServiceProfile::defaults(traffic::service_from_string(s.get<std::string>())));
            } else {
                c.services.push_back(s.get<traffic::ServiceProfile>());
            }
        }
    }
    c.step_duration = j.value("step_duration", c.step_duration);
    if (!j.contains("changes") && c.slices != 3) {
        c.changes.clear();
    }
    if (!j.contains("services") && c.slices != 3) {
        c.services.clear();
    }
    if (j.contains("changes")) {
        c.changes.clear();
        for (const auto& e : j.at("changes")) {
            DemandChange ch;
            ch.after_step = e.at("after_step").get<std::uint64_t>();
            ch.demands = e.value("demands", std::vector<double>{});
            ch.load_scale = e.value("load_scale", std::vector<double>{});
            c.changes.push_back(std::move(ch));
        }
    }
    c.validate();
}

double AllocationVector::total() const { return sum(k); }

bool AllocationVector::feasible(const SliceConfig& config, double tol) const {
    if (k.size() != config.slices) {
        return false;
    }
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (!(k[i] >= config.k_min[i] - tol && k[i] <= config.k_max[i] + tol)) {
            return false;
        }
    }
    return total() <= config.bandwidth + tol;
}

std::vector<double> SliceObservation::flatten() const {
    std::vector<double> out;
    out.reserve(3 * allocation.size());
    for (std::size_t i = 0; i < allocation.size(); ++i) {
        out.push_back(allocation[i]);
        out.push_back(latency[i]);
        out.push_back(traffic[i]);
    }
    return out;
}

AllocationVector map_action(std::span<const double> action, const SliceConfig& config) {
    if (action.size() != config.slices) {
        throw std::invalid_argument("map_action: action has " + std::to_string(action.size()) + " entries, expected " +
                                    std::to_string(config.slices));
    }
    for (double a : action) {
        if (!(a >= -1.0 && a <= 1.0)) {
            throw std::invalid_argument("map_action: action components must lie in [-1, 1]");
        }
    }
    const double residual = config.bandwidth - sum(config.k_min);
    double weight_total = 0.0;
    for (double a : action) weight_total += a + 1.0;

    AllocationVector out;
    out.k.resize(config.slices);
    for (std::size_t i = 0; i < config.slices; ++i) {
        // All actions at -1 leave the shares undefined; split the residual evenly.
        const double share = weight_total > 0.0 ? (action[i] + 1.0) / weight_total
                                                : 1.0 / static_cast<double>(config.slices);
        out.k[i] = std::min(config.k_max[i], config.k_min[i] + residual * share);
    }
    return out;
}

std::vector<double> score_analytic(const AllocationVector& allocation, std::span<const double> demands,
                                   std::span<const double> ideal_scores) {
    const std::size_t n = allocation.k.size();
    if (demands.size() != n || ideal_scores.size() != n) {
        throw std::invalid_argument("score_analytic: allocation, demands and ideal scores differ in length");
    }
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(demands[i] > 0.0)) {
            throw std::invalid_argument("score_analytic: demands must be positive");
        }
        if (!(ideal_scores[i] > 0.0)) {
            throw std::invalid_argument("score_analytic: ideal scores must be positive");
        }
        const double satisfied = std::min(allocation.k[i], demands[i]) / demands[i];
        scores[i] = std::pow(satisfied, kScoreExponent) / ideal_scores[i];
    }
    return scores;
}

std::vector<double> score_emulated(std::span<const SliceScoreInputs> stats, const SliceConfig& config) {
    if (stats.size() != config.slices) {
        throw std::invalid_argument("score_emulated: need one stats entry per slice");
    }
    std::vector<double> scores(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto& s = stats[i];
        if (s.completed < 0.0 || s.mean_latency < 0.0 || (s.video_flag != 0 && s.video_flag != 1)) {
            throw std::invalid_argument("score_emulated: negative rate/latency or flag outside {0, 1}");
        }
        const double latency = s.mean_latency > 0.0 ? s.mean_latency : config.step_duration;
        const double base = s.completed + config.latency_weights[i] / latency;
        scores[i] = std::pow(base, kScoreExponent) / config.ideal_scores[i] + static_cast<double>(s.video_flag);
    }
    return scores;
}

Utility utility(std::span<const double> scores) {
    Utility u;
    u.value = 1.0;
    for (double c : scores) {
        u.value *= c;
        if (!(c > 0.0)) {
            u.flagged = true;
        }
    }
    return u;
}

AllocationVector water_fill_optimal(std::span<const double> demands, const SliceConfig& config) {
    const std::size_t n = config.slices;
    if (demands.size() != n) {
        throw std::invalid_argument("water_fill_optimal: need one demand per slice");
    }
    if (std::any_of(demands.begin(), demands.end(), [](double d) { return !(d > 0.0); })) {
        throw std::invalid_argument("water_fill_optimal: demands must be positive");
    }
    if (sum(config.k_min) > config.bandwidth) {
        throw std::invalid_argument("water_fill_optimal: bounds are infeasible (sum of k_min exceeds B)");
    }
    auto at_level = [&](double level) {
        AllocationVector a;
        a.k.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            a.k[i] = std::clamp(std::min(level, demands[i]), config.k_min[i], config.k_max[i]);
        }
        return a;
    };
    double hi = *std::max_element(config.k_max.begin(), config.k_max.end());
    hi = std::max(hi, *std::max_element(demands.begin(), demands.end()));
    AllocationVector saturated = at_level(hi);
    if (saturated.total() <= config.bandwidth) {
        return saturated;
    }
    double lo = 0.0;
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (at_level(mid).total() <= config.bandwidth) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return at_level(lo);
}

AllocationVector sra(const SliceConfig& config) {
    const double share = config.bandwidth / static_cast<double>(config.slices);
    for (std::size_t i = 0; i < config.slices; ++i) {
        if (share < config.k_min[i] || share > config.k_max[i]) {
            throw std::invalid_argument("sra: even share B/I violates the bounds of slice " + std::to_string(i + 1));
        }
    }
    return {std::vector<double>(config.slices, share)};
}

std::vector<double> demands_at(const SliceConfig& config, std::uint64_t step) {
    std::vector<double> d = config.demands;
    for (const auto& c : config.changes) {
        if (step > c.after_step && !c.demands.empty()) {
            d = c.demands;
        }
    }
    return d;
}

std::vector<double> load_scale_at(const SliceConfig& config, std::uint64_t step) {
    std::vector<double> s(config.slices, 1.0);
    for (const auto& c : config.changes) {
        if (step > c.after_step && !c.load_scale.empty()) {
            s = c.load_scale;
        }
    }
    return s;
}

SlicingEnv::SlicingEnv(SliceConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
}

SliceObservation SlicingEnv::observe(const AllocationVector& previous, std::span<const double> latency,
                                     std::span<const double> traffic) const {
    const std::size_t n = config_.slices;
    SliceObservation obs;
    obs.allocation.resize(n);
    obs.latency.resize(n);
    obs.traffic.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        obs.allocation[i] = previous.k[i] / config_.bandwidth;
        obs.latency[i] = latency[i] / config_.latency_weights[i];
        obs.traffic[i] = traffic[i] / config_.bandwidth;
    }
    return obs;
}

SliceObservation SlicingEnv::reset() {
    step_ = 0;
    ready_ = true;
    traffic_.clear();
    if (config_.mode == ScoreMode::emulated) {
        for (std::size_t i = 0; i < config_.slices; ++i) {
            traffic_.emplace_back(config_.services[i], make_stream(seed_, Stream::traffic, i));
        }
    }
    const std::size_t n = config_.slices;
    AllocationVector even{std::vector<double>(n, config_.bandwidth / static_cast<double>(n))};
    const std::vector<double> zeros(n, 0.0);
    if (config_.mode == ScoreMode::analytic) {
        return observe(even, zeros, demands_at(config_, 1));
    }
    return observe(even, zeros, zeros);
}

StepOutcome SlicingEnv::step(std::span<const double> action) { return step_allocation(map_action(action, config_)); }

StepOutcome SlicingEnv::step_allocation(const AllocationVector& allocation) {
    if (!ready_) {
        throw std::logic_error("SlicingEnv::step called before reset");
    }
    if (!allocation.feasible(config_, 1e-9)) {
        throw std::invalid_argument("SlicingEnv::step: allocation violates the slice bounds or the budget");
    }
    ++step_;
    StepOutcome out;
    out.step = step_;
    out.allocation = allocation;
    const std::size_t n = config_.slices;
    if (config_.mode == ScoreMode::analytic) {
        // Latency is not modelled here; the observation reports it as 0.
        out.demands = demands_at(config_, step_);
        out.scores = score_analytic(allocation, out.demands, config_.ideal_scores);
        out.observation = observe(allocation, std::vector<double>(n, 0.0), demands_at(config_, step_ + 1));
    } else {
        const auto scale = load_scale_at(config_, step_);
        std::vector<SliceScoreInputs> stats(n);
        std::vector<double> latency(n);
        std::vector<double> arrived(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto s = traffic_[i].step(step_, allocation.k[i], config_.step_duration, scale[i]);
            stats[i] = {static_cast<double>(s.completed), s.mean_latency, s.video_flag};
            latency[i] = s.mean_latency;
            arrived[i] = s.arrived / config_.step_duration;
        }
        out.scores = score_emulated(stats, config_);
        out.observation = observe(allocation, latency, arrived);
    }
    out.utility = utility(out.scores);
    return out;
}

double SlicingEnv::analytic_utility_next(const AllocationVector& allocation) const {
    if (config_.mode != ScoreMode::analytic) {
        throw std::logic_error("analytic_utility_next needs analytic mode");
    }
    return utility(score_analytic(allocation, demands_at(config_, step_ + 1), config_.ideal_scores)).value;
}

}  // namespace cnalloc::slicing
