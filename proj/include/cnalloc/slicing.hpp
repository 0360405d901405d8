#pragma once

// Bandwidth allocation across network slices: action-to-allocation mapping,
// slice scores, the product utility, and the even-split and water-filling
// baselines. SlicingEnv wires them into a step/reset environment that either
// scores allocations in closed form (analytic mode) or runs the per-slice
// traffic queues (emulated mode).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cnalloc/random.hpp"
#include "cnalloc/traffic.hpp"

namespace cnalloc::slicing {

/// Exponent shared by both score definitions.
inline constexpr double kScoreExponent = 1.1;

enum class ScoreMode { analytic, emulated };

/// Demands (analytic) and/or load multipliers (emulated) that apply to every
/// step after `after_step`.
struct DemandChange {
    std::uint64_t after_step = 0;
    std::vector<double> demands;
    std::vector<double> load_scale;
};

struct SliceConfig {
    std::size_t slices = 3;
    double bandwidth = 1.5;
    std::vector<double> k_min;
    std::vector<double> k_max;
    std::vector<double> demands;           // k_{i,d}
    std::vector<double> ideal_scores;      // c_{i,0}
    std::vector<double> latency_weights;   // l_{i,0}
    std::vector<traffic::ServiceProfile> services;
    std::vector<DemandChange> changes;
    ScoreMode mode = ScoreMode::analytic;
    double step_duration = 1.0;

    void validate() const;

    /// Three slices, B = 1.5, bounds [0.05B, B], demands (1, 1, 0.1) changing
    /// to (0.5, 1.5, 0.1) after step 4000, ideal scores (0.5, 0.5, 1).
    static SliceConfig analytic_default();
    /// Video/voice/chat slices sharing B = 4, slice 1 load halved and slice 2
    /// load raised by half after step 4000.
    static SliceConfig emulated_default();
};

void to_json(nlohmann::json& j, const SliceConfig& c);
void from_json(const nlohmann::json& j, SliceConfig& c);

struct AllocationVector {
    std::vector<double> k;

    double total() const;
    /// Per-slice bounds and the budget, with an absolute slack `tol`.
    bool feasible(const SliceConfig& config, double tol = 1e-12) const;
};

/// Per-slice state: previous allocation / B, latency / l_{i,0}, traffic / B.
struct SliceObservation {
    std::vector<double> allocation;
    std::vector<double> latency;
    std::vector<double> traffic;

    /// (o_1, l_1, d_1, o_2, l_2, d_2, ...)
    std::vector<double> flatten() const;
};

struct SliceScoreInputs {
    double completed = 0.0;      // r_i
    double mean_latency = 0.0;   // l_i; 0 means nothing finished this step
    int video_flag = 0;          // f_i
};

AllocationVector map_action(std::span<const double> action, const SliceConfig& config);

std::vector<double> score_analytic(const AllocationVector& allocation, std::span<const double> demands,
                                   std::span<const double> ideal_scores);

std::vector<double> score_emulated(std::span<const SliceScoreInputs> stats, const SliceConfig& config);

struct Utility {
    double value = 0.0;
    bool flagged = false;  // some score was non-positive
};

Utility utility(std::span<const double> scores);

/// Common water level nu with k_i = clamp(min(nu, d_i), k_min_i, k_max_i),
/// found by bisection so that the budget is exhausted (or all demands met).
AllocationVector water_fill_optimal(std::span<const double> demands, const SliceConfig& config);

AllocationVector sra(const SliceConfig& config);

/// Demands in force during `step` (1-based).
std::vector<double> demands_at(const SliceConfig& config, std::uint64_t step);
std::vector<double> load_scale_at(const SliceConfig& config, std::uint64_t step);

struct StepOutcome {
    std::uint64_t step = 0;
    AllocationVector allocation;
    std::vector<double> scores;
    Utility utility;
    std::vector<double> demands;  // analytic demands in force for this step
    SliceObservation observation;
};

class SlicingEnv {
public:
    SlicingEnv(SliceConfig config, std::uint64_t seed);

    const SliceConfig& config() const noexcept { return config_; }
    std::size_t observation_size() const noexcept { return 3 * config_.slices; }
    std::size_t action_size() const noexcept { return config_.slices; }
    std::uint64_t steps_taken() const noexcept { return step_; }

    SliceObservation reset();
    StepOutcome step(std::span<const double> action);
    StepOutcome step_allocation(const AllocationVector& allocation);

    /// Analytic utility of an allocation under the demands of the next step;
    /// used to score a policy without advancing the environment.
    double analytic_utility_next(const AllocationVector& allocation) const;

private:
    SliceObservation observe(const AllocationVector& previous, std::span<const double> latency,
                             std::span<const double> traffic) const;

    SliceConfig config_;
    std::uint64_t seed_;
    std::uint64_t step_ = 0;
    bool ready_ = false;
    std::vector<traffic::SliceTraffic> traffic_;
};

}  // namespace cnalloc::slicing
