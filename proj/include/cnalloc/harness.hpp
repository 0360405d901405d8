#pragma once

// Experiment runner: config loading, the training loops for both scenarios,
// JSON-lines metrics, cross-run comparison and CSV export.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnalloc/dqn.hpp"
#include "cnalloc/mec.hpp"
#include "cnalloc/slicing.hpp"
#include "cnalloc/td3.hpp"

namespace cnalloc::harness {

/// Invalid or inconsistent configuration, or an unusable output path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A run stopped because a loss or value became non-finite.
class RuntimeAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Scenario { slicing_analytic, slicing_emulated, mec };
enum class Policy { td3, dqn, sra, rra, optimal };

std::string to_string(Scenario s);
std::string to_string(Policy p);
Scenario scenario_from_string(const std::string& s);
Policy policy_from_string(const std::string& s);

bool is_slicing(Scenario s) noexcept;

struct ExperimentConfig {
    Scenario scenario = Scenario::slicing_analytic;
    Policy policy = Policy::td3;
    std::uint64_t seed = 1;
    std::size_t total_steps = 8000;
    std::size_t exploration_steps = 40;
    std::size_t eval_slots = 0;  // mec: greedy slots scored against the oracle after training
    Td3Hyperparams td3;
    DqnHyperparams dqn;
    slicing::SliceConfig slicing = slicing::SliceConfig::analytic_default();
    mec::MecConfig mec = mec::MecConfig::table2_default();
    std::string output;

    /// Throws ConfigError.
    void validate() const;

    static ExperimentConfig defaults(Scenario scenario, Policy policy);
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

struct MetricsRecord {
    Scenario scenario = Scenario::slicing_analytic;
    std::uint64_t step = 0;
    std::string phase;  // explore | train | eval
    std::string policy;

    // slicing
    std::string mode;
    std::vector<double> action;
    std::vector<double> allocation;
    std::vector<double> scores;
    double utility = 0.0;
    std::optional<double> utility_policy;
    double bandwidth = 0.0;
    std::optional<double> critic_loss;
    std::optional<double> actor_loss;

    // mec
    std::vector<long long> choices;
    std::vector<double> latency;
    double max_latency = 0.0;
    std::optional<double> loss;
    std::optional<double> epsilon;
    std::optional<double> optimal_latency;
    std::optional<double> rra_latency;

    /// Scalar objective: U for slicing, L(t) for mec.
    double objective() const;

    bool operator==(const MetricsRecord&) const = default;
};

nlohmann::json to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const nlohmann::json& j);

/// One compact JSON object per line.
std::string to_jsonl_line(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics(const std::string& path);
std::vector<MetricsRecord> read_metrics(std::istream& in);

using RecordSink = std::function<void(const MetricsRecord&)>;

/// Runs the configured protocol, handing every record to `sink` in order.
/// Throws ConfigError or RuntimeAbort.
void simulate(const ExperimentConfig& config, const RecordSink& sink);

/// Runs the experiment and writes the JSON-lines file; returns its path.
std::string run_experiment(const ExperimentConfig& config);

struct CompareOptions {
    std::optional<std::uint64_t> from;  // inclusive step window; default is the last 5% of steps
    std::optional<std::uint64_t> to;
    std::string metric = "objective";   // objective | U | U_policy | L_max
    std::string phase;                  // empty: every phase except eval
};

struct CompareRow {
    std::string file;
    std::string policy;
    std::size_t records = 0;
    std::uint64_t window_from = 0;
    std::uint64_t window_to = 0;
    double mean_all = 0.0;
    double mean_window = 0.0;
    double ratio = 1.0;  // mean_window / baseline mean_window
};

/// The first file is the baseline for the ratio column.
std::vector<CompareRow> compare(const std::vector<std::string>& files, const CompareOptions& options = {});
std::string format_compare(const std::vector<CompareRow>& rows);
/// Per-step objective of every file side by side (step, file1, file2, ...).
void write_aligned_csv(const std::vector<std::string>& files, const CompareOptions& options, std::ostream& out);

enum class PlotKind { allocation_proportions, scores_and_utility, latency_curve, epsilon_sweep };

PlotKind plot_kind_from_string(const std::string& s);
std::string to_string(PlotKind k);

void emit_plot_data(const std::vector<MetricsRecord>& records, PlotKind kind, std::ostream& out);
/// Reads `metrics_path` and writes the CSV to `csv_path`.
void emit_plot_data(const std::string& metrics_path, PlotKind kind, const std::string& csv_path);

/// Runs one experiment per epsilon with identical seeds and arrivals and
/// writes a combined file whose records carry their epsilon.
std::string sweep_epsilon(const ExperimentConfig& config, const std::vector<double>& epsilons);

/// Closed-form reference values for the configured scenario.
nlohmann::json oracle(const ExperimentConfig& config);

/// Shortest round-trip decimal form, independent of the C locale.
std::string format_number(double value);

}  // namespace cnalloc::harness
