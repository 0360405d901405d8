#include "cnalloc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cnalloc/numerics.hpp"
#include "cnalloc/random.hpp"
#include "cnalloc/replay.hpp"

namespace cnalloc::harness {

using nlohmann::json;

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::slicing_analytic:
            return "slicing-analytic";
        case Scenario::slicing_emulated:
            return "slicing-emulated";
        case Scenario::mec:
            return "mec";
    }
    return "mec";
}

std::string to_string(Policy p) {
    switch (p) {
        case Policy::td3:
            return "td3";
        case Policy::dqn:
            return "dqn";
        case Policy::sra:
            return "sra";
        case Policy::rra:
            return "rra";
        case Policy::optimal:
            return "optimal";
    }
    return "optimal";
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "slicing-analytic") return Scenario::slicing_analytic;
    if (s == "slicing-emulated") return Scenario::slicing_emulated;
    if (s == "mec") return Scenario::mec;
    throw ConfigError("unknown scenario '" + s + "' (expected slicing-analytic, slicing-emulated or mec)");
}

Policy policy_from_string(const std::string& s) {
    if (s == "td3") return Policy::td3;
    if (s == "dqn") return Policy::dqn;
    if (s == "sra") return Policy::sra;
    if (s == "rra") return Policy::rra;
    if (s == "optimal") return Policy::optimal;
    throw ConfigError("unknown policy '" + s + "' (expected td3, dqn, sra, rra or optimal)");
}

bool is_slicing(Scenario s) noexcept { return s != Scenario::mec; }

void ExperimentConfig::validate() const {
    const bool slicing_policy = policy == Policy::td3 || policy == Policy::sra || policy == Policy::optimal;
    const bool mec_policy = policy == Policy::dqn || policy == Policy::rra || policy == Policy::optimal;
    if (is_slicing(scenario) && !slicing_policy) {
        throw ConfigError("policy '" + to_string(policy) + "' does not apply to scenario '" + to_string(scenario) +
                          "' (use td3, sra or optimal)");
    }
    if (!is_slicing(scenario) && !mec_policy) {
        throw ConfigError("policy '" + to_string(policy) + "' does not apply to scenario 'mec' (use dqn, rra or optimal)");
    }
    if (total_steps == 0) {
        throw ConfigError("total_steps must be positive");
    }
    if (exploration_steps >= total_steps) {
        throw ConfigError("exploration_steps must be smaller than total_steps");
    }
    try {
        if (is_slicing(scenario)) {
            slicing.validate();
            td3.validate();
            const bool analytic = slicing.mode == slicing::ScoreMode::analytic;
            if (analytic != (scenario == Scenario::slicing_analytic)) {
                throw ConfigError("environment.mode does not match the scenario");
            }
            if (policy == Policy::optimal && slicing.demands.empty()) {
                throw ConfigError("the optimal slicing policy needs environment.demands");
            }
        } else {
            mec.validate();
            dqn.validate();
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig ExperimentConfig::defaults(Scenario scenario, Policy policy) {
    ExperimentConfig c;
    c.scenario = scenario;
    c.policy = policy;
    switch (scenario) {
        case Scenario::slicing_analytic:
            c.slicing = slicing::SliceConfig::analytic_default();
            break;
        case Scenario::slicing_emulated:
            c.slicing = slicing::SliceConfig::emulated_default();
            break;
        case Scenario::mec:
            c.mec = mec::MecConfig::table2_default();
            c.total_steps = 5000;
            c.exploration_steps = 500;
            break;
    }
    c.td3.total_steps = c.dqn.total_steps = c.total_steps;
    c.td3.exploration_steps = c.dqn.exploration_steps = c.exploration_steps;
    return c;
}

ExperimentConfig config_from_json(const json& j) {
    try {
        const Scenario scenario = scenario_from_string(j.at("scenario").get<std::string>());
        const Policy policy =
            policy_from_string(j.value("policy", std::string(is_slicing(scenario) ? "td3" : "dqn")));
        ExperimentConfig c = ExperimentConfig::defaults(scenario, policy);
        c.seed = j.value("seed", c.seed);
        c.total_steps = j.value("total_steps", c.total_steps);
        c.exploration_steps = j.value("exploration_steps", c.exploration_steps);
        c.eval_slots = j.value("eval_slots", c.eval_slots);
        c.output = j.value("output", c.output);
        const json agent = j.value("agent", json::object());
        const json env = j.value("environment", json::object());
        if (is_slicing(scenario)) {
            json e = env;
            if (!e.contains("mode")) e["mode"] = scenario == Scenario::slicing_analytic ? "analytic" : "emulated";
            c.slicing = e.get<slicing::SliceConfig>();
            c.td3 = agent.get<Td3Hyperparams>();
        } else {
            c.mec = env.get<mec::MecConfig>();
            c.dqn = agent.get<DqnHyperparams>();
        }
        c.td3.total_steps = c.dqn.total_steps = c.total_steps;
        c.td3.exploration_steps = c.dqn.exploration_steps = c.exploration_steps;
        c.validate();
        return c;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

json to_json(const ExperimentConfig& c) {
    json j = {{"scenario", to_string(c.scenario)},
              {"policy", to_string(c.policy)},
              {"seed", c.seed},
              {"total_steps", c.total_steps},
              {"exploration_steps", c.exploration_steps},
              {"eval_slots", c.eval_slots},
              {"output", c.output}};
    if (is_slicing(c.scenario)) {
        j["agent"] = c.td3;
        j["environment"] = c.slicing;
    } else {
        j["agent"] = c.dqn;
        j["environment"] = c.mec;
    }
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

double MetricsRecord::objective() const { return is_slicing(scenario) ? utility : max_latency; }

json to_json(const MetricsRecord& r) {
    json j;
    if (is_slicing(r.scenario)) {
        j["step"] = r.step;
        j["phase"] = r.phase;
        j["policy"] = r.policy;
        j["mode"] = r.mode;
        j["a"] = r.action;
        j["k"] = r.allocation;
        j["c"] = r.scores;
        j["U"] = r.utility;
        if (r.utility_policy) j["U_policy"] = *r.utility_policy;
        j["B"] = r.bandwidth;
        if (r.critic_loss) j["critic_loss"] = *r.critic_loss;
        if (r.actor_loss) j["actor_loss"] = *r.actor_loss;
    } else {
        j["slot"] = r.step;
        j["phase"] = r.phase;
        j["policy"] = r.policy;
        j["action"] = r.choices;
        j["L"] = r.latency;
        j["L_max"] = r.max_latency;
        if (r.loss) j["loss"] = *r.loss;
        if (r.epsilon) j["epsilon"] = *r.epsilon;
        if (r.optimal_latency) j["L_opt"] = *r.optimal_latency;
        if (r.rra_latency) j["L_rra"] = *r.rra_latency;
    }
    return j;
}

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
    if (j.contains(key) && !j.at(key).is_null()) return j.at(key).get<T>();
    return std::nullopt;
}

}  // namespace

MetricsRecord record_from_json(const json& j) {
    MetricsRecord r;
    r.phase = j.value("phase", std::string());
    r.policy = j.value("policy", std::string());
    if (j.contains("slot")) {
        r.scenario = Scenario::mec;
        r.step = j.at("slot").get<std::uint64_t>();
        r.choices = j.value("action", std::vector<long long>{});
        r.latency = j.value("L", std::vector<double>{});
        r.max_latency = j.at("L_max").get<double>();
        r.loss = optional_field<double>(j, "loss");
        r.epsilon = optional_field<double>(j, "epsilon");
        r.optimal_latency = optional_field<double>(j, "L_opt");
        r.rra_latency = optional_field<double>(j, "L_rra");
    } else {
        r.step = j.at("step").get<std::uint64_t>();
        r.mode = j.value("mode", std::string("analytic"));
        r.scenario = r.mode == "emulated" ? Scenario::slicing_emulated : Scenario::slicing_analytic;
        r.action = j.value("a", std::vector<double>{});
        r.allocation = j.value("k", std::vector<double>{});
        r.scores = j.value("c", std::vector<double>{});
        r.utility = j.at("U").get<double>();
        r.utility_policy = optional_field<double>(j, "U_policy");
        r.bandwidth = j.value("B", 0.0);
        r.critic_loss = optional_field<double>(j, "critic_loss");
        r.actor_loss = optional_field<double>(j, "actor_loss");
    }
    return r;
}

std::string to_jsonl_line(const MetricsRecord& r) { return to_json(r).dump(); }

std::vector<MetricsRecord> read_metrics(std::istream& in) {
    std::vector<MetricsRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw ConfigError("metrics line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open metrics file '" + path + "'");
    }
    return read_metrics(in);
}

namespace {

void require_finite(double value, const char* what, std::uint64_t step) {
    if (!std::isfinite(value)) {
        throw RuntimeAbort(std::string("non-finite ") + what + " at step " + std::to_string(step));
    }
}

void simulate_slicing(const ExperimentConfig& config, const RecordSink& sink) {
    using namespace slicing;
    SlicingEnv env(config.slicing, config.seed);
    const bool analytic = config.slicing.mode == ScoreMode::analytic;
    const std::string mode = analytic ? "analytic" : "emulated";
    Rng policy_rng = make_stream(config.seed, Stream::policy);
    Rng sample_rng = make_stream(config.seed, Stream::policy, 1);

    std::optional<Td3Agent> agent;
    std::optional<ReplayBuffer<std::vector<double>>> buffer;
    if (config.policy == Policy::td3) {
        agent.emplace(env.observation_size(), env.action_size(), config.td3, config.seed);
        buffer.emplace(config.td3.buffer_capacity, env.observation_size(), env.action_size());
    }

    SliceObservation obs = env.reset();
    for (std::uint64_t t = 1; t <= config.total_steps; ++t) {
        MetricsRecord rec;
        rec.scenario = config.scenario;
        rec.step = t;
        rec.policy = to_string(config.policy);
        rec.mode = mode;
        rec.bandwidth = config.slicing.bandwidth;
        rec.phase = t <= config.exploration_steps ? "explore" : "train";

        StepOutcome out;
        if (agent) {
            const std::vector<double> state = obs.flatten();
            if (analytic) {
                const auto greedy = agent->select_action(state, ActionMode::eval, policy_rng);
                rec.utility_policy = env.analytic_utility_next(map_action(greedy, config.slicing));
            }
            const ActionMode am = t <= config.exploration_steps ? ActionMode::explore : ActionMode::train;
            rec.action = agent->select_action(state, am, policy_rng);
            out = env.step(rec.action);
            require_finite(out.utility.value, "utility", t);
            buffer->push({state, rec.action, out.utility.value, out.observation.flatten()});
            if (t > config.exploration_steps && buffer->size() >= config.td3.batch_size) {
                try {
                    const auto stats = agent->train_step(buffer->sample(config.td3.batch_size, sample_rng));
                    rec.critic_loss = stats.critic_loss();
                    rec.actor_loss = stats.actor_loss;
                } catch (const NonFiniteError& e) {
                    throw RuntimeAbort("step " + std::to_string(t) + ": " + e.what());
                }
            }
        } else {
            const AllocationVector k = config.policy == Policy::sra
                                           ? sra(config.slicing)
                                           : water_fill_optimal(demands_at(config.slicing, t), config.slicing);
            out = env.step_allocation(k);
            require_finite(out.utility.value, "utility", t);
            if (analytic) rec.utility_policy = out.utility.value;
        }
        rec.allocation = out.allocation.k;
        rec.scores = out.scores;
        rec.utility = out.utility.value;
        obs = out.observation;
        sink(rec);
    }
}

std::vector<long long> choice_codes(const mec::JointAction& a) {
    std::vector<long long> out;
    out.reserve(a.size());
    for (const auto& c : a) out.push_back(c.code());
    return out;
}

void simulate_mec(const ExperimentConfig& config, const RecordSink& sink) {
    using namespace mec;
    MecEnv env(config.mec, config.seed);
    const auto& topo = env.topology();
    Rng policy_rng = make_stream(config.seed, Stream::policy);
    Rng sample_rng = make_stream(config.seed, Stream::policy, 1);
    Rng baseline_rng = make_stream(config.seed, Stream::baseline);

    const JointActionSpace space(topo, config.mec.may_overflow());
    std::optional<DqnAgent> agent;
    std::optional<ReplayBuffer<std::size_t>> buffer;
    if (config.policy == Policy::dqn) {
        agent.emplace(env.observation_size(), space.size(), config.dqn, config.seed);
        buffer.emplace(config.dqn.buffer_capacity, env.observation_size(), space.size());
    }

    MecObservation obs = env.reset();
    const std::uint64_t last = config.total_steps + (agent ? config.eval_slots : 0);
    for (std::uint64_t t = 1; t <= last; ++t) {
        const bool eval = t > config.total_steps;
        MetricsRecord rec;
        rec.scenario = Scenario::mec;
        rec.step = t;
        rec.policy = to_string(config.policy);
        rec.phase = eval ? "eval" : (t <= config.exploration_steps ? "explore" : "train");
        const TaskArrival arrivals = env.current_arrivals();

        JointAction action;
        std::size_t index = 0;
        std::vector<double> state;
        if (agent) {
            rec.epsilon = config.dqn.epsilon;
            state = obs.flatten();
            const DqnPhase phase =
                eval ? DqnPhase::eval : (t <= config.exploration_steps ? DqnPhase::explore : DqnPhase::train);
            index = agent->select_action(state, phase, policy_rng);
            action = space.realize(index, topo, arrivals);
            if (eval) {
                rec.optimal_latency = brute_force_optimal(topo, arrivals, config.mec.action_ceiling).max_latency;
                rec.rra_latency = evaluate_slot(topo, arrivals, rra(topo, arrivals, baseline_rng)).max_latency;
            }
        } else if (config.policy == Policy::rra) {
            action = rra(topo, arrivals, baseline_rng);
        } else {
            action = brute_force_optimal(topo, arrivals, config.mec.action_ceiling).action;
        }

        const MecStep step = env.step(action);
        require_finite(step.outcome.max_latency, "latency", t);
        if (agent && !eval) {
            buffer->push({state, index, step.outcome.max_latency, step.observation.flatten()});
            if (t > config.exploration_steps && buffer->size() >= config.dqn.batch_size) {
                try {
                    rec.loss = agent->train_step(buffer->sample(config.dqn.batch_size, sample_rng));
                } catch (const NonFiniteError& e) {
                    throw RuntimeAbort("slot " + std::to_string(t) + ": " + e.what());
                }
            }
            if (t % config.dqn.target_sync_period == 0) {
                agent->sync_target();
            }
        }
        rec.choices = choice_codes(action);
        rec.latency = step.outcome.latency;
        rec.max_latency = step.outcome.max_latency;
        obs = step.observation;
        sink(rec);
    }
}

std::ofstream open_output(const std::string& path) {
    if (path.empty()) {
        throw ConfigError("no output path (set \"output\" in the config or pass --out)");
    }
    const std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write output file '" + path + "'");
    }
    return out;
}

}  // namespace

void simulate(const ExperimentConfig& config, const RecordSink& sink) {
    config.validate();
    try {
        if (is_slicing(config.scenario)) {
            simulate_slicing(config, sink);
        } else {
            simulate_mec(config, sink);
        }
    } catch (const NonFiniteError& e) {
        throw RuntimeAbort(e.what());
    } catch (const mec::ActionSpaceTooLarge& e) {
        throw ConfigError(e.what());
    }
}

std::string run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::ofstream out = open_output(config.output);
    simulate(config, [&](const MetricsRecord& r) { out << to_jsonl_line(r) << '\n'; });
    out.flush();
    if (!out) {
        throw ConfigError("failed while writing '" + config.output + "'");
    }
    return config.output;
}

namespace {

std::optional<double> metric_value(const MetricsRecord& r, const std::string& metric) {
    if (metric == "objective") return r.objective();
    if (metric == "U") return r.utility;
    if (metric == "U_policy") return r.utility_policy ? r.utility_policy : std::optional<double>(r.utility);
    if (metric == "L_max") return r.max_latency;
    if (metric == "L_opt") return r.optimal_latency;
    if (metric == "L_rra") return r.rra_latency;
    throw ConfigError("unknown metric '" + metric + "'");
}

bool phase_selected(const MetricsRecord& r, const std::string& phase) {
    return phase.empty() ? r.phase != "eval" : r.phase == phase;
}

struct Series {
    std::vector<std::uint64_t> steps;
    std::vector<double> values;
    std::string policy;
};

Series load_series(const std::string& file, const CompareOptions& options) {
    Series s;
    for (const auto& r : read_metrics(file)) {
        if (!phase_selected(r, options.phase)) continue;
        const auto v = metric_value(r, options.metric);
        if (!v) continue;
        s.steps.push_back(r.step);
        s.values.push_back(*v);
        if (s.policy.empty()) s.policy = r.policy;
    }
    return s;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<CompareRow> compare(const std::vector<std::string>& files, const CompareOptions& options) {
    if (files.empty()) {
        throw ConfigError("compare needs at least one metrics file");
    }
    std::vector<CompareRow> rows;
    for (const auto& file : files) {
        const Series s = load_series(file, options);
        CompareRow row;
        row.file = file;
        row.policy = s.policy;
        row.records = s.values.size();
        row.mean_all = mean(s.values);
        if (!s.steps.empty()) {
            const std::size_t window = std::max<std::size_t>(1, s.steps.size() / 20);
            row.window_from = options.from.value_or(s.steps[s.steps.size() - window]);
            row.window_to = options.to.value_or(s.steps.back());
            std::vector<double> in_window;
            for (std::size_t i = 0; i < s.steps.size(); ++i) {
                if (s.steps[i] >= row.window_from && s.steps[i] <= row.window_to) in_window.push_back(s.values[i]);
            }
            row.mean_window = mean(in_window);
        }
        rows.push_back(row);
    }
    for (auto& row : rows) {
        row.ratio = rows.front().mean_window != 0.0 ? row.mean_window / rows.front().mean_window : 0.0;
    }
    return rows;
}

std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string format_compare(const std::vector<CompareRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(32) << "file" << std::setw(10) << "policy" << std::setw(9) << "records"
        << std::setw(16) << "window" << std::setw(22) << "mean_all" << std::setw(22) << "mean_window"
        << "ratio\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(32) << r.file << std::setw(10) << r.policy << std::setw(9) << r.records
            << std::setw(16) << (std::to_string(r.window_from) + "-" + std::to_string(r.window_to)) << std::setw(22)
            << format_number(r.mean_all) << std::setw(22) << format_number(r.mean_window) << format_number(r.ratio)
            << '\n';
    }
    return out.str();
}

void write_aligned_csv(const std::vector<std::string>& files, const CompareOptions& options, std::ostream& out) {
    std::map<std::uint64_t, std::vector<std::optional<double>>> table;
    out << "step";
    for (std::size_t f = 0; f < files.size(); ++f) {
        out << ',' << std::filesystem::path(files[f]).stem().string();
        const Series s = load_series(files[f], options);
        for (std::size_t i = 0; i < s.steps.size(); ++i) {
            auto& row = table[s.steps[i]];
            row.resize(files.size());
            row[f] = s.values[i];
        }
    }
    out << '\n';
    for (auto& [step, row] : table) {
        row.resize(files.size());
        out << step;
        for (const auto& v : row) {
            out << ',';
            if (v) out << format_number(*v);
        }
        out << '\n';
    }
}

PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "allocation-proportions") return PlotKind::allocation_proportions;
    if (s == "scores-and-utility") return PlotKind::scores_and_utility;
    if (s == "latency-curve") return PlotKind::latency_curve;
    if (s == "epsilon-sweep") return PlotKind::epsilon_sweep;
    throw ConfigError("unknown plot kind '" + s +
                      "' (expected allocation-proportions, scores-and-utility, latency-curve or epsilon-sweep)");
}

std::string to_string(PlotKind k) {
    switch (k) {
        case PlotKind::allocation_proportions:
            return "allocation-proportions";
        case PlotKind::scores_and_utility:
            return "scores-and-utility";
        case PlotKind::latency_curve:
            return "latency-curve";
        case PlotKind::epsilon_sweep:
            return "epsilon-sweep";
    }
    return "latency-curve";
}

namespace {

constexpr std::size_t kMovingWindow = 100;

void emit_epsilon_sweep(const std::vector<MetricsRecord>& records, std::ostream& out) {
    std::map<double, std::map<std::uint64_t, double>> by_eps;
    for (const auto& r : records) {
        if (r.phase == "eval" || !r.epsilon) continue;
        by_eps[*r.epsilon][r.step] = r.max_latency;
    }
    std::map<std::uint64_t, std::vector<std::optional<double>>> rows;
    out << "slot";
    std::size_t col = 0;
    for (const auto& [eps, series] : by_eps) {
        out << ",L_max_eps_" << format_number(eps);
        for (const auto& [slot, v] : series) {
            auto& row = rows[slot];
            row.resize(by_eps.size());
            row[col] = v;
        }
        ++col;
    }
    out << '\n';
    for (auto& [slot, row] : rows) {
        row.resize(by_eps.size());
        out << slot;
        for (const auto& v : row) {
            out << ',';
            if (v) out << format_number(*v);
        }
        out << '\n';
    }
}

}  // namespace

void emit_plot_data(const std::vector<MetricsRecord>& records, PlotKind kind, std::ostream& out) {
    if (kind == PlotKind::epsilon_sweep) {
        emit_epsilon_sweep(records, out);
        return;
    }
    const std::size_t width = records.empty() ? 0
                              : kind == PlotKind::latency_curve ? records.front().latency.size()
                              : kind == PlotKind::allocation_proportions ? records.front().allocation.size()
                                                                         : records.front().scores.size();
    switch (kind) {
        case PlotKind::allocation_proportions:
            out << "step";
            for (std::size_t i = 1; i <= width; ++i) out << ",k" << i << "_over_B";
            break;
        case PlotKind::scores_and_utility:
            out << "step";
            for (std::size_t i = 1; i <= width; ++i) out << ",c" << i;
            out << ",U";
            break;
        case PlotKind::latency_curve:
            out << "slot,phase,L_max,L_max_avg" << kMovingWindow;
            for (std::size_t i = 1; i <= width; ++i) out << ",L" << i;
            break;
        case PlotKind::epsilon_sweep:
            break;
    }
    out << '\n';
    double window_sum = 0.0;
    std::vector<double> recent;
    for (const auto& r : records) {
        out << r.step;
        switch (kind) {
            case PlotKind::allocation_proportions:
                for (double k : r.allocation) out << ',' << format_number(k / r.bandwidth);
                break;
            case PlotKind::scores_and_utility:
                for (double c : r.scores) out << ',' << format_number(c);
                out << ',' << format_number(r.utility);
                break;
            case PlotKind::latency_curve: {
                recent.push_back(r.max_latency);
                window_sum += r.max_latency;
                if (recent.size() > kMovingWindow) {
                    window_sum -= recent[recent.size() - kMovingWindow - 1];
                }
                const std::size_t n = std::min(recent.size(), kMovingWindow);
                out << ',' << r.phase << ',' << format_number(r.max_latency) << ','
                    << format_number(window_sum / static_cast<double>(n));
                for (double l : r.latency) out << ',' << format_number(l);
                break;
            }
            case PlotKind::epsilon_sweep:
                break;
        }
        out << '\n';
    }
}

void emit_plot_data(const std::string& metrics_path, PlotKind kind, const std::string& csv_path) {
    const auto records = read_metrics(metrics_path);
    std::ofstream out = open_output(csv_path);
    emit_plot_data(records, kind, out);
    if (!out) {
        throw ConfigError("failed while writing '" + csv_path + "'");
    }
}

std::string sweep_epsilon(const ExperimentConfig& config, const std::vector<double>& epsilons) {
    if (config.scenario != Scenario::mec || config.policy != Policy::dqn) {
        throw ConfigError("sweep-epsilon needs scenario 'mec' with policy 'dqn'");
    }
    if (epsilons.empty()) {
        throw ConfigError("sweep-epsilon needs at least one epsilon value");
    }
    config.validate();
    std::ofstream out = open_output(config.output);
    for (double eps : epsilons) {
        ExperimentConfig c = config;
        c.dqn.epsilon = eps;
        c.validate();
        simulate(c, [&](const MetricsRecord& r) { out << to_jsonl_line(r) << '\n'; });
    }
    out.flush();
    if (!out) {
        throw ConfigError("failed while writing '" + config.output + "'");
    }
    return config.output;
}

json oracle(const ExperimentConfig& config) {
    config.validate();
    json result = {{"scenario", to_string(config.scenario)}};
    if (is_slicing(config.scenario)) {
        const auto& sc = config.slicing;
        if (sc.demands.empty()) {
            throw ConfigError("the slicing oracle needs environment.demands");
        }
        std::vector<std::uint64_t> starts{1};
        for (const auto& ch : sc.changes) {
            if (!ch.demands.empty()) starts.push_back(ch.after_step + 1);
        }
        std::sort(starts.begin(), starts.end());
        starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
        const auto even = slicing::sra(sc);
        json phases = json::array();
        for (std::uint64_t start : starts) {
            const auto d = slicing::demands_at(sc, start);
            const auto k = slicing::water_fill_optimal(d, sc);
            const double u_opt = slicing::utility(slicing::score_analytic(k, d, sc.ideal_scores)).value;
            const double u_sra = slicing::utility(slicing::score_analytic(even, d, sc.ideal_scores)).value;
            phases.push_back({{"from_step", start},
                              {"demands", d},
                              {"optimal_allocation", k.k},
                              {"optimal_utility", u_opt},
                              {"sra_allocation", even.k},
                              {"sra_utility", u_sra},
                              {"ratio", u_opt / u_sra}});
        }
        result["phases"] = phases;
    } else {
        mec::MecEnv env(config.mec, config.seed);
        env.reset();
        const auto& topo = env.topology();
        const auto& arrivals = env.current_arrivals();
        const auto best = mec::brute_force_optimal(topo, arrivals, config.mec.action_ceiling);
        mec::JointAction all_core(topo.size(), mec::OffloadChoice::noop());
        for (std::size_t i = 0; i < topo.size(); ++i) {
            if (mec::split_task(arrivals.sizes[i], topo.servers[i].capacity, topo.tau, topo.cycles_per_bit).overflow >
                0.0) {
                all_core[i] = mec::OffloadChoice::core();
            }
        }
        result["arrivals"] = arrivals.sizes;
        result["action_count"] = mec::count_actions(topo, arrivals);
        result["optimal_action"] = choice_codes(best.action);
        result["optimal_latency"] = best.max_latency;
        result["all_core_latency"] = mec::evaluate_slot(topo, arrivals, all_core).max_latency;
        result["joint_action_space"] = mec::JointActionSpace(topo, config.mec.may_overflow()).size();
    }
    return result;
}

}  // namespace cnalloc::harness
