#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cnalloc/harness.hpp"

using namespace cnalloc;
using namespace cnalloc::harness;

namespace {

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "cnalloc_harness_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_td3(std::size_t steps) {
    auto c = ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::td3);
    c.total_steps = steps;
    c.exploration_steps = 10;
    c.td3.actor_hidden = {16};
    c.td3.critic_hidden = {16};
    c.td3.batch_size = 8;
    c.td3.total_steps = steps;
    c.td3.exploration_steps = c.exploration_steps;
    return c;
}

ExperimentConfig small_dqn(std::size_t steps) {
    auto c = ExperimentConfig::defaults(Scenario::mec, Policy::dqn);
    c.total_steps = steps;
    c.exploration_steps = 20;
    c.eval_slots = 5;
    c.dqn.hidden = {16};
    c.dqn.batch_size = 8;
    c.dqn.target_sync_period = 10;
    c.dqn.total_steps = steps;
    c.dqn.exploration_steps = c.exploration_steps;
    return c;
}

std::vector<std::string> lines_of(const ExperimentConfig& c) {
    std::vector<std::string> out;
    simulate(c, [&](const MetricsRecord& r) { out.push_back(to_jsonl_line(r)); });
    return out;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("policy and scenario names") {
    for (auto p : {Policy::td3, Policy::dqn, Policy::sra, Policy::rra, Policy::optimal}) {
        CHECK(policy_from_string(to_string(p)) == p);
    }
    for (auto s : {Scenario::slicing_analytic, Scenario::slicing_emulated, Scenario::mec}) {
        CHECK(scenario_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(policy_from_string("ppo"), ConfigError);
    CHECK_THROWS_AS(plot_kind_from_string("histogram"), ConfigError);
}

TEST_CASE("incompatible or invalid configs are rejected") {
    auto c = ExperimentConfig::defaults(Scenario::mec, Policy::td3);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::rra);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_td3(10);
    c.exploration_steps = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"scenario", "mec"}, {"policy", "sra"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"policy", "sra"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"scenario", "slicing-analytic"}, {"agent", {{"tau", 2.0}}}}),
                    ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    c = small_td3(20);
    c.output.clear();
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("configs round-trip through JSON") {
    for (const auto& c : {small_td3(50), small_dqn(50)}) {
        const auto j = to_json(c);
        const auto back = config_from_json(nlohmann::json::parse(j.dump()));
        CHECK(to_json(back) == j);
    }
}

TEST_CASE("records round-trip through JSON lines") {
    std::vector<MetricsRecord> records;
    simulate(small_td3(30), [&](const MetricsRecord& r) { records.push_back(r); });
    simulate(small_dqn(40), [&](const MetricsRecord& r) { records.push_back(r); });
    std::stringstream ss;
    for (const auto& r : records) ss << to_jsonl_line(r) << '\n';
    const auto back = read_metrics(ss);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == records[i]);
}

TEST_CASE("runs are reproducible") {
    CHECK(lines_of(small_td3(60)) == lines_of(small_td3(60)));
    CHECK(lines_of(small_dqn(60)) == lines_of(small_dqn(60)));
    auto other = small_td3(60);
    other.seed = 2;
    CHECK(lines_of(other) != lines_of(small_td3(60)));

    const auto dir = scratch_dir();
    auto c = small_dqn(40);
    c.output = (dir / "repeat_a.jsonl").string();
    run_experiment(c);
    c.output = (dir / "repeat_b.jsonl").string();
    run_experiment(c);
    CHECK(slurp((dir / "repeat_a.jsonl").string()) == slurp((dir / "repeat_b.jsonl").string()));
}

TEST_CASE("a shorter run is a prefix of a longer one") {
    const auto long_run = lines_of(small_td3(80));
    const auto short_run = lines_of(small_td3(50));
    REQUIRE(short_run.size() == 50);
    for (std::size_t i = 0; i < short_run.size(); ++i) CHECK(short_run[i] == long_run[i]);

    auto a = small_dqn(60);
    auto b = small_dqn(40);
    a.eval_slots = b.eval_slots = 0;
    const auto la = lines_of(a);
    const auto lb = lines_of(b);
    for (std::size_t i = 0; i < lb.size(); ++i) CHECK(lb[i] == la[i]);
}

TEST_CASE("slicing records") {
    std::vector<MetricsRecord> rs;
    simulate(small_td3(30), [&](const MetricsRecord& r) { rs.push_back(r); });
    REQUIRE(rs.size() == 30);
    CHECK(rs[0].phase == "explore");
    CHECK(rs[10].phase == "train");
    CHECK_FALSE(rs[5].critic_loss.has_value());
    CHECK(rs[29].critic_loss.has_value());
    for (const auto& r : rs) {
        CHECK(r.utility_policy.has_value());
        CHECK(r.action.size() == 3);
        double total = 0.0;
        for (double k : r.allocation) total += k;
        CHECK(total <= 1.5 + 1e-12);
    }
}

TEST_CASE("mec records") {
    std::vector<MetricsRecord> rs;
    simulate(small_dqn(40), [&](const MetricsRecord& r) { rs.push_back(r); });
    REQUIRE(rs.size() == 45);
    CHECK(rs[39].phase == "train");
    CHECK(rs[40].phase == "eval");
    CHECK(rs[44].optimal_latency.has_value());
    CHECK(rs[44].rra_latency.has_value());
    for (const auto& r : rs) {
        CHECK(r.choices.size() == 7);
        CHECK(r.max_latency == *std::max_element(r.latency.begin(), r.latency.end()));
        if (r.optimal_latency) CHECK(*r.optimal_latency <= r.max_latency);
    }
}

TEST_CASE("compare reproduces the closed-form utility ratios") {
    const auto dir = scratch_dir();
    auto opt = ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::optimal);
    opt.output = (dir / "optimal.jsonl").string();
    auto even = ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::sra);
    even.output = (dir / "sra.jsonl").string();
    run_experiment(opt);
    run_experiment(even);

    CompareOptions pre;
    pre.from = 3800;
    pre.to = 4000;
    auto rows = compare({even.output, opt.output}, pre);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ratio == 1.0);
    CHECK(std::abs(rows[1].ratio - 2.0965) < 1e-3);
    CHECK(rows[1].policy == "optimal");

    CompareOptions post;
    post.from = 7600;
    post.to = 8000;
    rows = compare({even.output, opt.output}, post);
    CHECK(std::abs(rows[1].ratio - 1.9092) < 1e-3);

    rows = compare({opt.output, opt.output});
    CHECK(rows[1].ratio == 1.0);
    CHECK(rows[0].window_from == 7601);
    CHECK(rows[0].window_to == 8000);
    CHECK_FALSE(format_compare(rows).empty());

    std::ostringstream csv;
    write_aligned_csv({even.output, opt.output}, pre, csv);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "step,sra,optimal");

    CompareOptions bad;
    bad.metric = "throughput";
    CHECK_THROWS_AS(compare({opt.output}, bad), ConfigError);
}

TEST_CASE("plot data") {
    std::vector<MetricsRecord> even;
    auto c = ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::sra);
    c.total_steps = 20;
    c.exploration_steps = 0;
    simulate(c, [&](const MetricsRecord& r) { even.push_back(r); });
    std::ostringstream out;
    emit_plot_data(even, PlotKind::allocation_proportions, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,k1_over_B,k2_over_B,k3_over_B");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        const auto first = line.find(',');
        std::istringstream fields(line.substr(first + 1));
        std::string v;
        while (std::getline(fields, v, ',')) CHECK(std::stod(v) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    CHECK(rows == 20);

    std::ostringstream empty;
    emit_plot_data(std::vector<MetricsRecord>{}, PlotKind::scores_and_utility, empty);
    CHECK(empty.str() == "step,U\n");
    std::ostringstream empty_sweep;
    emit_plot_data(std::vector<MetricsRecord>{}, PlotKind::epsilon_sweep, empty_sweep);
    CHECK(empty_sweep.str() == "slot\n");

    std::vector<MetricsRecord> mec;
    simulate(small_dqn(30), [&](const MetricsRecord& r) { mec.push_back(r); });
    std::ostringstream lat;
    emit_plot_data(mec, PlotKind::latency_curve, lat);
    CHECK(lat.str().rfind("slot,phase,L_max,L_max_avg100,L1,", 0) == 0);
}

TEST_CASE("epsilon sweep writes one series per value with shared arrivals") {
    const auto dir = scratch_dir();
    auto c = small_dqn(30);
    c.eval_slots = 0;
    c.output = (dir / "sweep.jsonl").string();
    sweep_epsilon(c, {0.1, 0.5});
    const auto records = read_metrics(c.output);
    REQUIRE(records.size() == 60);
    CHECK(*records[0].epsilon == 0.1);
    CHECK(*records[30].epsilon == 0.5);
    std::ostringstream out;
    emit_plot_data(records, PlotKind::epsilon_sweep, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "slot,L_max_eps_0.1,L_max_eps_0.5");
    // Exploration slots are uniform draws from the same stream, so the curves coincide there.
    for (std::size_t i = 0; i < 20; ++i) CHECK(records[i].max_latency == records[30 + i].max_latency);

    auto wrong = small_td3(20);
    wrong.output = c.output;
    CHECK_THROWS_AS(sweep_epsilon(wrong, {0.1}), ConfigError);
}

TEST_CASE("oracle output") {
    const auto s = oracle(ExperimentConfig::defaults(Scenario::slicing_analytic, Policy::td3));
    REQUIRE(s.at("phases").size() == 2);
    CHECK(s["phases"][0]["optimal_utility"].get<double>() == doctest::Approx(1.8250538).epsilon(1e-7));
    CHECK(s["phases"][1]["sra_utility"].get<double>() == doctest::Approx(1.1946113).epsilon(1e-7));
    CHECK(s["phases"][1]["from_step"] == 4001);

    auto c = ExperimentConfig::defaults(Scenario::mec, Policy::dqn);
    c.mec = mec::MecConfig::small_fixed_default();
    const auto m = oracle(c);
    CHECK(m["action_count"] == 64);
    CHECK(m["optimal_latency"].get<double>() == doctest::Approx(0.175).epsilon(1e-12));
    CHECK(m["all_core_latency"].get<double>() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(m["optimal_action"] == nlohmann::json{3, -1, -1, -2});
}

TEST_CASE("numbers print in shortest round-trip form") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

}
