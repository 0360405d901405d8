// cnalloc: run experiments, print oracle values, compare runs and export CSV.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cnalloc/harness.hpp"
#include "cnalloc/kernels.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            throw cnalloc::harness::ConfigError("cannot parse '" + item + "' as a number");
        }
        out.push_back(v);
    }
    return out;
}

std::string default_csv_path(const std::string& metrics, const std::string& kind) {
    std::string base = metrics;
    if (const auto dot = base.rfind(".jsonl"); dot != std::string::npos && dot + 6 == base.size()) {
        base.resize(dot);
    }
    return base + "." + kind + ".csv";
}

}  // namespace

int main(int argc, char** argv) {
    using namespace cnalloc::harness;

    CLI::App app{"Bandwidth slicing and edge offloading experiments"};
    app.require_subcommand(1);
    std::string backend;
    app.add_option("--kernels", backend, "Kernel backend: scalar, avx2 or neon (default: best available)");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_path;

    auto* run = app.add_subcommand("run", "Run one experiment and write JSON-lines metrics");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the master seed");
    run->add_option("--out", out_path, "Override the output path");

    auto* orc = app.add_subcommand("oracle", "Print closed-form reference values for a config");
    orc->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    std::vector<std::string> files;
    std::optional<std::uint64_t> from, to;
    std::string metric = "objective";
    std::string phase;
    std::string csv_out;
    auto* cmp = app.add_subcommand("compare", "Summarize runs; the first file is the baseline");
    cmp->add_option("files", files, "Metrics files")->required()->check(CLI::ExistingFile);
    cmp->add_option("--from", from, "First step of the averaging window");
    cmp->add_option("--to", to, "Last step of the averaging window");
    cmp->add_option("--metric", metric, "objective, U, U_policy, L_max, L_opt or L_rra");
    cmp->add_option("--phase", phase, "Restrict to explore, train or eval records");
    cmp->add_option("--csv", csv_out, "Also write per-step aligned values to this CSV");

    std::string kind;
    std::string metrics_file;
    auto* plot = app.add_subcommand("plot", "Export plot-ready CSV from a metrics file");
    plot->add_option("--kind", kind, "allocation-proportions, scores-and-utility, latency-curve or epsilon-sweep")
        ->required();
    plot->add_option("file", metrics_file, "Metrics file")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", out_path, "CSV path (default: <file>.<kind>.csv)");

    std::string values = "0.1,0.3,0.5";
    auto* sweep = app.add_subcommand("sweep-epsilon", "Train once per epsilon with shared seeds and arrivals");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--values", values, "Comma-separated epsilon values");
    sweep->add_option("--seed", seed, "Override the master seed");
    sweep->add_option("--out", out_path, "Override the output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (!backend.empty()) {
            const auto b = cnalloc::kernels::parse_backend(backend);
            if (!cnalloc::kernels::backend_supported(b)) {
                throw ConfigError("kernel backend '" + backend + "' is not available on this machine");
            }
            cnalloc::kernels::set_backend(b);
        }

        if (*run || *sweep) {
            ExperimentConfig config = load_config(config_path);
            if (seed) config.seed = *seed;
            if (!out_path.empty()) config.output = out_path;
            const auto start = std::chrono::steady_clock::now();
            const std::string path = *run ? run_experiment(config) : sweep_epsilon(config, parse_values(values));
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cerr << "wrote " << path << " (" << format_number(std::round(secs * 100.0) / 100.0) << " s, kernels "
                      << cnalloc::kernels::backend_name(cnalloc::kernels::active_backend()) << ")\n";
        } else if (*orc) {
            const ExperimentConfig config = load_config(config_path);
            std::cout << oracle(config).dump(2) << '\n';
        } else if (*cmp) {
            CompareOptions options;
            options.from = from;
            options.to = to;
            options.metric = metric;
            options.phase = phase;
            std::cout << format_compare(compare(files, options));
            if (!csv_out.empty()) {
                std::ofstream csv(csv_out);
                if (!csv) throw ConfigError("cannot write '" + csv_out + "'");
                write_aligned_csv(files, options, csv);
            }
        } else if (*plot) {
            const PlotKind k = plot_kind_from_string(kind);
            const std::string path = out_path.empty() ? default_csv_path(metrics_file, kind) : out_path;
            emit_plot_data(metrics_file, k, path);
            std::cerr << "wrote " << path << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const RuntimeAbort& e) {
        std::cerr << "aborted: " << e.what() << '\n';
        return kExitAbort;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}
