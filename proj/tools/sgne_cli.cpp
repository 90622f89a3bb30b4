// Command-line front end: generate, solve, compare, export, verify.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgne/errors.hpp"
#include "sgne/harness.hpp"

namespace fs = std::filesystem;
using namespace sgne;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfigError = 2;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> instance_seed;
    std::string instance_file;
    std::vector<std::string> algos;
    std::string out;
    std::optional<std::size_t> max_iters;
    std::optional<double> tol;
    std::string metric;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool run_flags) {
    cmd->add_option("--config", o.config, "Experiment config (YAML)")->check(CLI::ExistingFile);
    cmd->add_option("--instance", o.instance_file, "Load the instance from a saved file")->check(CLI::ExistingFile);
    cmd->add_option("--instance-seed", o.instance_seed, "Generate the instance from this seed");
    cmd->add_option("--out", o.out, "Output directory");
    if (run_flags) {
        cmd->add_option("--seed", o.seed, "Run seed (replaces the config's seed list)");
        cmd->add_option("--algo", o.algos, "Algorithm name (repeatable; replaces the config's list)");
        cmd->add_option("--max-iters", o.max_iters, "Iteration limit for every algorithm");
        cmd->add_option("--tol", o.tol, "Stopping tolerance for every algorithm");
        cmd->add_option("--metric", o.metric, "Stopping metric (rel_dist, dual_disagreement, kkt_stat, natural_residual)");
    }
}

harness::ExperimentConfig build_config(const CommonOptions& o, const std::vector<std::string>& default_algos) {
    harness::ExperimentConfig cfg;
    if (!o.config.empty()) {
        cfg = harness::load_config(o.config);
    } else {
        for (const auto& name : default_algos) {
            harness::AlgorithmEntry e;
            e.solver.algorithm = parse_algorithm(name);
            e.label = name;
            cfg.algorithms.push_back(e);
        }
    }
    if (!o.instance_file.empty()) {
        cfg.instance.file = fs::path(o.instance_file);
    } else if (o.instance_seed) {
        cfg.instance.file.reset();
        cfg.instance.seed = *o.instance_seed;
    }
    if (!o.algos.empty()) {
        std::vector<harness::AlgorithmEntry> picked;
        for (const auto& name : o.algos) {
            const Algorithm algo = parse_algorithm(name);
            bool found = false;
            for (const auto& e : cfg.algorithms)
                if (e.label == name || e.solver.algorithm == algo) {
                    picked.push_back(e);
                    found = true;
                }
            if (!found) {
                harness::AlgorithmEntry e;
                e.solver.algorithm = algo;
                e.label = name;
                picked.push_back(e);
            }
        }
        cfg.algorithms = picked;
    }
    if (o.seed)
        cfg.seeds = {*o.seed};
    if (!o.out.empty())
        cfg.output_dir = o.out;
    for (auto& e : cfg.algorithms) {
        if (o.max_iters)
            e.solver.max_iters = *o.max_iters;
        if (o.tol)
            e.solver.tol = *o.tol;
        if (!o.metric.empty())
            e.solver.stop_metric = parse_stop_metric(o.metric);
    }
    if (o.max_iters && *o.max_iters == 0)
        throw ConfigError("--max-iters: must be positive");
    if (o.tol && !(*o.tol > 0.0))
        throw ConfigError("--tol: must be positive");
    cfg.validate();
    return cfg;
}

void print_comparison(const harness::ExperimentResult& result, double accuracy) {
    std::cout << "calls to rel_dist < " << accuracy << ":\n";
    for (const auto& row : result.comparison) {
        std::cout << "  " << std::left << std::setw(28) << row.label << ' ';
        if (row.mean_calls)
            std::cout << "mean " << *row.mean_calls << " (" << row.cells_reached << "/" << row.cells << " cells)";
        else
            std::cout << "not reached (0/" << row.cells << " cells)";
        std::cout << ", total calls " << row.mean_total_calls << ", wall " << row.mean_wall_ns * 1e-9 << " s\n";
    }
}

int report_cells(const harness::ExperimentResult& result) {
    for (const auto& c : result.cells)
        if (!c.ok)
            std::cerr << "cell " << c.label << " seed " << c.seed << " failed: " << c.message << '\n';
    std::cout << "instance " << result.instance_hash << (result.reference_cache_hit ? " (cached reference)" : "")
              << ", " << result.cells.size() - result.failed_cells() << "/" << result.cells.size()
              << " cells ok, summary " << result.summary_path.string() << '\n';
    return result.failed_cells() == 0 ? kOk : kPartial;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed stochastic Nash equilibrium seeking on networked Cournot markets"};
    app.require_subcommand(1);

    CommonOptions gen_o, solve_o, cmp_o, verify_o;
    std::optional<std::uint64_t> gen_seed;
    auto* gen = app.add_subcommand("generate", "Write a benchmark instance file");
    gen->add_option("--config", gen_o.config, "Experiment config (YAML)")->check(CLI::ExistingFile);
    gen->add_option("--seed", gen_seed, "Instance seed");
    gen->add_option("--out", gen_o.out, "Output directory");

    auto* solve = app.add_subcommand("solve", "Run algorithms over seeds and write per-run CSVs");
    add_common(solve, solve_o, true);

    std::vector<double> grid;
    auto* compare = app.add_subcommand("compare", "Run the FB / FBF / EG comparison");
    add_common(compare, cmp_o, true);
    compare->add_option("--grid", grid, "Step-scale factors to grid-search per algorithm")->delimiter(',');

    std::string export_dir, export_metric = "rel_dist", export_file;
    auto* exp = app.add_subcommand("export", "Long-format plot data from an experiment directory");
    exp->add_option("--out", export_dir, "Experiment directory")->required();
    exp->add_option("--metric", export_metric, "Metric column");
    exp->add_option("--file", export_file, "Output file (default <dir>/plot_<metric>.csv)");

    std::size_t pairs = 1000;
    auto* verify = app.add_subcommand("verify", "Run the operator property suite against an instance");
    add_common(verify, verify_o, false);
    verify->add_option("--pairs", pairs, "Random pairs per property");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (gen->parsed()) {
            harness::ExperimentConfig cfg;
            if (!gen_o.config.empty())
                cfg = harness::load_config(gen_o.config);
            if (gen_seed) {
                cfg.instance.file.reset();
                cfg.instance.seed = *gen_seed;
            }
            const fs::path out = gen_o.out.empty() ? fs::path(".") : fs::path(gen_o.out);
            fs::create_directories(out);
            const auto inst = harness::load_instance(cfg.instance);
            harness::save_instance(inst, out / "instance.json");
            std::ofstream(out / "edges.txt") << format_edge_list(inst.edges);
            std::cout << "instance " << cournot::instance_hash(inst) << " written to " << (out / "instance.json").string()
                      << '\n';
            return kOk;
        }
        if (solve->parsed()) {
            if (solve_o.config.empty() && solve_o.algos.empty())
                throw ConfigError("solve: give --config or at least one --algo");
            const auto cfg = build_config(solve_o, {});
            const auto result = harness::run_experiment(cfg);
            return report_cells(result);
        }
        if (compare->parsed()) {
            const auto cfg = build_config(cmp_o, {"stoch_fb_saa", "fbf", "eg"});
            const auto result = harness::run_experiment(cfg);
            print_comparison(result, cfg.comparison_accuracy);
            if (!grid.empty()) {
                const auto inst = harness::load_instance(cfg.instance);
                const auto game = cournot::make_game(inst);
                const auto graph = cournot::make_graph(inst);
                std::ofstream out(cfg.output_dir / "grid.csv");
                out << "label,scale,aborted,final_rel_dist,calls_to_accuracy\n";
                for (const auto& e : cfg.algorithms) {
                    const auto points = harness::grid_search(e, game, graph, *result.reference, grid,
                                                             cfg.seeds.front(), cfg.comparison_accuracy);
                    for (const auto& p : points)
                        out << e.label << ',' << harness::format_double(p.scale) << ',' << p.aborted << ','
                            << harness::format_double(p.final_rel_dist) << ','
                            << (p.calls_to_accuracy ? std::to_string(*p.calls_to_accuracy) : "") << '\n';
                }
                std::cout << "grid written to " << (cfg.output_dir / "grid.csv").string() << '\n';
            }
            return report_cells(result);
        }
        if (exp->parsed()) {
            const auto runs = harness::load_runs(export_dir);
            const fs::path file =
                export_file.empty() ? fs::path(export_dir) / ("plot_" + export_metric + ".csv") : fs::path(export_file);
            std::ostringstream buffer;
            harness::export_plot_data(buffer, runs, export_metric);
            std::ofstream out(file);
            out << buffer.str();
            if (!out)
                throw std::runtime_error("cannot write " + file.string());
            std::cout << runs.size() << " runs exported to " << file.string() << '\n';
            return kOk;
        }
        if (verify->parsed()) {
            const auto cfg = build_config(verify_o, {"det_fb"});
            const auto inst = harness::load_instance(cfg.instance);
            const auto game = cournot::make_game(inst);
            const auto graph = cournot::make_graph(inst);
            harness::PropertyOptions opts;
            opts.pairs = pairs;
            bool all = true;
            for (const auto& r : harness::run_property_suite(game, graph, opts)) {
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
                all = all && r.passed;
            }
            return all ? kOk : kPartial;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPartial;
    }
    return kOk;
}
