// Command-line front end: one subcommand per pipeline plus `report`.
// Exit codes: 0 success, 2 config error, 3 infeasible budget, 4 pipeline
// failure.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tailor/error.hpp"
#include "tailor/experiment.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> hardware;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_pipeline(const std::string& pipeline, const CliOptions& opt) {
    tailor::bench::ExperimentConfig cfg = tailor::bench::load_experiment_file(opt.config_path);
    cfg.pipeline = pipeline;
    if (opt.seed_set) {
        cfg.seed = opt.seed;
        cfg.seeds.clear();
    }
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (!opt.hardware.empty()) cfg.hardware = opt.hardware;

    const std::vector<tailor::bench::ResultRow> rows = tailor::bench::run(cfg);
    for (const tailor::bench::ResultRow& r : rows)
        std::printf("%s: %s budget %.6g achieved %.6g accuracy %.4f (%.2fs)\n",
                    r.run_id.c_str(), r.budget_kind.c_str(), r.budget, r.achieved, r.accuracy,
                    r.wall_s);
    std::printf("results: %s/results.csv\n", cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tailor: architecture search, channel pruning, and mixed-precision "
                 "quantization against simulated hardware"};
    app.require_subcommand(1);

    CliOptions opt;
    std::string report_run_dir;
    std::string report_out_dir;

    const std::vector<std::string> pipelines = {"search", "prune", "quantize", "oracle"};
    for (const std::string& name : pipelines) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " pipeline");
        sub->add_option("--config", opt.config_path, "experiment config JSON")->required();
        sub->add_option("--seed", opt.seed, "override the config seed")
            ->each([&opt](const std::string&) { opt.seed_set = true; });
        sub->add_option("--out", opt.out_dir, "override the output directory");
        sub->add_option("--hardware", opt.hardware,
                        "override hardware profiles (builtin name or JSON file)");
    }

    CLI::App* rep = app.add_subcommand("report", "summarize a completed run directory");
    rep->add_option("run_dir", report_run_dir, "directory holding results.csv")->required();
    rep->add_option("--out", report_out_dir, "report output directory (default run_dir/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        for (const std::string& name : pipelines)
            if (app.got_subcommand(name)) return run_pipeline(name, opt);
        if (app.got_subcommand("report")) {
            const std::string out =
                report_out_dir.empty() ? report_run_dir + "/report" : report_out_dir;
            tailor::bench::report(report_run_dir, out);
            std::printf("report: %s\n", out.c_str());
            return 0;
        }
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const tailor::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const tailor::BudgetError& e) {
        std::fprintf(stderr, "infeasible budget: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pipeline failure: %s\n", e.what());
        return 4;
    }
}
