#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/datagen.hpp"

namespace tailor::bench {

// One completed pipeline run. `achieved` and `budget` share the budget
// kind's unit (MACs, seconds, joules, or bits); constrained pipelines
// guarantee achieved <= budget. `wall_s` is measured wall time and is the
// only field exempt from bit-reproducibility.
struct ResultRow {
    std::string run_id;
    std::string pipeline;
    std::string hardware;
    std::string budget_kind;
    double budget = 0.0;
    double achieved = 0.0;
    double accuracy = 0.0;
    double wall_s = 0.0;
    std::uint64_t seed = 0;
};

struct SearchParams {
    int blocks = 3;
    int width = 4;              // block channels behind the stem
    double lat_ref = 1e-4;      // latency target, seconds
    double penalty_a = 1.0;
    double penalty_b = 2.0;
    int epochs = 40;
    int warmup_epochs = 20;
    int batch = 16;
    double weight_lr = 0.1;
    double alpha_lr = 0.3;
    int final_epochs = 30;      // budget for training the derived network
};

struct OracleParams {
    int epochs = 8;
    int batch = 16;
    double lr = 0.05;
    int cap = 512;
};

struct NetParams {
    std::string preset = "conv";  // "conv" (with depthwise) or "mlp"
    int width = 8;
};

struct TrainParams {
    int epochs = 40;
    int batch = 16;
    double lr = 0.1;
};

struct PruneParams {
    std::string budget_kind = "macs";  // "macs" or "latency"
    double fraction = 0.5;             // of the unpruned MACs (kind = macs)
    double latency_s = 0.0;            // absolute seconds (kind = latency)
    int episodes = 40;
    int finetune_epochs = 2;
    double finetune_lr = 0.05;
    int finetune_batch = 16;
};

struct QuantizeParams {
    std::string budget_kind = "latency";  // "latency", "energy", "model_size"
    double fraction = 0.7;                // of the all-8-bit cost when limit == 0
    double limit = 0.0;                   // absolute unit of the kind
    int episodes = 40;
    int finetune_epochs = 1;
    double finetune_lr = 0.05;
    int finetune_batch = 16;
};

// Everything a pipeline needs, loadable from a strict JSON file: unknown
// keys anywhere are rejected (ConfigError), so a typo cannot silently fall
// back to a default.
struct ExperimentConfig {
    std::string pipeline;                 // search | prune | quantize | oracle
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;     // optional; defaults to {seed}
    std::string out_dir = "runs";
    std::vector<std::string> hardware = {"edge"};  // builtin names or file paths
    DataSpec dataset;
    SearchParams search;
    OracleParams oracle;
    NetParams net;
    TrainParams train;
    PruneParams prune;
    QuantizeParams quantize;
    std::string raw;                      // verbatim file text when loaded
};

// Parses and validates; ConfigError on unreadable files, malformed JSON,
// unknown keys, missing mandatory keys (pipeline, seed), or bad values.
ExperimentConfig load_experiment_file(const std::string& path);

// Shared classifier presets used by the prune and quantize pipelines.
// "mlp": dense -> relu -> dense -> relu -> dense head.
// "conv": pointwise -> relu -> depthwise -> relu -> pointwise -> relu ->
//         dense head (an inverted-bottleneck cell over the image).
nn::NetSpec preset_network(const std::string& preset, int width, const DataSpec& data_spec);

// Executes the configured pipeline once per seed and per hardware profile.
// Each run writes its artifacts (config copy, policies, logs) under
// out_dir/<run_id>/ and all rows land in out_dir/results.csv. Errors from
// pipelines propagate with the run id prefixed.
std::vector<ResultRow> run(const ExperimentConfig& cfg);

// Results CSV, schema v1:
//   run_id,pipeline,hardware,budget_kind,budget,achieved,accuracy,wall_s,seed
void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);

// Reads a completed run directory (never mutating it) and writes into
// report_dir: summary.md (one table row per result), an accuracy-vs-latency
// frontier CSV per hardware profile sorted ascending by latency, and a copy
// of each run's per-layer roofline scatter data. Throws ConfigError when
// run_dir holds no results.
void report(const std::string& run_dir, const std::string& report_dir);

}  // namespace tailor::bench
