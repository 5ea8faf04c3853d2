#include "tailor/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tailor/arch_search.hpp"
#include "tailor/error.hpp"
#include "tailor/hardware.hpp"
#include "tailor/latency.hpp"
#include "tailor/prune.hpp"
#include "tailor/quantize.hpp"
#include "tailor/search_space.hpp"
#include "tailor/supernet.hpp"

namespace tailor::bench {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing (strict: unknown keys anywhere are rejected)
// ---------------------------------------------------------------------------

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed) known |= item.key() == k;
        if (!known)
            throw ConfigError(std::string("unknown key \"") + item.key() + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
    }
}

DataSpec parse_dataset(const json& j) {
    check_keys(j, "dataset", {"n", "classes", "channels", "image_size", "difficulty", "seed"});
    if (!j.contains("n") || !j.contains("classes"))
        throw ConfigError("dataset requires \"n\" and \"classes\"");
    DataSpec d;
    d.n = get_or<int>(j, "n", 0);
    d.classes = get_or<int>(j, "classes", 0);
    d.channels = get_or<int>(j, "channels", d.channels);
    d.image_size = get_or<int>(j, "image_size", d.image_size);
    d.difficulty = get_or<double>(j, "difficulty", d.difficulty);
    d.seed = get_or<std::uint64_t>(j, "seed", d.seed);
    return d;
}

SearchParams parse_search(const json& j) {
    check_keys(j, "search",
               {"blocks", "width", "lat_ref", "penalty_a", "penalty_b", "epochs",
                "warmup_epochs", "batch", "weight_lr", "alpha_lr", "final_epochs"});
    SearchParams s;
    s.blocks = get_or<int>(j, "blocks", s.blocks);
    s.width = get_or<int>(j, "width", s.width);
    s.lat_ref = get_or<double>(j, "lat_ref", s.lat_ref);
    s.penalty_a = get_or<double>(j, "penalty_a", s.penalty_a);
    s.penalty_b = get_or<double>(j, "penalty_b", s.penalty_b);
    s.epochs = get_or<int>(j, "epochs", s.epochs);
    s.warmup_epochs = get_or<int>(j, "warmup_epochs", s.warmup_epochs);
    s.batch = get_or<int>(j, "batch", s.batch);
    s.weight_lr = get_or<double>(j, "weight_lr", s.weight_lr);
    s.alpha_lr = get_or<double>(j, "alpha_lr", s.alpha_lr);
    s.final_epochs = get_or<int>(j, "final_epochs", s.final_epochs);
    return s;
}

OracleParams parse_oracle(const json& j) {
    check_keys(j, "oracle", {"epochs", "batch", "lr", "cap"});
    OracleParams o;
    o.epochs = get_or<int>(j, "epochs", o.epochs);
    o.batch = get_or<int>(j, "batch", o.batch);
    o.lr = get_or<double>(j, "lr", o.lr);
    o.cap = get_or<int>(j, "cap", o.cap);
    return o;
}

NetParams parse_net(const json& j) {
    check_keys(j, "net", {"preset", "width"});
    NetParams n;
    n.preset = get_or<std::string>(j, "preset", n.preset);
    n.width = get_or<int>(j, "width", n.width);
    return n;
}

TrainParams parse_train(const json& j) {
    check_keys(j, "train", {"epochs", "batch", "lr"});
    TrainParams t;
    t.epochs = get_or<int>(j, "epochs", t.epochs);
    t.batch = get_or<int>(j, "batch", t.batch);
    t.lr = get_or<double>(j, "lr", t.lr);
    return t;
}

PruneParams parse_prune(const json& j) {
    check_keys(j, "prune",
               {"budget_kind", "fraction", "latency_s", "episodes", "finetune_epochs",
                "finetune_lr", "finetune_batch"});
    PruneParams p;
    p.budget_kind = get_or<std::string>(j, "budget_kind", p.budget_kind);
    p.fraction = get_or<double>(j, "fraction", p.fraction);
    p.latency_s = get_or<double>(j, "latency_s", p.latency_s);
    p.episodes = get_or<int>(j, "episodes", p.episodes);
    p.finetune_epochs = get_or<int>(j, "finetune_epochs", p.finetune_epochs);
    p.finetune_lr = get_or<double>(j, "finetune_lr", p.finetune_lr);
    p.finetune_batch = get_or<int>(j, "finetune_batch", p.finetune_batch);
    return p;
}

QuantizeParams parse_quantize(const json& j) {
    check_keys(j, "quantize",
               {"budget_kind", "fraction", "limit", "episodes", "finetune_epochs",
                "finetune_lr", "finetune_batch"});
    QuantizeParams q;
    q.budget_kind = get_or<std::string>(j, "budget_kind", q.budget_kind);
    q.fraction = get_or<double>(j, "fraction", q.fraction);
    q.limit = get_or<double>(j, "limit", q.limit);
    q.episodes = get_or<int>(j, "episodes", q.episodes);
    q.finetune_epochs = get_or<int>(j, "finetune_epochs", q.finetune_epochs);
    q.finetune_lr = get_or<double>(j, "finetune_lr", q.finetune_lr);
    q.finetune_batch = get_or<int>(j, "finetune_batch", q.finetune_batch);
    return q;
}

void validate_config(const ExperimentConfig& cfg) {
    const bool known = cfg.pipeline == "search" || cfg.pipeline == "prune" ||
                       cfg.pipeline == "quantize" || cfg.pipeline == "oracle";
    if (!known)
        throw ConfigError("pipeline must be one of search, prune, quantize, oracle; got \"" +
                          cfg.pipeline + "\"");
    if (cfg.hardware.empty()) throw ConfigError("at least one hardware profile is required");
    if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (cfg.pipeline == "prune") {
        if (cfg.prune.budget_kind != "macs" && cfg.prune.budget_kind != "latency")
            throw ConfigError("prune.budget_kind must be macs or latency");
        if (cfg.prune.budget_kind == "macs" &&
            !(cfg.prune.fraction > 0.0 && cfg.prune.fraction <= 1.0))
            throw ConfigError("prune.fraction must lie in (0, 1]");
        if (cfg.prune.budget_kind == "latency" && !(cfg.prune.latency_s > 0.0))
            throw ConfigError("prune.latency_s must be positive");
        if (cfg.prune.episodes < 1) throw ConfigError("prune.episodes must be >= 1");
    }
    if (cfg.pipeline == "quantize") {
        const std::string& k = cfg.quantize.budget_kind;
        if (k != "latency" && k != "energy" && k != "model_size")
            throw ConfigError("quantize.budget_kind must be latency, energy, or model_size");
        if (cfg.quantize.limit < 0.0) throw ConfigError("quantize.limit must be >= 0");
        if (cfg.quantize.limit == 0.0 &&
            !(cfg.quantize.fraction > 0.0 && cfg.quantize.fraction <= 1.0))
            throw ConfigError("quantize.fraction must lie in (0, 1]");
        if (cfg.quantize.episodes < 1) throw ConfigError("quantize.episodes must be >= 1");
    }
    if (cfg.pipeline == "search" || cfg.pipeline == "oracle") {
        if (cfg.search.blocks < 1) throw ConfigError("search.blocks must be >= 1");
        if (cfg.search.width < 1) throw ConfigError("search.width must be >= 1");
        if (!(cfg.search.lat_ref > 0.0)) throw ConfigError("search.lat_ref must be positive");
    }
    if (cfg.net.preset != "conv" && cfg.net.preset != "mlp")
        throw ConfigError("net.preset must be conv or mlp");
    if (cfg.net.width < 1) throw ConfigError("net.width must be >= 1");
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["pipeline"] = cfg.pipeline;
    j["seed"] = cfg.seed;
    if (!cfg.seeds.empty()) j["seeds"] = cfg.seeds;
    j["out_dir"] = cfg.out_dir;
    j["hardware"] = cfg.hardware;
    j["dataset"] = {{"n", cfg.dataset.n},
                    {"classes", cfg.dataset.classes},
                    {"channels", cfg.dataset.channels},
                    {"image_size", cfg.dataset.image_size},
                    {"difficulty", cfg.dataset.difficulty},
                    {"seed", cfg.dataset.seed}};
    j["search"] = {{"blocks", cfg.search.blocks},
                   {"width", cfg.search.width},
                   {"lat_ref", cfg.search.lat_ref},
                   {"penalty_a", cfg.search.penalty_a},
                   {"penalty_b", cfg.search.penalty_b},
                   {"epochs", cfg.search.epochs},
                   {"warmup_epochs", cfg.search.warmup_epochs},
                   {"batch", cfg.search.batch},
                   {"weight_lr", cfg.search.weight_lr},
                   {"alpha_lr", cfg.search.alpha_lr},
                   {"final_epochs", cfg.search.final_epochs}};
    j["oracle"] = {{"epochs", cfg.oracle.epochs},
                   {"batch", cfg.oracle.batch},
                   {"lr", cfg.oracle.lr},
                   {"cap", cfg.oracle.cap}};
    j["net"] = {{"preset", cfg.net.preset}, {"width", cfg.net.width}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch", cfg.train.batch},
                  {"lr", cfg.train.lr}};
    j["prune"] = {{"budget_kind", cfg.prune.budget_kind},
                  {"fraction", cfg.prune.fraction},
                  {"latency_s", cfg.prune.latency_s},
                  {"episodes", cfg.prune.episodes},
                  {"finetune_epochs", cfg.prune.finetune_epochs},
                  {"finetune_lr", cfg.prune.finetune_lr},
                  {"finetune_batch", cfg.prune.finetune_batch}};
    j["quantize"] = {{"budget_kind", cfg.quantize.budget_kind},
                     {"fraction", cfg.quantize.fraction},
                     {"limit", cfg.quantize.limit},
                     {"episodes", cfg.quantize.episodes},
                     {"finetune_epochs", cfg.quantize.finetune_epochs},
                     {"finetune_lr", cfg.quantize.finetune_lr},
                     {"finetune_batch", cfg.quantize.finetune_batch}};
    return j;
}

// ---------------------------------------------------------------------------
// Pipeline plumbing
// ---------------------------------------------------------------------------

hw::HardwareSpec resolve_hardware(const std::string& name_or_path) {
    if (name_or_path == "edge" || name_or_path == "cloud" || name_or_path == "spatial")
        return hw::builtin_profile(name_or_path);
    return hw::load_hardware_file(name_or_path);
}

std::string hardware_token(const std::string& name_or_path) {
    if (name_or_path == "edge" || name_or_path == "cloud" || name_or_path == "spatial")
        return name_or_path;
    return fs::path(name_or_path).stem().string();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct RunContext {
    const ExperimentConfig& cfg;
    std::string run_id;
    fs::path dir;            // out_dir / run_id
    std::uint64_t seed = 0;
    std::string hw_name;     // config token (name or path)
};

nn::TrainConfig base_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    nn::TrainConfig tc;
    tc.epochs = cfg.train.epochs;
    tc.batch = cfg.train.batch;
    tc.lr = cfg.train.lr;
    tc.seed = seed;
    return tc;
}

ResultRow run_search(const RunContext& ctx, const nn::Dataset& data) {
    const ExperimentConfig& cfg = ctx.cfg;
    const nn::SearchSpace space = nn::make_space(cfg.search.blocks, cfg.search.width,
                                                 cfg.dataset.image_size, cfg.dataset.image_size);
    const hw::HardwareSpec hw = resolve_hardware(ctx.hw_name);
    const hw::LatencyTable table = hw::synthesize_latency_table(space, hw);

    arch::SearchConfig sc;
    sc.a = cfg.search.penalty_a;
    sc.b = cfg.search.penalty_b;
    sc.lat_ref = cfg.search.lat_ref;
    sc.epochs = cfg.search.epochs;
    sc.batch = cfg.search.batch;
    sc.warmup_epochs = cfg.search.warmup_epochs;
    sc.weight_lr = cfg.search.weight_lr;
    sc.alpha_lr = cfg.search.alpha_lr;
    sc.seed = ctx.seed;
    const arch::SearchResult res = arch::search(space, data, hw, table, sc);

    arch::save_arch_file(res.arch, (ctx.dir / "arch.txt").string());
    std::ofstream log(ctx.dir / "log.csv");
    log << "epoch,train_ce,arch_loss,expected_latency_s\n";
    for (const arch::SearchLogEntry& e : res.log)
        log << e.epoch << ',' << format_double(e.train_ce) << ',' << format_double(e.arch_loss)
            << ',' << format_double(e.expected_latency_s) << '\n';

    const nn::NetSpec realized = arch::realize_network(space, res.arch.ops,
                                                       cfg.dataset.channels,
                                                       cfg.dataset.classes);
    nn::TrainConfig tc;
    tc.epochs = cfg.search.final_epochs;
    tc.batch = cfg.search.batch;
    tc.lr = cfg.search.weight_lr;
    tc.seed = ctx.seed;
    const nn::TrainResult trained = nn::train_sgd(realized, data, tc);

    ResultRow row;
    row.budget_kind = "latency";
    row.budget = cfg.search.lat_ref;
    row.achieved = arch::arch_latency(space, res.arch.ops, table);
    row.accuracy = trained.val_accuracy;
    return row;
}

ResultRow run_oracle(const RunContext& ctx, const nn::Dataset& data) {
    const ExperimentConfig& cfg = ctx.cfg;
    const nn::SearchSpace space = nn::make_space(cfg.search.blocks, cfg.search.width,
                                                 cfg.dataset.image_size, cfg.dataset.image_size);
    const hw::HardwareSpec hw = resolve_hardware(ctx.hw_name);
    const hw::LatencyTable table = hw::synthesize_latency_table(space, hw);

    arch::FrontierConfig fc;
    fc.epochs = cfg.oracle.epochs;
    fc.batch = cfg.oracle.batch;
    fc.lr = cfg.oracle.lr;
    fc.seed = ctx.seed;
    fc.cap = cfg.oracle.cap;
    fc.threads = 1;
    const std::vector<arch::FrontierEntry> frontier =
        arch::brute_force_frontier(space, data, table, fc);

    std::ofstream out(ctx.dir / "frontier.csv");
    out << "ops,accuracy,latency_s,pareto\n";
    for (const arch::FrontierEntry& e : frontier) {
        std::string ops;
        for (std::size_t i = 0; i < e.ops.size(); ++i) {
            if (i) ops += '+';
            ops += e.ops[i];
        }
        out << ops << ',' << format_double(e.accuracy) << ',' << format_double(e.latency_s)
            << ',' << (e.pareto ? 1 : 0) << '\n';
    }

    const arch::FrontierEntry* best = nullptr;
    for (const arch::FrontierEntry& e : frontier)
        if (!best || e.accuracy > best->accuracy) best = &e;

    ResultRow row;
    row.budget_kind = "none";
    row.budget = 0.0;
    row.achieved = best ? best->latency_s : 0.0;
    row.accuracy = best ? best->accuracy : 0.0;
    return row;
}

ResultRow run_prune(const RunContext& ctx, const nn::Dataset& data) {
    const ExperimentConfig& cfg = ctx.cfg;
    const nn::NetSpec spec = preset_network(cfg.net.preset, cfg.net.width, cfg.dataset);
    const nn::TrainResult base = nn::train_sgd(spec, data, base_train_config(cfg, ctx.seed));

    prune::PruneBudget budget;
    if (cfg.prune.budget_kind == "macs") {
        budget.kind = prune::BudgetKind::macs;
        budget.macs_fraction = cfg.prune.fraction;
    } else {
        budget.kind = prune::BudgetKind::latency;
        budget.latency_s = cfg.prune.latency_s;
        budget.hardware = resolve_hardware(ctx.hw_name);
    }

    prune::PruneSearchConfig pc;
    pc.episodes = cfg.prune.episodes;
    pc.finetune_epochs = cfg.prune.finetune_epochs;
    pc.finetune_lr = cfg.prune.finetune_lr;
    pc.finetune_batch = cfg.prune.finetune_batch;
    pc.seed = ctx.seed;
    const prune::PruneResult res = prune::amc_search(base.net, data, budget, pc);

    prune::save_policy_file(res.policy, (ctx.dir / "policy.txt").string());
    std::ofstream log(ctx.dir / "episodes.csv");
    log << "episode,reward,cost,feasible\n";
    for (const prune::PruneEpisode& e : res.log)
        log << e.episode << ',' << format_double(e.reward) << ',' << format_double(e.cost)
            << ',' << (e.feasible ? 1 : 0) << '\n';

    ResultRow row;
    row.budget_kind = cfg.prune.budget_kind;
    row.budget = prune::budget_limit(spec, budget);
    row.achieved = prune::policy_cost(spec, res.policy, budget);
    row.accuracy = res.best_accuracy;
    return row;
}

ResultRow run_quantize(const RunContext& ctx, const nn::Dataset& data) {
    const ExperimentConfig& cfg = ctx.cfg;
    const nn::NetSpec spec = preset_network(cfg.net.preset, cfg.net.width, cfg.dataset);
    const nn::TrainResult base = nn::train_sgd(spec, data, base_train_config(cfg, ctx.seed));
    const hw::HardwareSpec hw = resolve_hardware(ctx.hw_name);

    quant::CostKind kind = quant::CostKind::latency;
    if (cfg.quantize.budget_kind == "energy") kind = quant::CostKind::energy;
    if (cfg.quantize.budget_kind == "model_size") kind = quant::CostKind::model_size;
    const BitwidthPolicy all8 = BitwidthPolicy::uniform(spec, 8);
    const double limit = cfg.quantize.limit > 0.0
                             ? cfg.quantize.limit
                             : cfg.quantize.fraction * quant::policy_cost(spec, all8, hw, kind);
    const quant::Budget budget{kind, limit};

    quant::QuantSearchConfig qc;
    qc.episodes = cfg.quantize.episodes;
    qc.finetune_epochs = cfg.quantize.finetune_epochs;
    qc.finetune_lr = cfg.quantize.finetune_lr;
    qc.finetune_batch = cfg.quantize.finetune_batch;
    qc.seed = ctx.seed;
    qc.agent_checkpoint = (ctx.dir / "agent.bin").string();
    const quant::QuantResult res = quant::haq_search(base.net, data, hw, budget, qc);

    quant::save_bits_file(res.policy, (ctx.dir / "bits.txt").string());
    std::ofstream log(ctx.dir / "episodes.csv");
    log << "episode,reward,cost\n";
    for (const quant::QuantEpisode& e : res.log)
        log << e.episode << ',' << format_double(e.reward) << ',' << format_double(e.cost)
            << '\n';

    // Per-layer roofline points before (uniform 8-bit) and after the search.
    const hw::CostReport before = hw::simulate_cost(spec, all8, hw);
    const hw::CostReport after = hw::simulate_cost(spec, res.policy, hw);
    std::ofstream roof(ctx.dir / "roofline.csv");
    roof << "layer_index,intensity_before,attained_before,intensity_after,attained_after\n";
    for (std::size_t i = 0; i < before.per_layer.size(); ++i) {
        const hw::LayerCost& b = before.per_layer[i];
        const hw::LayerCost& a = after.per_layer[i];
        roof << b.layer_index << ',' << format_double(b.intensity) << ','
             << format_double(b.attained_rate) << ',' << format_double(a.intensity) << ','
             << format_double(a.attained_rate) << '\n';
    }

    ResultRow row;
    row.budget_kind = cfg.quantize.budget_kind;
    row.budget = limit;
    row.achieved = quant::policy_cost(spec, res.policy, hw, kind);
    row.accuracy = res.best_accuracy;
    return row;
}

template <typename E>
[[noreturn]] void rethrow_with_run_id(const std::string& run_id, const E& e) {
    throw E("run " + run_id + ": " + e.what());
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

ExperimentConfig load_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open experiment config: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    json j;
    try {
        j = json::parse(buffer.str());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }

    check_keys(j, "experiment config",
               {"pipeline", "seed", "seeds", "out_dir", "hardware", "dataset", "search",
                "oracle", "net", "train", "prune", "quantize"});
    if (!j.contains("pipeline")) throw ConfigError("experiment config requires \"pipeline\"");
    if (!j.contains("seed")) throw ConfigError("experiment config requires \"seed\"");
    if (!j.contains("dataset")) throw ConfigError("experiment config requires \"dataset\"");

    ExperimentConfig cfg;
    cfg.pipeline = get_or<std::string>(j, "pipeline", "");
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", {});
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
    if (j.contains("hardware")) {
        const json& h = j.at("hardware");
        if (h.is_string())
            cfg.hardware = {h.get<std::string>()};
        else if (h.is_array())
            cfg.hardware = get_or<std::vector<std::string>>(j, "hardware", {});
        else
            throw ConfigError("hardware must be a profile name or a list of them");
    }
    cfg.dataset = parse_dataset(j.at("dataset"));
    if (j.contains("search")) cfg.search = parse_search(j.at("search"));
    if (j.contains("oracle")) cfg.oracle = parse_oracle(j.at("oracle"));
    if (j.contains("net")) cfg.net = parse_net(j.at("net"));
    if (j.contains("train")) cfg.train = parse_train(j.at("train"));
    if (j.contains("prune")) cfg.prune = parse_prune(j.at("prune"));
    if (j.contains("quantize")) cfg.quantize = parse_quantize(j.at("quantize"));
    cfg.raw = buffer.str();
    validate_config(cfg);
    return cfg;
}

nn::NetSpec preset_network(const std::string& preset, int width, const DataSpec& data_spec) {
    if (width < 1) throw ConfigError("net width must be >= 1");
    const int c = data_spec.channels;
    const int s = data_spec.image_size;
    const int classes = data_spec.classes;
    auto layer = [](nn::LayerKind kind, int in, int out, int k, int h, int w) {
        nn::LayerSpec l;
        l.kind = kind;
        l.in_channels = in;
        l.out_channels = out;
        l.kernel_size = k;
        l.spatial_h = h;
        l.spatial_w = w;
        return l;
    };
    nn::NetSpec net;
    net.num_classes = classes;
    if (preset == "mlp") {
        net.layers = {layer(nn::LayerKind::dense, c * s * s, width, 0, 0, 0),
                      layer(nn::LayerKind::relu, width, width, 0, 0, 0),
                      layer(nn::LayerKind::dense, width, width, 0, 0, 0),
                      layer(nn::LayerKind::relu, width, width, 0, 0, 0),
                      layer(nn::LayerKind::dense, width, classes, 0, 0, 0)};
    } else if (preset == "conv") {
        net.layers = {layer(nn::LayerKind::pointwise_conv2d, c, width, 1, s, s),
                      layer(nn::LayerKind::relu, width, width, 0, s, s),
                      layer(nn::LayerKind::depthwise_conv2d, width, width, 3, s, s),
                      layer(nn::LayerKind::relu, width, width, 0, s, s),
                      layer(nn::LayerKind::pointwise_conv2d, width, width, 1, s, s),
                      layer(nn::LayerKind::relu, width, width, 0, s, s),
                      layer(nn::LayerKind::dense, width * s * s, classes, 0, 0, 0)};
    } else {
        throw ConfigError("unknown net preset: " + preset);
    }
    return net;
}

std::vector<ResultRow> run(const ExperimentConfig& cfg) {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir);

    // The config that produced the runs travels with them, verbatim when it
    // came from a file.
    {
        std::ofstream copy(fs::path(cfg.out_dir) / "config.json");
        if (!cfg.raw.empty())
            copy << cfg.raw;
        else
            copy << config_to_json(cfg).dump(2) << '\n';
    }

    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (seeds.empty()) seeds = {cfg.seed};

    const nn::Dataset data = generate_dataset(cfg.dataset);

    std::vector<ResultRow> rows;
    for (std::uint64_t seed : seeds) {
        for (const std::string& hw_name : cfg.hardware) {
            RunContext ctx{cfg, "", {}, seed, hw_name};
            ctx.run_id = cfg.pipeline + "-" + hardware_token(hw_name) + "-s" +
                         std::to_string(seed);
            ctx.dir = fs::path(cfg.out_dir) / ctx.run_id;
            fs::create_directories(ctx.dir);

            const auto t0 = std::chrono::steady_clock::now();
            ResultRow row;
            try {
                if (cfg.pipeline == "search")
                    row = run_search(ctx, data);
                else if (cfg.pipeline == "oracle")
                    row = run_oracle(ctx, data);
                else if (cfg.pipeline == "prune")
                    row = run_prune(ctx, data);
                else
                    row = run_quantize(ctx, data);
            } catch (const ConfigError& e) {
                rethrow_with_run_id(ctx.run_id, e);
            } catch (const BudgetError& e) {
                rethrow_with_run_id(ctx.run_id, e);
            } catch (const TrainingError& e) {
                throw TrainingError(TrainingError::raw_tag{},
                                    "run " + ctx.run_id + ": " + e.what(), e.epoch);
            } catch (const std::invalid_argument& e) {
                rethrow_with_run_id(ctx.run_id, e);
            }
            const auto t1 = std::chrono::steady_clock::now();

            row.run_id = ctx.run_id;
            row.pipeline = cfg.pipeline;
            row.hardware = hardware_token(hw_name);
            row.seed = seed;
            row.wall_s = std::chrono::duration<double>(t1 - t0).count();
            rows.push_back(std::move(row));
        }
    }

    write_results_csv(rows, (fs::path(cfg.out_dir) / "results.csv").string());
    return rows;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write results CSV: " + path);
    out << "run_id,pipeline,hardware,budget_kind,budget,achieved,accuracy,wall_s,seed\n";
    for (const ResultRow& r : rows) {
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_s);
        out << r.run_id << ',' << r.pipeline << ',' << r.hardware << ',' << r.budget_kind
            << ',' << format_double(r.budget) << ',' << format_double(r.achieved) << ','
            << format_double(r.accuracy) << ',' << wall << ',' << r.seed << '\n';
    }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results CSV: " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "run_id,pipeline,hardware,budget_kind,budget,achieved,accuracy,wall_s,seed")
        throw ConfigError("unrecognized results CSV header in " + path);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 9) throw ConfigError("malformed results row: " + line);
        ResultRow r;
        r.run_id = fields[0];
        r.pipeline = fields[1];
        r.hardware = fields[2];
        r.budget_kind = fields[3];
        try {
            r.budget = std::stod(fields[4]);
            r.achieved = std::stod(fields[5]);
            r.accuracy = std::stod(fields[6]);
            r.wall_s = std::stod(fields[7]);
            r.seed = std::stoull(fields[8]);
        } catch (const std::exception&) {
            throw ConfigError("malformed results row: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void report(const std::string& run_dir, const std::string& report_dir) {
    const fs::path results = fs::path(run_dir) / "results.csv";
    if (!fs::exists(results))
        throw ConfigError("no completed runs found in " + run_dir + " (missing results.csv)");
    const std::vector<ResultRow> rows = read_results_csv(results.string());
    if (rows.empty()) throw ConfigError("results.csv in " + run_dir + " holds no runs");

    fs::create_directories(report_dir);

    {
        std::ofstream md(fs::path(report_dir) / "summary.md");
        md << "# Run summary\n\n";
        md << "| run_id | pipeline | hardware | budget_kind | budget | achieved | accuracy "
              "| wall_s | seed |\n";
        md << "|---|---|---|---|---|---|---|---|---|\n";
        for (const ResultRow& r : rows) {
            char line[512];
            std::snprintf(line, sizeof(line),
                          "| %s | %s | %s | %s | %.6g | %.6g | %.4f | %.3f | %llu |\n",
                          r.run_id.c_str(), r.pipeline.c_str(), r.hardware.c_str(),
                          r.budget_kind.c_str(), r.budget, r.achieved, r.accuracy, r.wall_s,
                          static_cast<unsigned long long>(r.seed));
            md << line;
        }
    }

    // Accuracy-vs-latency frontier per hardware, ascending in latency. Only
    // rows whose achieved cost is a latency belong on this axis.
    std::map<std::string, std::vector<const ResultRow*>> by_hw;
    for (const ResultRow& r : rows)
        if (r.budget_kind == "latency") by_hw[r.hardware].push_back(&r);
    for (auto& [hw_name, list] : by_hw) {
        std::sort(list.begin(), list.end(), [](const ResultRow* a, const ResultRow* b) {
            if (a->achieved != b->achieved) return a->achieved < b->achieved;
            if (a->accuracy != b->accuracy) return a->accuracy < b->accuracy;
            return a->run_id < b->run_id;
        });
        std::ofstream out(fs::path(report_dir) / ("frontier_" + hw_name + ".csv"));
        out << "latency_s,accuracy,run_id,pipeline\n";
        for (const ResultRow* r : list)
            out << format_double(r->achieved) << ',' << format_double(r->accuracy) << ','
                << r->run_id << ',' << r->pipeline << '\n';
    }

    // Roofline scatter data produced by quantize runs is re-emitted verbatim.
    for (const ResultRow& r : rows) {
        const fs::path roof = fs::path(run_dir) / r.run_id / "roofline.csv";
        if (fs::exists(roof))
            fs::copy_file(roof, fs::path(report_dir) / ("roofline_" + r.run_id + ".csv"),
                          fs::copy_options::overwrite_existing);
    }
}

}  // namespace tailor::bench
