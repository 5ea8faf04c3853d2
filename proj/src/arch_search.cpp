#include "tailor/arch_search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <utility>

#include <json.hpp>

#include "tailor/error.hpp"

namespace tailor::arch {

ArchParams ArchParams::zeros(const nn::SearchSpace& space) {
    ArchParams p;
    p.alpha.assign(static_cast<std::size_t>(space.num_blocks()),
                   std::vector<double>(static_cast<std::size_t>(space.num_choices()), 0.0));
    return p;
}

std::vector<double> softmax_probs(const std::vector<double>& alpha_row) {
    if (alpha_row.empty()) throw std::invalid_argument("softmax_probs: empty row");
    double mx = alpha_row[0];
    for (double a : alpha_row) mx = std::max(mx, a);
    std::vector<double> out(alpha_row.size());
    double z = 0.0;
    for (std::size_t i = 0; i < alpha_row.size(); ++i) {
        out[i] = std::exp(alpha_row[i] - mx);
        z += out[i];
    }
    for (double& p : out) p /= z;
    return out;
}

std::vector<int> sample_gates(const std::vector<double>& probs, Rng& rng) {
    std::vector<int> gates(probs.size(), 0);
    gates[static_cast<std::size_t>(rng.multinomial(probs))] = 1;
    return gates;
}

std::vector<double> arch_gradient(const std::vector<double>& dL_dgates,
                                  const std::vector<double>& probs) {
    if (dL_dgates.size() != probs.size())
        throw std::invalid_argument("arch_gradient: size mismatch");
    double mean = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) mean += dL_dgates[j] * probs[j];
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (dL_dgates[i] - mean);
    return out;
}

double hardware_aware_loss(double ce, double elat, double lat_ref, double a, double b) {
    if (!(lat_ref > 0.0)) throw std::invalid_argument("hardware_aware_loss: lat_ref must be positive");
    if (elat < 0.0) throw std::invalid_argument("hardware_aware_loss: negative latency");
    return ce * a * std::pow(std::max(elat / lat_ref, 1.0), b);
}

void save_arch_file(const SpecializedArch& arch, const std::string& path) {
    nlohmann::json j{
        {"ops", arch.ops},
        {"hardware", arch.hardware},
        {"lat_ref", arch.lat_ref},
        {"seed", arch.seed},
    };
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write architecture file: " + path);
    out << j.dump(2) << "\n";
}

SpecializedArch load_arch_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open architecture file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("architecture file " + path + ": " + e.what());
    }
    static const std::vector<std::string> known = {"ops", "hardware", "lat_ref", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("architecture file " + path + ": unknown key '" + it.key() + "'");
    }
    SpecializedArch arch;
    try {
        arch.ops = j.at("ops").get<std::vector<std::string>>();
        arch.hardware = j.at("hardware").get<std::string>();
        arch.lat_ref = j.at("lat_ref").get<double>();
        arch.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("architecture file " + path + ": " + e.what());
    }
    return arch;
}

SpecializedArch derive_final_arch(const ArchParams& params, const nn::SearchSpace& space,
                                  const std::string& hardware, double lat_ref,
                                  std::uint64_t seed) {
    if (static_cast<int>(params.alpha.size()) != space.num_blocks())
        throw std::invalid_argument("derive_final_arch: alpha rows do not match block count");
    SpecializedArch arch;
    arch.hardware = hardware;
    arch.lat_ref = lat_ref;
    arch.seed = seed;
    for (const std::vector<double>& row : params.alpha) {
        if (static_cast<int>(row.size()) != space.num_choices())
            throw std::invalid_argument("derive_final_arch: alpha row does not match choices");
        std::size_t best = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i] > row[best]) best = i;  // ties keep the lowest index
        arch.ops.push_back(space.choices[best]);
    }
    return arch;
}

double arch_latency(const nn::SearchSpace& space, const std::vector<std::string>& ops,
                    const hw::LatencyTable& table) {
    if (static_cast<int>(ops.size()) != space.num_blocks())
        throw std::invalid_argument("arch_latency: need one op per block");
    double lat = 0.0;
    for (int b = 0; b < space.num_blocks(); ++b)
        lat += table.lookup(b, ops[static_cast<std::size_t>(b)]);
    return lat;
}

namespace {

// The sampled single-path network flattened into one layer list, with the
// parameters aliased back into supernet storage so SGD hits only what ran.
struct ActiveView {
    std::vector<nn::LayerSpec> specs;
    std::vector<nn::LayerParams*> params;
    std::vector<std::pair<int, int>> block_span;  // [begin, end) into specs per block
};

ActiveView make_view(Supernet& net, const std::vector<std::vector<int>>& gates) {
    ActiveView v;
    v.specs.push_back(net.stem_conv);
    v.params.push_back(&net.stem_params);
    v.specs.push_back(net.stem_relu);
    static nn::LayerParams no_params;
    v.params.push_back(&no_params);
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        int active = -1;
        for (std::size_t j = 0; j < gates[b].size(); ++j)
            if (gates[b][j] == 1) active = static_cast<int>(j);
        if (active < 0) throw std::logic_error("make_view: gate row is not one-hot");
        CandidatePath& path = net.blocks[b].paths[static_cast<std::size_t>(active)];
        const int begin = static_cast<int>(v.specs.size());
        for (std::size_t i = 0; i < path.layers.size(); ++i) {
            v.specs.push_back(path.layers[i]);
            v.params.push_back(&path.params[i]);
        }
        v.block_span.emplace_back(begin, static_cast<int>(v.specs.size()));
    }
    v.specs.push_back(net.head_dense);
    v.params.push_back(&net.head_params);
    return v;
}

nn::Tensor view_forward(const ActiveView& v, const nn::Tensor& x, int num_classes, nn::Trace* trace) {
    if (trace) {
        trace->acts.clear();
        trace->acts.push_back(x);
    }
    nn::Tensor cur = x;
    for (std::size_t i = 0; i < v.specs.size(); ++i) {
        cur = nn::layer_forward(v.specs[i], *v.params[i], cur);
        if (trace) trace->acts.push_back(cur);
    }
    if (cur.rank() != 2 || cur.shape[1] != num_classes)
        throw std::logic_error("view_forward: logits do not match num_classes");
    return cur;
}

struct ViewBack {
    std::vector<nn::LayerGrads> grads;
};

ViewBack view_backward(const ActiveView& v, const nn::Trace& trace, const nn::Tensor& dlogits) {
    ViewBack back;
    back.grads.resize(v.specs.size());
    nn::Tensor d = dlogits;
    for (int i = static_cast<int>(v.specs.size()) - 1; i >= 0; --i) {
        if (d.size() != trace.acts[static_cast<std::size_t>(i) + 1].size())
            throw std::logic_error("view_backward: gradient shape does not match trace");
        d.shape = trace.acts[static_cast<std::size_t>(i) + 1].shape;
        back.grads[static_cast<std::size_t>(i)] = nn::layer_backward(
            v.specs[static_cast<std::size_t>(i)], *v.params[static_cast<std::size_t>(i)],
            trace.acts[static_cast<std::size_t>(i)], d);
        d = std::move(back.grads[static_cast<std::size_t>(i)].dinput);
    }
    return back;
}

void view_apply_sgd(ActiveView& v, const std::vector<nn::LayerGrads>& grads, double lr) {
    for (std::size_t i = 0; i < v.specs.size(); ++i) {
        if (!v.specs[i].parametric()) continue;
        axpy(-lr, grads[i].dweight, v.params[i]->weight);
        axpy(-lr, grads[i].dbias, v.params[i]->bias);
    }
}

struct DataDims {
    int in_channels = 0;
    int num_classes = 0;
};

DataDims infer_dims(const nn::Dataset& data) {
    if (data.train.empty()) throw std::invalid_argument("dataset has an empty training split");
    const nn::Tensor& x0 = data.train.front().x;
    if (x0.rank() != 3)
        throw std::invalid_argument("dataset examples must be (channels, height, width)");
    int max_label = 0;
    for (const nn::Example& e : data.train) max_label = std::max(max_label, e.label);
    for (const nn::Example& e : data.val) max_label = std::max(max_label, e.label);
    return {x0.shape[0], max_label + 1};
}

}  // namespace

SearchResult search(const nn::SearchSpace& space, const nn::Dataset& data,
                    const hw::HardwareSpec& hw, const hw::LatencyTable& table,
                    const SearchConfig& cfg) {
    if (!table.covers(space))
        throw std::invalid_argument("search: latency table does not cover the space");
    if (!(cfg.lat_ref > 0.0)) throw std::invalid_argument("search: lat_ref must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("search: negative epoch count");
    if (cfg.warmup_epochs < 0) throw std::invalid_argument("search: negative warm-up count");
    DataDims dims = infer_dims(data);
    if (dims.num_classes < 2) throw std::invalid_argument("search: need at least two classes");
    const nn::BlockShape& shape = space.blocks.front();
    const nn::Tensor& x0 = data.train.front().x;
    if (x0.shape[1] != shape.height || x0.shape[2] != shape.width)
        throw std::invalid_argument("search: example spatial size does not match the space");

    Rng root(cfg.seed);
    Rng init_rng = root.stream(1);
    Rng shuffle_rng = root.stream(2);
    Rng gate_rng = root.stream(3);

    Supernet net = Supernet::init(space, dims.in_channels, dims.num_classes, init_rng);
    ArchParams params = ArchParams::zeros(space);

    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const int n = static_cast<int>(data.train.size());
    const int batch = std::max(1, std::min(cfg.batch, n));

    auto current_probs = [&]() {
        std::vector<std::vector<double>> probs;
        probs.reserve(params.alpha.size());
        for (const std::vector<double>& row : params.alpha) probs.push_back(softmax_probs(row));
        return probs;
    };
    auto sample_all = [&](const std::vector<std::vector<double>>& probs) {
        std::vector<std::vector<int>> gates;
        gates.reserve(probs.size());
        for (const std::vector<double>& row : probs) gates.push_back(sample_gates(row, gate_rng));
        return gates;
    };

    SearchResult res;
    long long step = 0;  // odd steps train weights, even steps move alpha
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double ce_sum = 0.0, loss_sum = 0.0;
        int ce_steps = 0, loss_steps = 0;
        for (int lo = 0; lo < n; lo += batch) {
            const int hi = std::min(lo + batch, n);
            std::vector<int> labels;
            nn::Tensor bx = nn::stack_examples(data.train, order, lo, hi, &labels);
            std::vector<std::vector<double>> probs = current_probs();
            std::vector<std::vector<int>> gates = sample_all(probs);
            ActiveView view = make_view(net, gates);
            nn::Trace trace;
            nn::Tensor logits = view_forward(view, bx, dims.num_classes, &trace);
            auto [ce, dlogits] = nn::softmax_xent(logits, labels);
            if (!std::isfinite(ce)) throw TrainingError("search: non-finite loss", epoch);
            const bool warming = epoch < cfg.warmup_epochs;
            if (!warming) ++step;
            if (warming || step % 2 == 1) {
                ViewBack back = view_backward(view, trace, dlogits);
                view_apply_sgd(view, back.grads, cfg.weight_lr);
                ce_sum += ce;
                ++ce_steps;
                continue;
            }
            const double elat = hw::expected_network_latency(space, probs, table);
            const double loss = hardware_aware_loss(ce, elat, cfg.lat_ref, cfg.a, cfg.b);
            if (!std::isfinite(loss)) throw TrainingError("search: non-finite loss", epoch);
            const double penalty = cfg.a * std::pow(std::max(elat / cfg.lat_ref, 1.0), cfg.b);
            const double dpen_delat =
                elat > cfg.lat_ref
                    ? cfg.a * cfg.b * std::pow(elat / cfg.lat_ref, cfg.b - 1.0) / cfg.lat_ref
                    : 0.0;
            for (int b = 0; b < space.num_blocks(); ++b) {
                const std::size_t bi = static_cast<std::size_t>(b);
                const nn::Tensor& block_in =
                    trace.acts[static_cast<std::size_t>(view.block_span[bi].first)];
                // Loss of each candidate substituted at this block, the rest
                // of the sampled path held fixed.
                std::vector<double> sub_loss(probs[bi].size());
                std::vector<double> lat_row(probs[bi].size());
                for (std::size_t j = 0; j < probs[bi].size(); ++j) {
                    nn::Tensor xj = path_forward(net.blocks[bi].paths[j], block_in);
                    for (std::size_t i = static_cast<std::size_t>(view.block_span[bi].second);
                         i < view.specs.size(); ++i)
                        xj = nn::layer_forward(view.specs[i], *view.params[i], xj);
                    sub_loss[j] = penalty * nn::softmax_xent(xj, labels).first;
                    lat_row[j] = table.lookup(b, space.choices[j]);
                }
                std::vector<double> grad_ce = arch_gradient(sub_loss, probs[bi]);
                std::vector<double> grad_lat = arch_gradient(lat_row, probs[bi]);
                for (std::size_t i = 0; i < grad_ce.size(); ++i) {
                    params.alpha[bi][i] -= cfg.alpha_lr * (grad_ce[i] + ce * dpen_delat * grad_lat[i]);
                    if (!std::isfinite(params.alpha[bi][i]))
                        throw TrainingError("search: non-finite architecture parameter", epoch);
                }
            }
            loss_sum += loss;
            ++loss_steps;
        }
        SearchLogEntry entry;
        entry.epoch = epoch;
        entry.train_ce = ce_steps ? ce_sum / ce_steps : 0.0;
        entry.arch_loss = loss_steps ? loss_sum / loss_steps : 0.0;
        entry.expected_latency_s = hw::expected_network_latency(space, current_probs(), table);
        res.log.push_back(entry);
    }

    res.params = params;
    res.arch = derive_final_arch(params, space, hw.name, cfg.lat_ref, cfg.seed);
    return res;
}

std::vector<FrontierEntry> brute_force_frontier(const nn::SearchSpace& space,
                                                const nn::Dataset& data,
                                                const hw::LatencyTable& table,
                                                const FrontierConfig& cfg) {
    if (!table.covers(space))
        throw std::invalid_argument("brute_force_frontier: latency table does not cover the space");
    const double card = space.cardinality();
    if (cfg.cap < 1) throw std::invalid_argument("brute_force_frontier: cap must be positive");
    if (card > static_cast<double>(cfg.cap)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", card);
        throw std::invalid_argument("brute_force_frontier: space cardinality " +
                                    std::string(buf) + " exceeds the cap of " +
                                    std::to_string(cfg.cap));
    }
    DataDims dims = infer_dims(data);
    const int count = static_cast<int>(std::llround(card));
    const int K = space.num_choices();

    std::vector<FrontierEntry> entries(static_cast<std::size_t>(count));
    Rng root(cfg.seed);

    auto run_range = [&](int lo, int hi) {
        for (int idx = lo; idx < hi; ++idx) {
            std::vector<std::string> ops;
            int rem = idx;
            for (int b = 0; b < space.num_blocks(); ++b) {
                ops.push_back(space.choices[static_cast<std::size_t>(rem % K)]);
                rem /= K;
            }
            nn::NetSpec spec = realize_network(space, ops, dims.in_channels, dims.num_classes);
            nn::TrainConfig tc;
            tc.lr = cfg.lr;
            tc.epochs = cfg.epochs;
            tc.batch = cfg.batch;
            tc.seed = root.stream(static_cast<std::uint64_t>(idx)).seed();
            nn::TrainResult tr = nn::train_sgd(spec, data, tc);
            FrontierEntry& e = entries[static_cast<std::size_t>(idx)];
            e.ops = std::move(ops);
            e.accuracy = tr.val_accuracy;
            e.latency_s = arch_latency(space, e.ops, table);
        }
    };

    int threads = cfg.threads > 0 ? cfg.threads
                                  : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        run_range(0, count);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            const int lo = count * t / threads;
            const int hi = count * (t + 1) / threads;
            pool.emplace_back([&, lo, hi, t]() {
                try {
                    run_range(lo, hi);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                }
            });
        }
        for (std::thread& th : pool) th.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    for (FrontierEntry& e : entries) {
        bool dominated = false;
        for (const FrontierEntry& o : entries) {
            if (o.accuracy >= e.accuracy && o.latency_s <= e.latency_s &&
                (o.accuracy > e.accuracy || o.latency_s < e.latency_s)) {
                dominated = true;
                break;
            }
        }
        e.pareto = !dominated;
    }
    return entries;
}

}  // namespace tailor::arch
