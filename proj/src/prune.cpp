#include "tailor/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tailor/error.hpp"

namespace tailor::prune {

namespace {

using nn::LayerKind;
using nn::LayerParams;
using nn::LayerSpec;
using nn::NetSpec;
using nn::Network;
using nn::Tensor;

int last_parametric(const NetSpec& net) {
    for (int i = static_cast<int>(net.layers.size()); i-- > 0;)
        if (net.layers[static_cast<std::size_t>(i)].parametric()) return i;
    return -1;
}

void check_policy(const NetSpec& net, const SparsityPolicy& policy) {
    const std::vector<int> ok = prunable_layers(net);
    for (const auto& [idx, row] : policy.layers) {
        if (std::find(ok.begin(), ok.end(), idx) == ok.end())
            throw std::invalid_argument("policy touches layer " + std::to_string(idx) +
                                        ", which is not prunable");
        const LayerSpec& spec = net.layers[static_cast<std::size_t>(idx)];
        if (row.kept < 1 || row.kept > spec.out_channels)
            throw std::invalid_argument("policy keeps an out-of-range channel count on layer " +
                                        std::to_string(idx));
    }
}

// Per-output-channel L2 norms of the stored weights.
std::vector<double> channel_norms(const LayerSpec& spec, const LayerParams& params) {
    const int c_out = spec.out_channels;
    const std::size_t per = params.weight.data.size() / static_cast<std::size_t>(c_out);
    std::vector<double> norms(static_cast<std::size_t>(c_out), 0.0);
    for (int c = 0; c < c_out; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < per; ++k) {
            const double w = params.weight.data[static_cast<std::size_t>(c) * per + k];
            s += w * w;
        }
        norms[static_cast<std::size_t>(c)] = std::sqrt(s);
    }
    return norms;
}

// Walks the layer chain applying a channel-selection policy. `shrink` picks
// between physical removal and zero-masking; both share the selection logic
// so their forwards agree exactly.
Network transform_network(const Network& net, const SparsityPolicy& policy, bool shrink) {
    check_policy(net.spec, policy);
    Network out;
    out.spec.num_classes = net.spec.num_classes;

    // Selected channel indices of the current inter-layer tensor, and the
    // channel count it had before any pruning.
    std::vector<int> in_sel;
    int in_orig = 0;
    if (!net.spec.layers.empty()) {
        in_orig = net.spec.layers.front().in_channels;
        in_sel.resize(static_cast<std::size_t>(in_orig));
        std::iota(in_sel.begin(), in_sel.end(), 0);
    }

    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerSpec& spec = net.spec.layers[i];
        const LayerParams& params = net.params[i];
        LayerSpec new_spec = spec;
        LayerParams new_params = params;

        const auto pol = policy.layers.find(static_cast<int>(i));
        switch (spec.kind) {
            case LayerKind::relu:
            case LayerKind::identity:
            case LayerKind::zero: {
                if (shrink) {
                    if (new_spec.in_channels > 0)
                        new_spec.in_channels = static_cast<int>(in_sel.size());
                    if (new_spec.out_channels > 0)
                        new_spec.out_channels = static_cast<int>(in_sel.size());
                }
                break;
            }
            case LayerKind::depthwise_conv2d: {
                // Width inherited from the producer: same survivors.
                if (shrink) {
                    new_spec.in_channels = static_cast<int>(in_sel.size());
                    new_spec.out_channels = new_spec.in_channels;
                    const std::size_t per =
                        params.weight.data.size() / static_cast<std::size_t>(spec.out_channels);
                    Tensor w = Tensor::zeros({static_cast<int>(in_sel.size()),
                                              spec.kernel_size, spec.kernel_size});
                    Tensor b = Tensor::zeros({static_cast<int>(in_sel.size())});
                    for (std::size_t n = 0; n < in_sel.size(); ++n) {
                        const std::size_t c = static_cast<std::size_t>(in_sel[n]);
                        std::copy_n(params.weight.data.begin() + static_cast<std::ptrdiff_t>(c * per),
                                    per, w.data.begin() + static_cast<std::ptrdiff_t>(n * per));
                        b.data[n] = params.bias.data[c];
                    }
                    new_params.weight = std::move(w);
                    new_params.bias = std::move(b);
                } else {
                    const std::size_t per =
                        params.weight.data.size() / static_cast<std::size_t>(spec.out_channels);
                    std::vector<char> keep(static_cast<std::size_t>(spec.out_channels), 0);
                    for (int c : in_sel) keep[static_cast<std::size_t>(c)] = 1;
                    for (int c = 0; c < spec.out_channels; ++c)
                        if (!keep[static_cast<std::size_t>(c)]) {
                            std::fill_n(new_params.weight.data.begin() +
                                            static_cast<std::ptrdiff_t>(c * per),
                                        per, 0.0);
                            new_params.bias.data[static_cast<std::size_t>(c)] = 0.0;
                        }
                }
                // in_sel unchanged: survivors pass straight through.
                break;
            }
            case LayerKind::dense:
            case LayerKind::conv2d:
            case LayerKind::pointwise_conv2d: {
                // Dense layers may consume a flattened (C, H, W) tensor; each
                // channel then owns a contiguous block of g columns.
                const int g = spec.kind == LayerKind::dense && in_orig > 0
                                  ? spec.in_channels / in_orig
                                  : 1;
                const int cols_per_in = spec.kind == LayerKind::conv2d
                                            ? spec.kernel_size * spec.kernel_size
                                            : g;
                const int in_units = spec.kind == LayerKind::dense ? spec.in_channels / g
                                                                   : spec.in_channels;
                const std::vector<int> out_sel =
                    pol == policy.layers.end()
                        ? [&] {
                              std::vector<int> all(static_cast<std::size_t>(spec.out_channels));
                              std::iota(all.begin(), all.end(), 0);
                              return all;
                          }()
                        : prune_channels(spec, params, pol->second.kept);

                const std::size_t row_w = static_cast<std::size_t>(in_units) *
                                          static_cast<std::size_t>(cols_per_in);
                if (shrink) {
                    const int new_in = static_cast<int>(in_sel.size());
                    const int new_out = static_cast<int>(out_sel.size());
                    new_spec.in_channels = spec.kind == LayerKind::dense ? new_in * g : new_in;
                    new_spec.out_channels = new_out;
                    std::vector<int> wshape = params.weight.shape;
                    wshape[0] = new_out;
                    wshape[1] = spec.kind == LayerKind::dense ? new_in * g : new_in;
                    Tensor w = Tensor::zeros(wshape);
                    Tensor b = Tensor::zeros({new_out});
                    const std::size_t new_row_w = static_cast<std::size_t>(in_sel.size()) *
                                                  static_cast<std::size_t>(cols_per_in);
                    for (std::size_t r = 0; r < out_sel.size(); ++r) {
                        const std::size_t src_row = static_cast<std::size_t>(out_sel[r]) * row_w;
                        for (std::size_t n = 0; n < in_sel.size(); ++n)
                            std::copy_n(
                                params.weight.data.begin() +
                                    static_cast<std::ptrdiff_t>(
                                        src_row + static_cast<std::size_t>(in_sel[n]) *
                                                      static_cast<std::size_t>(cols_per_in)),
                                static_cast<std::size_t>(cols_per_in),
                                w.data.begin() +
                                    static_cast<std::ptrdiff_t>(
                                        r * new_row_w +
                                        n * static_cast<std::size_t>(cols_per_in)));
                        b.data[r] = params.bias.data[static_cast<std::size_t>(out_sel[r])];
                    }
                    new_params.weight = std::move(w);
                    new_params.bias = std::move(b);
                } else {
                    std::vector<char> keep_in(static_cast<std::size_t>(in_units), 0);
                    for (int c : in_sel) keep_in[static_cast<std::size_t>(c)] = 1;
                    std::vector<char> keep_out(static_cast<std::size_t>(spec.out_channels), 0);
                    for (int c : out_sel) keep_out[static_cast<std::size_t>(c)] = 1;
                    for (int r = 0; r < spec.out_channels; ++r) {
                        double* row = &new_params.weight.data[static_cast<std::size_t>(r) * row_w];
                        if (!keep_out[static_cast<std::size_t>(r)]) {
                            std::fill_n(row, row_w, 0.0);
                            new_params.bias.data[static_cast<std::size_t>(r)] = 0.0;
                            continue;
                        }
                        for (int c = 0; c < in_units; ++c)
                            if (!keep_in[static_cast<std::size_t>(c)])
                                std::fill_n(row + static_cast<std::size_t>(c) * cols_per_in,
                                            static_cast<std::size_t>(cols_per_in), 0.0);
                    }
                }
                in_sel = out_sel;
                in_orig = spec.out_channels;
                break;
            }
        }
        out.spec.layers.push_back(new_spec);
        out.params.push_back(std::move(new_params));
    }
    if (shrink) nn::validate(out.spec);
    return out;
}

double cost_of_spec(const NetSpec& spec, const PruneBudget& budget) {
    if (budget.kind == BudgetKind::macs) {
        std::int64_t total = 0;
        for (const LayerSpec& l : spec.layers) total += nn::count_macs(l);
        return static_cast<double>(total);
    }
    return hw::simulate_cost(spec, BitwidthPolicy::uniform(spec, 8), budget.hardware).latency_s;
}

}  // namespace

std::vector<int> prunable_layers(const NetSpec& net) {
    const int head = last_parametric(net);
    std::vector<int> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (!l.parametric()) continue;
        if (static_cast<int>(i) == head) continue;  // outputs are class logits
        if (l.kind == LayerKind::depthwise_conv2d) continue;  // width inherited
        out.push_back(static_cast<int>(i));
    }
    return out;
}

RoundedAction round_feasible(double sparsity, int channels) {
    if (channels < 1) throw std::invalid_argument("round_feasible needs at least one channel");
    const double s = std::min(1.0, std::max(0.0, sparsity));
    int kept = static_cast<int>(std::lround((1.0 - s) * channels));
    kept = std::min(channels, std::max(1, kept));
    return {kept, 1.0 - static_cast<double>(kept) / channels};
}

std::vector<int> prune_channels(const LayerSpec& spec, const LayerParams& params, int kept) {
    if (kept < 1 || kept > spec.out_channels)
        throw std::invalid_argument("prune_channels: kept must lie in [1, out_channels]");
    const std::vector<double> norms = channel_norms(spec, params);
    std::vector<int> order(norms.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return norms[static_cast<std::size_t>(a)] > norms[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(kept));
    std::sort(order.begin(), order.end());
    return order;
}

Network masked_network(const Network& net, const SparsityPolicy& policy) {
    return transform_network(net, policy, false);
}

Network shrunk_network(const Network& net, const SparsityPolicy& policy) {
    return transform_network(net, policy, true);
}

NetSpec shrunk_spec(const NetSpec& net, const SparsityPolicy& policy) {
    check_policy(net, policy);
    NetSpec out;
    out.num_classes = net.num_classes;
    int in_count = net.layers.empty() ? 0 : net.layers.front().in_channels;
    int in_orig = in_count;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        LayerSpec l = net.layers[i];
        const auto pol = policy.layers.find(static_cast<int>(i));
        switch (l.kind) {
            case LayerKind::relu:
            case LayerKind::identity:
            case LayerKind::zero:
                if (l.in_channels > 0) l.in_channels = in_count;
                if (l.out_channels > 0) l.out_channels = in_count;
                break;
            case LayerKind::depthwise_conv2d:
                l.in_channels = in_count;
                l.out_channels = in_count;
                break;
            case LayerKind::dense:
            case LayerKind::conv2d:
            case LayerKind::pointwise_conv2d: {
                const int g = l.kind == LayerKind::dense && in_orig > 0 ? l.in_channels / in_orig
                                                                        : 1;
                l.in_channels = l.kind == LayerKind::dense ? in_count * g : in_count;
                const int kept = pol == policy.layers.end() ? l.out_channels : pol->second.kept;
                in_orig = l.out_channels;
                l.out_channels = kept;
                in_count = kept;
                break;
            }
        }
        out.layers.push_back(l);
    }
    return out;
}

std::int64_t policy_macs(const NetSpec& net, const SparsityPolicy& policy) {
    const NetSpec s = shrunk_spec(net, policy);
    std::int64_t total = 0;
    for (const LayerSpec& l : s.layers) total += nn::count_macs(l);
    return total;
}

double policy_cost(const NetSpec& net, const SparsityPolicy& policy, const PruneBudget& budget) {
    return cost_of_spec(shrunk_spec(net, policy), budget);
}

double budget_limit(const NetSpec& net, const PruneBudget& budget) {
    if (budget.kind == BudgetKind::macs) {
        if (budget.macs_fraction <= 0.0 || budget.macs_fraction > 1.0)
            throw std::invalid_argument("MACs budget fraction must lie in (0, 1]");
        return budget.macs_fraction * cost_of_spec(net, budget);
    }
    if (budget.latency_s <= 0.0)
        throw std::invalid_argument("latency budget must be positive");
    return budget.latency_s;
}

double clip_action_for_budget(double action, int t, const NetSpec& net,
                              const SparsityPolicy& done, const PruneBudget& budget) {
    const std::vector<int> order = prunable_layers(net);
    if (t < 0 || t >= static_cast<int>(order.size()))
        throw std::invalid_argument("clip_action_for_budget: layer position out of range");
    const int layer = order[static_cast<std::size_t>(t)];
    const int channels = net.layers[static_cast<std::size_t>(layer)].out_channels;
    const double limit = budget_limit(net, budget);

    // Cost with this layer at `kept` and every undecided later layer at its
    // keep-one floor; monotone nondecreasing in `kept`.
    auto floor_cost = [&](int kept) {
        SparsityPolicy full = done;
        full.layers[layer] = {kept, 1.0 - static_cast<double>(kept) / channels};
        for (std::size_t u = static_cast<std::size_t>(t) + 1; u < order.size(); ++u) {
            const int li = order[u];
            const int c = net.layers[static_cast<std::size_t>(li)].out_channels;
            full.layers[li] = {1, 1.0 - 1.0 / c};
        }
        return policy_cost(net, full, budget);
    };

    if (floor_cost(round_feasible(action, channels).kept) <= limit) return action;
    for (int kept = channels; kept >= 1; --kept)
        if (floor_cost(kept) <= limit)
            return 1.0 - static_cast<double>(kept) / channels;
    throw BudgetError("budget is unreachable even at one kept channel per layer");
}

int layer_state_dim() { return 11; }

std::vector<double> layer_state(const NetSpec& net, int t, const SparsityPolicy& done,
                                double prev_action) {
    const std::vector<int> order = prunable_layers(net);
    if (t < 0 || t >= static_cast<int>(order.size()))
        throw std::invalid_argument("layer_state: layer position out of range");
    const int layer = order[static_cast<std::size_t>(t)];
    const LayerSpec& spec = net.layers[static_cast<std::size_t>(layer)];

    int c_max = 1;
    std::int64_t total = 0;
    for (const LayerSpec& l : net.layers) {
        if (l.parametric()) c_max = std::max({c_max, l.in_channels, l.out_channels});
        total += nn::count_macs(l);
    }
    std::int64_t remaining = 0;
    for (std::size_t u = static_cast<std::size_t>(t) + 1; u < order.size(); ++u)
        remaining += nn::count_macs(net.layers[static_cast<std::size_t>(order[u])]);

    const double reduced =
        total > 0 ? 1.0 - static_cast<double>(policy_macs(net, done)) / static_cast<double>(total)
                  : 0.0;

    std::vector<double> s(static_cast<std::size_t>(layer_state_dim()), 0.0);
    s[0] = static_cast<double>(t) / static_cast<double>(order.size());
    const int kind_slot = spec.kind == LayerKind::dense             ? 1
                          : spec.kind == LayerKind::conv2d          ? 2
                          : spec.kind == LayerKind::depthwise_conv2d ? 3
                                                                     : 4;
    s[static_cast<std::size_t>(kind_slot)] = 1.0;
    s[5] = static_cast<double>(spec.in_channels) / c_max;
    s[6] = static_cast<double>(spec.out_channels) / c_max;
    s[7] = total > 0 ? static_cast<double>(nn::count_macs(spec)) / static_cast<double>(total) : 0.0;
    s[8] = reduced;
    s[9] = total > 0 ? static_cast<double>(remaining) / static_cast<double>(total) : 0.0;
    s[10] = prev_action;
    return s;
}

SparsityPolicy uniform_shrink(const NetSpec& net, double ratio) {
    if (ratio <= 0.0 || ratio > 1.0)
        throw std::invalid_argument("uniform shrink ratio must lie in (0, 1]");
    SparsityPolicy policy;
    for (int layer : prunable_layers(net)) {
        const int c = net.layers[static_cast<std::size_t>(layer)].out_channels;
        int kept = static_cast<int>(std::lround(ratio * c));
        kept = std::min(c, std::max(1, kept));
        policy.layers[layer] = {kept, 1.0 - static_cast<double>(kept) / c};
    }
    return policy;
}

PruneResult amc_search(const Network& base, const nn::Dataset& data, const PruneBudget& budget,
                       const PruneSearchConfig& cfg) {
    if (cfg.episodes < 1) throw std::invalid_argument("pruning search needs at least one episode");
    if (cfg.finetune_epochs < 0)
        throw std::invalid_argument("fine-tune epoch count must be nonnegative");
    const std::vector<int> order = prunable_layers(base.spec);
    if (order.empty()) throw std::invalid_argument("network has no prunable layers");
    const double limit = budget_limit(base.spec, budget);

    // Refuse before episode 1 when even the keep-one floor overshoots.
    SparsityPolicy floor;
    for (int layer : order) {
        const int c = base.spec.layers[static_cast<std::size_t>(layer)].out_channels;
        floor.layers[layer] = {1, 1.0 - 1.0 / c};
    }
    if (policy_cost(base.spec, floor, budget) > limit)
        throw BudgetError("budget is below the keep-one floor of the network");

    rl::AgentConfig agent_cfg = cfg.agent;
    agent_cfg.state_dim = layer_state_dim();
    // One master seed drives the whole search; the agent gets its own stream.
    agent_cfg.seed = Rng(cfg.seed).stream(17).seed();
    rl::Agent agent(agent_cfg);

    PruneResult result;
    result.best_accuracy = -1.0;
    const int T = static_cast<int>(order.size());

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        SparsityPolicy policy;
        std::vector<std::vector<double>> states;
        std::vector<double> actions;
        double prev = 0.0;
        for (int t = 0; t < T; ++t) {
            const std::vector<double> s = layer_state(base.spec, t, policy, prev);
            const double raw = agent.act(s, true);
            const double clipped = clip_action_for_budget(raw, t, base.spec, policy, budget);
            const int layer = order[static_cast<std::size_t>(t)];
            const int c = base.spec.layers[static_cast<std::size_t>(layer)].out_channels;
            const RoundedAction ra = round_feasible(clipped, c);
            policy.layers[layer] = {ra.kept, ra.actual_sparsity};
            states.push_back(s);
            actions.push_back(ra.actual_sparsity);
            prev = ra.actual_sparsity;
        }

        Network shrunk = shrunk_network(base, policy);
        double reward;
        try {
            if (cfg.finetune_epochs > 0) {
                nn::TrainConfig ft;
                ft.epochs = cfg.finetune_epochs;
                ft.lr = cfg.finetune_lr;
                ft.batch = cfg.finetune_batch;
                ft.seed = Rng(cfg.seed).stream(100 + static_cast<std::uint64_t>(ep)).seed();
                nn::train_from(shrunk, data, ft);
            }
            reward = nn::accuracy(shrunk, data.val);
        } catch (const TrainingError&) {
            // An exploratory policy whose fine-tune blows up is simply a bad
            // policy; score it at the floor instead of aborting the search.
            reward = 0.0;
        }
        const double cost = policy_cost(base.spec, policy, budget);

        PruneEpisode entry;
        entry.episode = ep;
        entry.reward = reward;
        entry.cost = cost;
        entry.feasible = cost <= limit;
        entry.policy = policy;
        result.log.push_back(entry);
        if (entry.feasible && reward > result.best_accuracy) {
            result.best_accuracy = reward;
            result.policy = policy;
        }

        // Episodic credit: the same reward lands on every step.
        for (int t = 0; t < T; ++t) {
            rl::Transition tr;
            tr.state = states[static_cast<std::size_t>(t)];
            tr.action = actions[static_cast<std::size_t>(t)];
            tr.reward = reward;
            tr.terminal = t + 1 == T;
            tr.next_state = tr.terminal
                                ? std::vector<double>(static_cast<std::size_t>(layer_state_dim()), 0.0)
                                : states[static_cast<std::size_t>(t) + 1];
            agent.remember(tr);
        }
        if (agent.ready())
            for (int t = 0; t < T; ++t) agent.update();
        agent.decay_exploration();
    }
    return result;
}

void save_policy_file(const SparsityPolicy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open policy file for writing: " + path);
    out << "# channel-prune policy v1\n";
    char line[96];
    for (const auto& [idx, row] : policy.layers) {
        std::snprintf(line, sizeof(line), "layer %d kept %d sparsity %.17g\n", idx, row.kept,
                      row.sparsity);
        out << line;
    }
    if (!out) throw ConfigError("failed to write policy file: " + path);
}

SparsityPolicy load_policy_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open policy file: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "# channel-prune policy v1")
        throw ConfigError("not a channel-prune policy file: " + path);
    SparsityPolicy policy;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string w_layer, w_kept, w_sparsity;
        int idx = -1, kept = 0;
        double sparsity = 0.0;
        ls >> w_layer >> idx >> w_kept >> kept >> w_sparsity >> sparsity;
        if (!ls || w_layer != "layer" || w_kept != "kept" || w_sparsity != "sparsity")
            throw ConfigError("malformed policy line: " + line);
        if (kept < 1 || sparsity < 0.0 || sparsity >= 1.0)
            throw ConfigError("policy line out of range: " + line);
        policy.layers[idx] = {kept, sparsity};
    }
    return policy;
}

}  // namespace tailor::prune
