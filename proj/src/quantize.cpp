#include "tailor/quantize.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tailor/error.hpp"

namespace tailor::quant {

namespace {

using nn::LayerKind;
using nn::LayerSpec;
using nn::NetSpec;
using nn::Network;
using nn::Tensor;

std::vector<int> parametric_layers(const NetSpec& net) {
    std::vector<int> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].parametric()) out.push_back(static_cast<int>(i));
    return out;
}

void check_policy(const NetSpec& net, const BitwidthPolicy& policy) {
    const std::vector<int> param = parametric_layers(net);
    for (int i : param)
        if (policy.layers.find(i) == policy.layers.end())
            throw std::invalid_argument("bitwidth policy must cover parametric layer " +
                                        std::to_string(i));
    for (const auto& [idx, bits] : policy.layers) {
        if (std::find(param.begin(), param.end(), idx) == param.end())
            throw std::invalid_argument("bitwidth policy names non-parametric layer " +
                                        std::to_string(idx));
        if (bits.w_bits < 1 || bits.w_bits > 8 || bits.a_bits < 1 || bits.a_bits > 8)
            throw std::invalid_argument("bitwidths must lie in [1, 8] on layer " +
                                        std::to_string(idx));
    }
}

double cost_field(const hw::CostReport& report, CostKind kind) {
    switch (kind) {
        case CostKind::latency: return report.latency_s;
        case CostKind::energy: return report.energy_j;
        case CostKind::model_size: return report.model_size_bits;
    }
    return 0.0;
}

}  // namespace

Tensor linear_quantize(const Tensor& x, int bits) {
    if (bits < 1 || bits > 8)
        throw std::invalid_argument("quantizer bits must lie in [1, 8]");
    double m = 0.0;
    for (double v : x.data) m = std::max(m, std::abs(v));
    if (m == 0.0) return x;

    Tensor q = x;
    if (bits == 1) {
        for (double& v : q.data) v = v < 0.0 ? -m : m;
        return q;
    }
    const double levels = static_cast<double>((1 << (bits - 1)) - 1);
    const double s = m / levels;
    for (double& v : q.data) {
        const double k = std::min(levels, std::max(-levels, std::round(v / s)));
        v = k * s;
    }
    return q;
}

int action_to_bits(double a) {
    const double clamped = std::min(1.0, std::max(0.0, a));
    std::fesetround(FE_TONEAREST);
    const int bits = static_cast<int>(std::nearbyint(1.0 + clamped * 7.0));
    return std::min(8, std::max(1, bits));
}

double policy_cost(const NetSpec& net, const BitwidthPolicy& policy, const hw::HardwareSpec& hw,
                   CostKind kind) {
    check_policy(net, policy);
    return cost_field(hw::simulate_cost(net, policy, hw), kind);
}

BitwidthPolicy enforce_budget(const BitwidthPolicy& policy, const NetSpec& net,
                              const hw::HardwareSpec& hw, const Budget& budget) {
    if (budget.limit <= 0.0) throw std::invalid_argument("budget limit must be positive");
    check_policy(net, policy);
    auto cost = [&](const BitwidthPolicy& p) {
        return cost_field(hw::simulate_cost(net, p, hw), budget.kind);
    };
    if (cost(BitwidthPolicy::uniform(net, 1)) > budget.limit)
        throw BudgetError("budget is below the all-1-bit floor of the network");

    BitwidthPolicy out = policy;
    if (cost(out) <= budget.limit) return out;
    const std::vector<int> order = parametric_layers(net);
    while (true) {
        for (int i : order) {
            LayerBits& bits = out.layers.at(i);
            if (bits.w_bits > 1) {
                --bits.w_bits;
                if (cost(out) <= budget.limit) return out;
            }
            if (bits.a_bits > 1) {
                --bits.a_bits;
                if (cost(out) <= budget.limit) return out;
            }
        }
    }
}

Network quantized_network(const Network& net, const BitwidthPolicy& policy) {
    check_policy(net.spec, policy);
    Network q = net;
    for (std::size_t i = 0; i < q.spec.layers.size(); ++i) {
        if (!q.spec.layers[i].parametric()) continue;
        const int w_bits = policy.layers.at(static_cast<int>(i)).w_bits;
        q.params[i].weight = linear_quantize(q.params[i].weight, w_bits);
        q.params[i].bias = linear_quantize(q.params[i].bias, w_bits);
    }
    return q;
}

Tensor quantized_forward(const Network& net, const BitwidthPolicy& policy, const Tensor& x,
                         nn::Trace* trace) {
    const Network q = quantized_network(net, policy);
    Tensor cur = x;
    if (trace) {
        trace->acts.clear();
        trace->acts.push_back(cur);
    }
    for (std::size_t i = 0; i < q.spec.layers.size(); ++i) {
        cur = nn::layer_forward(q.spec.layers[i], q.params[i], cur);
        if (q.spec.layers[i].parametric())
            cur = linear_quantize(cur, policy.layers.at(static_cast<int>(i)).a_bits);
        if (trace) trace->acts.push_back(cur);
    }
    return cur;
}

double quantized_accuracy(const Network& net, const BitwidthPolicy& policy,
                          const std::vector<nn::Example>& split) {
    if (split.empty()) throw std::invalid_argument("accuracy: empty split");
    std::vector<int> order(split.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> labels;
    const Tensor bx = nn::stack_examples(split, order, 0, static_cast<int>(split.size()), &labels);
    const Tensor logits = quantized_forward(net, policy, bx);
    int hits = 0;
    const int classes = logits.shape[1];
    for (std::size_t b = 0; b < labels.size(); ++b) {
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (logits.data[b * static_cast<std::size_t>(classes) + static_cast<std::size_t>(c)] >
                logits.data[b * static_cast<std::size_t>(classes) + static_cast<std::size_t>(best)])
                best = c;
        if (best == labels[static_cast<std::size_t>(b)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double qat_finetune(Network& net, const BitwidthPolicy& policy, const nn::Dataset& data,
                    const nn::TrainConfig& cfg) {
    if (data.train.empty()) throw std::invalid_argument("fine-tune: empty training split");
    if (cfg.lr <= 0.0) throw std::invalid_argument("fine-tune: lr must be positive");
    check_policy(net.spec, policy);

    Rng shuffle_rng = Rng(cfg.seed).stream(2);
    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    const int n = static_cast<int>(data.train.size());
    const int batch = std::max(1, std::min(cfg.batch, n));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int lo = 0; lo < n; lo += batch) {
            const int hi = std::min(lo + batch, n);
            std::vector<int> labels;
            Tensor bx = nn::stack_examples(data.train, order, lo, hi, &labels);
            // Forward with quantized weights and activations; backward treats
            // both quantizers as identity (straight-through) by running the
            // plain layer gradients on the quantized trace.
            nn::Trace trace;
            const Network q = quantized_network(net, policy);
            Tensor cur = bx;
            trace.acts.push_back(cur);
            for (std::size_t i = 0; i < q.spec.layers.size(); ++i) {
                cur = nn::layer_forward(q.spec.layers[i], q.params[i], cur);
                if (q.spec.layers[i].parametric())
                    cur = linear_quantize(cur, policy.layers.at(static_cast<int>(i)).a_bits);
                trace.acts.push_back(cur);
            }
            auto [loss, dlogits] = nn::softmax_xent(cur, labels);
            if (!std::isfinite(loss)) throw TrainingError("fine-tune: non-finite loss", epoch);
            const nn::Gradients g = q.backward(trace, dlogits);
            net.apply_sgd(g, cfg.lr);  // step lands on the master weights
        }
    }
    return quantized_accuracy(net, policy, data.val);
}

int quant_state_dim() { return 12; }

std::vector<double> quant_layer_state(const NetSpec& net, int t, int decisions_made,
                                      double prev_action, bool activation_decision) {
    const std::vector<int> order = parametric_layers(net);
    if (t < 0 || t >= static_cast<int>(order.size()))
        throw std::invalid_argument("quant_layer_state: layer position out of range");
    const LayerSpec& spec = net.layers[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];

    int c_max = 1;
    std::int64_t total = 0;
    for (const LayerSpec& l : net.layers) {
        if (l.parametric()) c_max = std::max({c_max, l.in_channels, l.out_channels});
        total += nn::count_macs(l);
    }
    std::int64_t remaining = 0;
    for (std::size_t u = static_cast<std::size_t>(t) + 1; u < order.size(); ++u)
        remaining += nn::count_macs(net.layers[static_cast<std::size_t>(order[u])]);

    std::vector<double> s(static_cast<std::size_t>(quant_state_dim()), 0.0);
    s[0] = static_cast<double>(t) / static_cast<double>(order.size());
    const int kind_slot = spec.kind == LayerKind::dense              ? 1
                          : spec.kind == LayerKind::conv2d           ? 2
                          : spec.kind == LayerKind::depthwise_conv2d ? 3
                                                                     : 4;
    s[static_cast<std::size_t>(kind_slot)] = 1.0;
    s[5] = static_cast<double>(spec.in_channels) / c_max;
    s[6] = static_cast<double>(spec.out_channels) / c_max;
    s[7] = total > 0 ? static_cast<double>(nn::count_macs(spec)) / static_cast<double>(total) : 0.0;
    s[8] = static_cast<double>(decisions_made) / (2.0 * static_cast<double>(order.size()));
    s[9] = total > 0 ? static_cast<double>(remaining) / static_cast<double>(total) : 0.0;
    s[10] = prev_action;
    s[11] = activation_decision ? 1.0 : 0.0;
    return s;
}

QuantResult haq_search(const Network& base, const nn::Dataset& data, const hw::HardwareSpec& hw,
                       const Budget& budget, const QuantSearchConfig& cfg) {
    if (cfg.episodes < 1)
        throw std::invalid_argument("quantization search needs at least one episode");
    if (cfg.finetune_epochs < 0)
        throw std::invalid_argument("fine-tune epoch count must be nonnegative");
    const std::vector<int> order = parametric_layers(base.spec);
    if (order.empty()) throw std::invalid_argument("network has no parametric layers");
    auto cost = [&](const BitwidthPolicy& p) {
        return cost_field(hw::simulate_cost(base.spec, p, hw), budget.kind);
    };
    if (budget.limit <= 0.0) throw std::invalid_argument("budget limit must be positive");
    if (cost(BitwidthPolicy::uniform(base.spec, 1)) > budget.limit)
        throw BudgetError("budget is below the all-1-bit floor of the network");

    rl::AgentConfig agent_cfg = cfg.agent;
    agent_cfg.state_dim = quant_state_dim();
    agent_cfg.seed = Rng(cfg.seed).stream(17).seed();
    rl::Agent agent(agent_cfg);

    // One fixed fine-tune seed: a policy's reward never depends on when the
    // search happens to visit it.
    nn::TrainConfig ft;
    ft.epochs = cfg.finetune_epochs;
    ft.lr = cfg.finetune_lr;
    ft.batch = cfg.finetune_batch;
    ft.seed = Rng(cfg.seed).stream(77).seed();

    QuantResult result;
    result.best_accuracy = -1.0;
    const int T = static_cast<int>(order.size());

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        BitwidthPolicy raw;
        std::vector<std::vector<double>> states;
        std::vector<double> actions;
        double prev = 0.0;
        for (int t = 0; t < T; ++t) {
            LayerBits bits;
            for (int which = 0; which < 2; ++which) {
                const bool activation = which == 1;
                const std::vector<double> s = quant_layer_state(
                    base.spec, t, 2 * t + which, prev, activation);
                const double a = agent.act(s, true);
                (activation ? bits.a_bits : bits.w_bits) = action_to_bits(a);
                states.push_back(s);
                actions.push_back(a);
                prev = a;
            }
            raw.layers[order[static_cast<std::size_t>(t)]] = bits;
        }
        const BitwidthPolicy policy = enforce_budget(raw, base.spec, hw, budget);

        Network tuned = base;
        double reward;
        try {
            if (cfg.finetune_epochs > 0)
                reward = qat_finetune(tuned, policy, data, ft);
            else
                reward = quantized_accuracy(tuned, policy, data.val);
        } catch (const TrainingError&) {
            // An exploratory policy whose fine-tune blows up is simply a bad
            // policy; score it at the floor instead of aborting the search.
            reward = 0.0;
        }

        QuantEpisode entry;
        entry.episode = ep;
        entry.reward = reward;
        entry.cost = cost(policy);
        entry.policy = policy;
        result.log.push_back(entry);
        if (reward > result.best_accuracy) {
            result.best_accuracy = reward;
            result.policy = policy;
        }

        for (std::size_t k = 0; k < states.size(); ++k) {
            rl::Transition tr;
            tr.state = states[k];
            tr.action = actions[k];
            tr.reward = reward;
            tr.terminal = k + 1 == states.size();
            tr.next_state = tr.terminal
                                ? std::vector<double>(static_cast<std::size_t>(quant_state_dim()), 0.0)
                                : states[k + 1];
            agent.remember(tr);
        }
        if (agent.ready())
            for (std::size_t k = 0; k < states.size(); ++k) agent.update();
        agent.decay_exploration();
    }
    if (!cfg.agent_checkpoint.empty()) rl::save_agent_file(agent, cfg.agent_checkpoint);
    return result;
}

BitwidthPolicy transfer_policy(rl::Agent agent, const NetSpec& net, const hw::HardwareSpec& hw,
                               const Budget& budget) {
    if (agent.config().state_dim != quant_state_dim())
        throw std::invalid_argument(
            "agent state dimension does not match the quantization featurization");
    const std::vector<int> order = parametric_layers(net);
    if (order.empty()) throw std::invalid_argument("network has no parametric layers");
    BitwidthPolicy raw;
    double prev = 0.0;
    for (int t = 0; t < static_cast<int>(order.size()); ++t) {
        LayerBits bits;
        for (int which = 0; which < 2; ++which) {
            const bool activation = which == 1;
            const std::vector<double> s =
                quant_layer_state(net, t, 2 * t + which, prev, activation);
            const double a = agent.act(s, false);
            (activation ? bits.a_bits : bits.w_bits) = action_to_bits(a);
            prev = a;
        }
        raw.layers[order[static_cast<std::size_t>(t)]] = bits;
    }
    return enforce_budget(raw, net, hw, budget);
}

void save_bits_file(const BitwidthPolicy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open bitwidth policy file for writing: " + path);
    out << "# bitwidth policy v1\n";
    char line[64];
    for (const auto& [idx, bits] : policy.layers) {
        std::snprintf(line, sizeof(line), "layer %d w %d a %d\n", idx, bits.w_bits, bits.a_bits);
        out << line;
    }
    if (!out) throw ConfigError("failed to write bitwidth policy file: " + path);
}

BitwidthPolicy load_bits_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open bitwidth policy file: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "# bitwidth policy v1")
        throw ConfigError("not a bitwidth policy file: " + path);
    BitwidthPolicy policy;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string w_layer, w_w, w_a;
        int idx = -1, w = 0, a = 0;
        ls >> w_layer >> idx >> w_w >> w >> w_a >> a;
        if (!ls || w_layer != "layer" || w_w != "w" || w_a != "a")
            throw ConfigError("malformed bitwidth policy line: " + line);
        if (w < 1 || w > 8 || a < 1 || a > 8)
            throw ConfigError("bitwidths out of range on line: " + line);
        policy.layers[idx] = {w, a};
    }
    return policy;
}

}  // namespace tailor::quant
