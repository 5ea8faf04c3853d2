#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/ddpg.hpp"
#include "tailor/hardware.hpp"
#include "tailor/network.hpp"
#include "tailor/policies.hpp"

namespace tailor::prune {

// Indices of layers whose output channels may be pruned: parametric layers
// except depthwise convolutions (their width is inherited from the producing
// layer) and the final parametric layer (its outputs are the class logits).
std::vector<int> prunable_layers(const nn::NetSpec& net);

struct RoundedAction {
    int kept = 0;
    double actual_sparsity = 0.0;
};

// kept = clamp(round((1 - sparsity) * channels), 1, channels); at least one
// channel always survives.
RoundedAction round_feasible(double sparsity, int channels);

// Output channels ranked by descending L2 weight norm; returns the `kept`
// winners in ascending index order. Ties go to the lower channel index.
std::vector<int> prune_channels(const nn::LayerSpec& spec, const nn::LayerParams& params,
                                int kept);

// Same network shapes with non-surviving output channels zeroed (weights and
// bias), and the consumers' matching input slices zeroed as well.
nn::Network masked_network(const nn::Network& net, const SparsityPolicy& policy);

// Physically smaller network: surviving channels are copied, consumers'
// input dimensions follow, depthwise layers inherit the producer's survivors.
nn::Network shrunk_network(const nn::Network& net, const SparsityPolicy& policy);

// Shape-level counterpart of shrunk_network; enough to cost a policy.
nn::NetSpec shrunk_spec(const nn::NetSpec& net, const SparsityPolicy& policy);

// Total multiply-accumulates of the net once the policy is applied.
std::int64_t policy_macs(const nn::NetSpec& net, const SparsityPolicy& policy);

enum class BudgetKind { macs, latency };

struct PruneBudget {
    BudgetKind kind = BudgetKind::macs;
    double macs_fraction = 0.5;   // of the unpruned net's MACs (kind = macs)
    double latency_s = 0.0;       // absolute roofline seconds (kind = latency)
    hw::HardwareSpec hardware;    // kind = latency only
};

// Cost of a policy in the budget's own unit (MACs or seconds, 8-bit tensors).
double policy_cost(const nn::NetSpec& net, const SparsityPolicy& policy,
                   const PruneBudget& budget);

// Budget value in the same unit as policy_cost.
double budget_limit(const nn::NetSpec& net, const PruneBudget& budget);

// Raises the sparsity action for prunable layer `t` (index into
// prunable_layers order) to the smallest value that keeps the budget
// reachable when every later prunable layer falls back to its keep-one
// floor; never lowers the action. Throws BudgetError when even the floor
// overshoots the budget.
double clip_action_for_budget(double action, int t, const nn::NetSpec& net,
                              const SparsityPolicy& done, const PruneBudget& budget);

// Normalized observation for prunable layer `t`: layer position, kind
// one-hot (dense, full conv, depthwise, pointwise), input/output widths,
// this layer's share of total MACs, share already removed by earlier
// decisions, share still undecided, and the previous action.
std::vector<double> layer_state(const nn::NetSpec& net, int t, const SparsityPolicy& done,
                                double prev_action);

// Feature count of layer_state; the agent's state_dim.
int layer_state_dim();

// Every prunable layer keeps round(ratio * channels), floored at one.
SparsityPolicy uniform_shrink(const nn::NetSpec& net, double ratio);

struct PruneEpisode {
    int episode = 0;
    double reward = 0.0;        // validation accuracy after fine-tune
    double cost = 0.0;          // policy_cost of this episode's policy
    bool feasible = false;      // cost <= budget_limit
    SparsityPolicy policy;
};

struct PruneSearchConfig {
    int episodes = 60;
    int finetune_epochs = 2;
    double finetune_lr = 0.05;
    int finetune_batch = 16;
    rl::AgentConfig agent;      // state_dim is filled in by amc_search
    std::uint64_t seed = 0;
};

struct PruneResult {
    SparsityPolicy policy;      // best feasible policy seen
    double best_accuracy = 0.0;
    std::vector<PruneEpisode> log;
};

// Layer-by-layer pruning search: per episode the agent walks the prunable
// layers emitting sparsity actions (clipped to keep the budget reachable,
// then rounded), the surviving channels are selected by weight magnitude,
// the shrunk net inherits the base weights and is briefly fine-tuned, and
// its validation accuracy is the reward for every step of the episode; a
// fine-tune that diverges scores zero instead of aborting the search.
// Throws BudgetError before episode 1 when the keep-one floor already
// exceeds the budget.
PruneResult amc_search(const nn::Network& base, const nn::Dataset& data,
                       const PruneBudget& budget, const PruneSearchConfig& cfg);

// Structured-text round trip: one line per layer with kept channel count and
// realized sparsity.
void save_policy_file(const SparsityPolicy& policy, const std::string& path);
SparsityPolicy load_policy_file(const std::string& path);

}  // namespace tailor::prune
