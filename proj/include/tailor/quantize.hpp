#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/ddpg.hpp"
#include "tailor/hardware.hpp"
#include "tailor/network.hpp"
#include "tailor/policies.hpp"

namespace tailor::quant {

// Symmetric linear quantizer. For bits >= 2 the scale is
// s = max|x| / (2^(bits-1) - 1) and values snap to clamp(round(x/s)) * s
// with round-half-away-from-zero; for bits = 1 every element becomes
// s * sign(x) with sign(0) = +1. An all-zero tensor is returned unchanged.
// Throws std::invalid_argument for bits outside [1, 8].
nn::Tensor linear_quantize(const nn::Tensor& x, int bits);

// round(1 + a * 7) clamped to [1, 8]; ties round half to even, so 0.5 -> 4.
int action_to_bits(double a);

enum class CostKind { latency, energy, model_size };

struct Budget {
    CostKind kind = CostKind::latency;
    double limit = 0.0;  // seconds, joules, or bits
};

// The budgeted field of simulate_cost for this policy.
double policy_cost(const nn::NetSpec& net, const BitwidthPolicy& policy,
                   const hw::HardwareSpec& hw, CostKind kind);

// Sequentially lowers bitwidths until the budget holds: sweep layers first to
// last, each layer's weight bits then activation bits, one step per visit
// with floor 1, re-simulating after every step and returning the first
// feasible policy. Never raises a bitwidth; feasible input returns
// unchanged. Throws BudgetError when even the all-1-bit policy is over.
BitwidthPolicy enforce_budget(const BitwidthPolicy& policy, const nn::NetSpec& net,
                              const hw::HardwareSpec& hw, const Budget& budget);

// Copy of the network with each parametric layer's weights (and bias) put
// through linear_quantize at the policy's w_bits.
nn::Network quantized_network(const nn::Network& net, const BitwidthPolicy& policy);

// Forward pass with quantized weights; each parametric layer's output
// activations are quantized to its a_bits (the raw input stays full
// precision). The trace holds the quantized activations for backward().
nn::Tensor quantized_forward(const nn::Network& net, const BitwidthPolicy& policy,
                             const nn::Tensor& x, nn::Trace* trace = nullptr);

double quantized_accuracy(const nn::Network& net, const BitwidthPolicy& policy,
                          const std::vector<nn::Example>& split);

// Quantization-aware fine-tune: forward runs quantized, gradients pass
// straight through both quantizers, and the SGD step lands on the
// full-precision master weights. Returns validation accuracy measured with
// the quantized forward.
double qat_finetune(nn::Network& net, const BitwidthPolicy& policy, const nn::Dataset& data,
                    const nn::TrainConfig& cfg);

// Normalized observation for one bit decision: position among the parametric
// layers, kind one-hot, widths, this layer's MAC share, fraction of the
// episode's 2T decisions already made, MAC share of later layers, previous
// action, and a flag separating the weight (0) from the activation (1)
// decision.
std::vector<double> quant_layer_state(const nn::NetSpec& net, int t, int decisions_made,
                                      double prev_action, bool activation_decision);

// Feature count of quant_layer_state; the agent's state_dim.
int quant_state_dim();

struct QuantEpisode {
    int episode = 0;
    double reward = 0.0;  // validation accuracy of the enforced policy
    double cost = 0.0;    // budgeted cost of the enforced policy
    BitwidthPolicy policy;
};

struct QuantSearchConfig {
    int episodes = 60;
    int finetune_epochs = 1;
    double finetune_lr = 0.05;
    int finetune_batch = 16;
    rl::AgentConfig agent;         // state_dim is filled in by haq_search
    std::uint64_t seed = 0;
    std::string agent_checkpoint;  // when nonempty, the trained agent lands here
};

struct QuantResult {
    BitwidthPolicy policy;  // best feasible policy seen
    double best_accuracy = 0.0;
    std::vector<QuantEpisode> log;
};

// Bit-allocation search: per episode the agent emits weight and activation
// actions for every parametric layer, the policy is projected into budget by
// enforce_budget, a copy of the base net is fine-tuned quantization-aware,
// and its validation accuracy rewards every step of the episode. The
// fine-tune seed is fixed across episodes so a given policy always earns the
// same reward, and a fine-tune that diverges scores zero instead of aborting
// the search. Throws BudgetError when the all-1-bit floor is over budget.
QuantResult haq_search(const nn::Network& base, const nn::Dataset& data,
                       const hw::HardwareSpec& hw, const Budget& budget,
                       const QuantSearchConfig& cfg);

// Frozen-actor rollout: the trained agent assigns bits to `net`'s layers
// without exploration or training, then enforce_budget projects the result.
// Throws std::invalid_argument when the agent's state_dim does not match
// quant_state_dim().
BitwidthPolicy transfer_policy(rl::Agent agent, const nn::NetSpec& net,
                               const hw::HardwareSpec& hw, const Budget& budget);

// Structured-text round trip: one line per layer with weight and activation
// bitwidths.
void save_bits_file(const BitwidthPolicy& policy, const std::string& path);
BitwidthPolicy load_bits_file(const std::string& path);

}  // namespace tailor::quant
