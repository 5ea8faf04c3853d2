#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/latency.hpp"
#include "tailor/supernet.hpp"

namespace tailor::arch {

// Per-block architecture parameters; row b scores the candidates of block b.
struct ArchParams {
    std::vector<std::vector<double>> alpha;  // N x K

    static ArchParams zeros(const nn::SearchSpace& space);
};

// Path probabilities p_i = exp(a_i) / sum_j exp(a_j), max-subtracted.
std::vector<double> softmax_probs(const std::vector<double>& alpha_row);

// One-hot row: index j drawn with probability probs[j].
std::vector<int> sample_gates(const std::vector<double>& probs, Rng& rng);

// Chain rule through the softmax: dL/da_i = sum_j dL_dgates[j] * p_j * (d_ij - p_i).
// Rows sum to zero, so a constant gate-gradient never moves alpha.
std::vector<double> arch_gradient(const std::vector<double>& dL_dgates,
                                  const std::vector<double>& probs);

// Latency-aware objective: ce scaled by a one-sided power penalty,
//   loss = ce * a * max(elat / lat_ref, 1)^b.
// At or below the latency target the factor is exactly a.
double hardware_aware_loss(double ce, double elat, double lat_ref, double a, double b);

// Concrete per-block choice with enough provenance to reproduce it.
struct SpecializedArch {
    std::vector<std::string> ops;  // one per block
    std::string hardware;
    double lat_ref = 0.0;
    std::uint64_t seed = 0;
};

void save_arch_file(const SpecializedArch& arch, const std::string& path);
SpecializedArch load_arch_file(const std::string& path);

// Per block: the candidate with maximal alpha; exact ties go to the lowest
// op index.
SpecializedArch derive_final_arch(const ArchParams& params, const nn::SearchSpace& space,
                                  const std::string& hardware, double lat_ref,
                                  std::uint64_t seed);

struct SearchConfig {
    double a = 1.0;          // penalty scale
    double b = 2.0;          // penalty exponent
    double lat_ref = 1e-3;   // latency target, seconds
    int epochs = 10;
    int batch = 16;
    int warmup_epochs = 0;   // weights-only epochs before alpha moves
    double weight_lr = 0.05;
    double alpha_lr = 0.2;
    std::uint64_t seed = 0;
};

struct SearchLogEntry {
    int epoch = 0;
    double train_ce = 0.0;    // mean over the epoch's weight steps
    double arch_loss = 0.0;   // mean over the epoch's architecture steps
    double expected_latency_s = 0.0;  // at the end of the epoch
};

struct SearchResult {
    SpecializedArch arch;
    ArchParams params;
    std::vector<SearchLogEntry> log;
};

// Alternating two-step optimization (after an optional weights-only warm-up):
// odd minibatches update the weights of the sampled active paths by SGD; even
// minibatches update alpha with arch_gradient on the latency-aware objective.
// The gate gradient of the task term is the substituted-path loss (one extra
// forward per candidate through the rest of the network); the latency term
// uses the exact gradient of the expected latency under the current softmax.
// Throws TrainingError (with the epoch) on a non-finite loss.
SearchResult search(const nn::SearchSpace& space, const nn::Dataset& data,
                    const hw::HardwareSpec& hw, const hw::LatencyTable& table,
                    const SearchConfig& cfg);

// Single-path latency of a concrete choice: sum of its table entries.
double arch_latency(const nn::SearchSpace& space, const std::vector<std::string>& ops,
                    const hw::LatencyTable& table);

struct FrontierEntry {
    std::vector<std::string> ops;
    double accuracy = 0.0;
    double latency_s = 0.0;
    bool pareto = false;
};

struct FrontierConfig {
    int epochs = 8;
    int batch = 16;
    double lr = 0.05;
    std::uint64_t seed = 0;
    int cap = 512;     // refuse larger spaces
    int threads = 0;   // 0 = hardware concurrency
};

// Trains every architecture in the space under one budget and marks the
// accuracy-vs-latency Pareto set. Each candidate trains on an RNG stream
// derived from (seed, candidate index), so results are schedule-independent.
// Refuses spaces above cfg.cap (the message includes the cardinality).
std::vector<FrontierEntry> brute_force_frontier(const nn::SearchSpace& space,
                                                const nn::Dataset& data,
                                                const hw::LatencyTable& table,
                                                const FrontierConfig& cfg);

}  // namespace tailor::arch
