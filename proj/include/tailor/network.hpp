#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tailor/layers.hpp"

namespace tailor::nn {

struct Example {
    Tensor x;
    int label = 0;
};

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> val;
};

// Per-layer activations recorded by forward(); required by backward().
struct Trace {
    std::vector<Tensor> acts;  // acts[0] = input, acts[i+1] = output of layer i
};

struct Gradients {
    std::vector<LayerGrads> layers;
    Tensor dinput;
};

// A NetSpec bound to its parameters.
struct Network {
    NetSpec spec;
    std::vector<LayerParams> params;

    static Network init(const NetSpec& spec, Rng& rng);

    // Returns logits (B, num_classes); fills `trace` when non-null.
    Tensor forward(const Tensor& x, Trace* trace = nullptr) const;

    // Throws std::logic_error when the trace does not match this network.
    Gradients backward(const Trace& trace, const Tensor& dlogits) const;

    void apply_sgd(const Gradients& grads, double lr);

    std::int64_t total_macs() const;
};

// Mean softmax cross-entropy over the batch plus the gradient w.r.t. logits.
std::pair<double, Tensor> softmax_xent(const Tensor& logits, const std::vector<int>& labels);

// Stacks examples order[lo, hi) into one (B, ...) batch and collects labels.
Tensor stack_examples(const std::vector<Example>& ex, const std::vector<int>& order, int lo,
                      int hi, std::vector<int>* labels);

// Fraction of examples whose argmax logit equals the label.
double accuracy(const Network& net, const std::vector<Example>& split);

struct TrainConfig {
    double lr = 0.05;
    int epochs = 20;
    int batch = 16;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Network net;
    double val_accuracy = 0.0;
};

// Fresh init from config.seed, then minibatch SGD. Init and batch shuffling
// draw from separate streams of the same seed so ablations move one at a
// time. Throws TrainingError on a non-finite loss.
TrainResult train_sgd(const NetSpec& spec, const Dataset& data, const TrainConfig& cfg);

// Same loop on an already-initialized network (fine-tuning).
double train_from(Network& net, const Dataset& data, const TrainConfig& cfg);

}  // namespace tailor::nn
