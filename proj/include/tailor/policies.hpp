#pragma once

#include <map>

#include "tailor/layers.hpp"

namespace tailor {

// Per-layer bitwidth assignment, keyed by layer index in the NetSpec.
// Only parametric layers appear.
struct LayerBits {
    int w_bits = 8;
    int a_bits = 8;

    bool operator==(const LayerBits&) const = default;
};

struct BitwidthPolicy {
    std::map<int, LayerBits> layers;

    static BitwidthPolicy uniform(const nn::NetSpec& net, int bits) {
        BitwidthPolicy p;
        for (std::size_t i = 0; i < net.layers.size(); ++i)
            if (net.layers[i].parametric()) p.layers[static_cast<int>(i)] = {bits, bits};
        return p;
    }
};

// Per-layer channel-pruning decision, keyed by layer index in the NetSpec.
struct LayerPrune {
    int kept = 0;              // output channels kept, >= 1
    double sparsity = 0.0;     // realized fraction removed

    bool operator==(const LayerPrune&) const = default;
};

struct SparsityPolicy {
    std::map<int, LayerPrune> layers;
};

}  // namespace tailor
