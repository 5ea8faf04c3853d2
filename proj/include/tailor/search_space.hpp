#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tailor/layers.hpp"

namespace tailor::nn {

struct BlockShape {
    int channels = 0;
    int height = 0;
    int width = 0;
};

// Per-block candidate-operation space. All blocks share one choice list;
// every candidate preserves (channels, height, width) so blocks compose.
struct SearchSpace {
    std::vector<BlockShape> blocks;
    std::vector<std::string> choices;

    int num_blocks() const { return static_cast<int>(blocks.size()); }
    int num_choices() const { return static_cast<int>(choices.size()); }
    double cardinality() const {
        return std::pow(static_cast<double>(choices.size()), static_cast<double>(blocks.size()));
    }
};

// The six inverted-bottleneck candidates (kernel 3/5/7 x expansion 3/6)
// plus the block-skipping zero op.
std::vector<std::string> default_choices();

SearchSpace make_space(int num_blocks, int channels, int height, int width,
                       std::vector<std::string> choices = default_choices());

// Layer stack realizing one candidate op at a block shape:
//   mb{e}_{k}x{k} -> pointwise expand (C -> eC), relu, depthwise kxk, relu,
//                    pointwise project (eC -> C)
// "zero" and "identity" expand to an empty stack: the block reduces to its
// residual input. Throws std::invalid_argument on unknown names.
std::vector<LayerSpec> candidate_op_layers(const std::string& op, const BlockShape& shape);

}  // namespace tailor::nn
