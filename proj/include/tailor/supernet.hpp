#pragma once

#include <string>
#include <vector>

#include "tailor/network.hpp"
#include "tailor/search_space.hpp"

namespace tailor::arch {

// One candidate operation instantiated at a block: its layer stack bound to
// parameters. Skip candidates ("zero") have an empty stack and return the
// block input unchanged.
struct CandidatePath {
    std::vector<nn::LayerSpec> layers;
    std::vector<nn::LayerParams> params;
};

struct SupernetBlock {
    std::vector<CandidatePath> paths;  // one per entry of space.choices, same order
};

// Over-parameterized network holding every candidate path of every block,
// between a shared stem (pointwise channel mix + relu) and a linear head.
struct Supernet {
    nn::SearchSpace space;
    int in_channels = 0;
    int num_classes = 0;
    nn::LayerSpec stem_conv;
    nn::LayerSpec stem_relu;
    nn::LayerSpec head_dense;
    nn::LayerParams stem_params;
    nn::LayerParams head_params;
    std::vector<SupernetBlock> blocks;

    // All blocks must share one shape (each candidate preserves it, so the
    // chain composes only when the shapes agree).
    static Supernet init(const nn::SearchSpace& space, int in_channels, int num_classes,
                         Rng& rng);
};

// Forward of one candidate's stack; an empty stack passes x through.
nn::Tensor path_forward(const CandidatePath& path, const nn::Tensor& x);

// Block output under a one-hot gate row: only the active path is evaluated.
// The active skip candidate returns the block input (block skipped).
nn::Tensor mixed_op_forward(const SupernetBlock& block, const std::vector<int>& gates,
                        const nn::Tensor& x);

// Plain network realizing one concrete choice per block: the supernet's stem
// and head with exactly the chosen candidate stacks in between.
nn::NetSpec realize_network(const nn::SearchSpace& space, const std::vector<std::string>& ops,
                            int in_channels, int num_classes);

}  // namespace tailor::arch
