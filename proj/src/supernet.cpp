#include "tailor/supernet.hpp"

#include <algorithm>
#include <stdexcept>

namespace tailor::arch {

namespace {

void check_uniform_blocks(const nn::SearchSpace& space) {
    if (space.num_blocks() < 1)
        throw std::invalid_argument("supernet: space needs at least one block");
    if (space.num_choices() < 1)
        throw std::invalid_argument("supernet: space needs at least one choice");
    const nn::BlockShape& first = space.blocks.front();
    for (const nn::BlockShape& b : space.blocks)
        if (b.channels != first.channels || b.height != first.height || b.width != first.width)
            throw std::invalid_argument(
                "supernet: blocks must share one shape so candidate stacks compose");
}

}  // namespace

Supernet Supernet::init(const nn::SearchSpace& space, int in_channels, int num_classes,
                        Rng& rng) {
    check_uniform_blocks(space);
    if (in_channels <= 0) throw std::invalid_argument("supernet: in_channels must be positive");
    if (num_classes < 2) throw std::invalid_argument("supernet: need at least two classes");

    const nn::BlockShape& shape = space.blocks.front();
    Supernet net;
    net.space = space;
    net.in_channels = in_channels;
    net.num_classes = num_classes;
    net.stem_conv = {nn::LayerKind::pointwise_conv2d, in_channels, shape.channels, 1,
                     shape.height, shape.width};
    net.stem_relu = {nn::LayerKind::relu};
    net.head_dense = {nn::LayerKind::dense, shape.channels * shape.height * shape.width,
                      num_classes};
    net.stem_params = nn::init_params(net.stem_conv, rng);

    net.blocks.resize(static_cast<std::size_t>(space.num_blocks()));
    for (int b = 0; b < space.num_blocks(); ++b) {
        SupernetBlock& block = net.blocks[static_cast<std::size_t>(b)];
        for (const std::string& op : space.choices) {
            CandidatePath path;
            path.layers = nn::candidate_op_layers(op, space.blocks[static_cast<std::size_t>(b)]);
            for (const nn::LayerSpec& l : path.layers) path.params.push_back(nn::init_params(l, rng));
            block.paths.push_back(std::move(path));
        }
    }
    net.head_params = nn::init_params(net.head_dense, rng);
    return net;
}

nn::Tensor path_forward(const CandidatePath& path, const nn::Tensor& x) {
    nn::Tensor cur = x;
    for (std::size_t i = 0; i < path.layers.size(); ++i)
        cur = nn::layer_forward(path.layers[i], path.params[i], cur);
    return cur;
}

nn::Tensor mixed_op_forward(const SupernetBlock& block, const std::vector<int>& gates,
                        const nn::Tensor& x) {
    if (gates.size() != block.paths.size())
        throw std::invalid_argument("mixed_op_forward: gate row does not match path count");
    int active = -1;
    for (std::size_t i = 0; i < gates.size(); ++i) {
        if (gates[i] == 0) continue;
        if (gates[i] != 1 || active >= 0)
            throw std::invalid_argument("mixed_op_forward: gates must be one-hot");
        active = static_cast<int>(i);
    }
    if (active < 0) throw std::invalid_argument("mixed_op_forward: gates must be one-hot");
    return path_forward(block.paths[static_cast<std::size_t>(active)], x);
}

nn::NetSpec realize_network(const nn::SearchSpace& space, const std::vector<std::string>& ops,
                            int in_channels, int num_classes) {
    check_uniform_blocks(space);
    if (static_cast<int>(ops.size()) != space.num_blocks())
        throw std::invalid_argument("realize_network: need exactly one op per block");
    const nn::BlockShape& shape = space.blocks.front();
    nn::NetSpec spec;
    spec.num_classes = num_classes;
    spec.layers.push_back({nn::LayerKind::pointwise_conv2d, in_channels, shape.channels, 1,
                           shape.height, shape.width});
    spec.layers.push_back({nn::LayerKind::relu});
    for (int b = 0; b < space.num_blocks(); ++b) {
        const std::string& op = ops[static_cast<std::size_t>(b)];
        if (std::find(space.choices.begin(), space.choices.end(), op) == space.choices.end())
            throw std::invalid_argument("realize_network: op '" + op +
                                        "' is not in the block's choice list");
        const std::vector<nn::LayerSpec> stack =
            nn::candidate_op_layers(op, space.blocks[static_cast<std::size_t>(b)]);
        spec.layers.insert(spec.layers.end(), stack.begin(), stack.end());
    }
    spec.layers.push_back({nn::LayerKind::dense, shape.channels * shape.height * shape.width,
                           num_classes});
    nn::validate(spec);
    return spec;
}

}  // namespace tailor::arch
