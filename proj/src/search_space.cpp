#include "tailor/search_space.hpp"

#include <stdexcept>

namespace tailor::nn {

std::vector<std::string> default_choices() {
    return {"mb3_3x3", "mb3_5x5", "mb3_7x7", "mb6_3x3", "mb6_5x5", "mb6_7x7", "zero"};
}

SearchSpace make_space(int num_blocks, int channels, int height, int width,
                       std::vector<std::string> choices) {
    if (num_blocks <= 0) throw std::invalid_argument("make_space: num_blocks must be positive");
    if (choices.size() < 2) throw std::invalid_argument("make_space: need at least 2 choices");
    SearchSpace space;
    space.blocks.assign(static_cast<std::size_t>(num_blocks), BlockShape{channels, height, width});
    space.choices = std::move(choices);
    for (const std::string& op : space.choices)
        candidate_op_layers(op, space.blocks[0]);  // reject unknown names up front
    return space;
}

std::vector<LayerSpec> candidate_op_layers(const std::string& op, const BlockShape& shape) {
    if (op == "zero" || op == "identity") return {};

    // mb{e}_{k}x{k}
    if (op.size() >= 6 && op.rfind("mb", 0) == 0) {
        const std::size_t us = op.find('_');
        const std::size_t x = op.find('x');
        if (us != std::string::npos && x != std::string::npos && x > us) {
            const int e = std::stoi(op.substr(2, us - 2));
            const int k = std::stoi(op.substr(us + 1, x - us - 1));
            const int k2 = std::stoi(op.substr(x + 1));
            if (e > 0 && k == k2 && k % 2 == 1) {
                const int C = shape.channels, E = e * C;
                LayerSpec expand{LayerKind::pointwise_conv2d, C, E, 1, shape.height, shape.width, e};
                LayerSpec act1{LayerKind::relu};
                LayerSpec dw{LayerKind::depthwise_conv2d, E, E, k, shape.height, shape.width, e};
                LayerSpec act2{LayerKind::relu};
                LayerSpec project{LayerKind::pointwise_conv2d, E, C, 1, shape.height, shape.width, e};
                return {expand, act1, dw, act2, project};
            }
        }
    }
    throw std::invalid_argument("unknown candidate op: " + op);
}

}  // namespace tailor::nn
