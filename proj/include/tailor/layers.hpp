#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailor/rng.hpp"
#include "tailor/tensor.hpp"

namespace tailor::nn {

enum class LayerKind {
    dense,
    conv2d,
    depthwise_conv2d,
    pointwise_conv2d,
    relu,
    identity,
    zero,
};

const char* kind_name(LayerKind k);
LayerKind kind_from_name(const std::string& name);

// One layer of a network. Convolutions are stride 1 with same padding, so
// spatial size is preserved end to end and only channel counts move.
struct LayerSpec {
    LayerKind kind = LayerKind::identity;
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 1;       // odd, conv kinds only
    int spatial_h = 0;         // input spatial size, conv kinds and zero
    int spatial_w = 0;
    int expansion_ratio = 1;   // carried for block-derived layers, not used by kernels

    bool parametric() const {
        return kind == LayerKind::dense || kind == LayerKind::conv2d ||
               kind == LayerKind::depthwise_conv2d || kind == LayerKind::pointwise_conv2d;
    }
};

// Throws std::invalid_argument when the spec violates a structural rule
// (non-positive channels, even kernel, depthwise channel mismatch, ...).
void validate(const LayerSpec& spec);

struct NetSpec {
    std::vector<LayerSpec> layers;
    int num_classes = 0;
};

// Checks per-layer validity plus adjacent shape compatibility and the
// presence of at least one parametric layer.
void validate(const NetSpec& net);

struct LayerParams {
    Tensor weight;  // dense/pointwise: (C_out, C_in); conv2d: (C_out, C_in, k, k); depthwise: (C, k, k)
    Tensor bias;    // (C_out), parametric kinds only
};

// Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); bias zero.
LayerParams init_params(const LayerSpec& spec, Rng& rng);

// Multiply-accumulate count for a single forward pass at batch 1.
// Non-parametric kinds cost zero.
std::int64_t count_macs(const LayerSpec& spec);

// Number of kernel weights (bias excluded); zero for non-parametric kinds.
std::int64_t weight_count(const LayerSpec& spec);

// Activation element counts at batch 1, used by the byte-traffic models.
std::int64_t input_activations(const LayerSpec& spec);
std::int64_t output_activations(const LayerSpec& spec);

// Output shape excluding the batch dim.
std::vector<int> output_shape(const LayerSpec& spec);

// x is (B, C_in) or (B, C, H, W); dense accepts 4-d input by flattening.
// Throws std::invalid_argument on shape mismatch.
Tensor layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& x);

struct LayerGrads {
    Tensor dweight;
    Tensor dbias;
    Tensor dinput;
};

// Gradients of a scalar loss through one layer. `x` must be the exact input
// that produced the forward output matching `dout`'s shape.
LayerGrads layer_backward(const LayerSpec& spec, const LayerParams& params, const Tensor& x,
                          const Tensor& dout);

}  // namespace tailor::nn
